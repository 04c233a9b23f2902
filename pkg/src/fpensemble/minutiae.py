""" Minutiae templates and their text format.

A template file looks like this:

    MINU v1 256 256
    # x y angle kind quality
    10 20 90.0 E 80
    112 47 271.5 B 64

The header gives the image width and height. Each point line holds integer
pixel coordinates, the direction in degrees, a kind letter (E=ending,
B=bifurcation, O=other) and an integer quality in [0, 100]. Fields are
separated by single spaces, lines end in LF, and lines starting with '#'
are comments.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

from .exceptions import DataError
from .exceptions import MinutiaeHeaderError, MinutiaeSyntaxError
from .exceptions import MinutiaeBoundsError
from .util import flexopen, atomic_write

log = logging.getLogger(__name__)

MAGIC = 'MINU'
VERSION = 'v1'


class MinutiaKind(Enum):
    Ending = 'E'
    Bifurcation = 'B'
    Other = 'O'

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class MinutiaPoint:
    x: int
    y: int
    angle: float
    kind: MinutiaKind = MinutiaKind.Other
    quality: int = 0

    def __post_init__(self):
        if not 0 <= self.angle < 360:
            raise DataError(f"angle must be in [0, 360), got {self.angle}")
        if not 0 <= self.quality <= 100:
            raise DataError(f"quality must be in [0, 100], "
                            f"got {self.quality}")

    def in_bounds(self, width, height):
        return 0 <= self.x < width and 0 <= self.y < height


@dataclass(frozen=True)
class MinutiaeTemplate:
    """ The minutiae detected on one image

    Points keep their file order. A template may have no points at all.
    """
    width: int
    height: int
    points: Tuple[MinutiaPoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"bad template dimensions "
                            f"{self.width}x{self.height}")
        object.__setattr__(self, 'points', tuple(self.points))
        for point in self.points:
            if not point.in_bounds(self.width, self.height):
                raise DataError(f"minutia at ({point.x}, {point.y}) is "
                                f"outside {self.width}x{self.height}")

    def __len__(self):
        return len(self.points)


def _digits(text):
    return text.isascii() and text.isdigit()


def _int(text, what, lineno):
    # int() accepts '+5', ' 5' and '5_0', isdigit() accepts '\u00b2'
    if not (_digits(text) or (text[:1] == '-' and _digits(text[1:]))):
        raise MinutiaeSyntaxError(f"bad {what}: {text!r}", lineno=lineno)
    return int(text)


def _parse_point(line, lineno, width, height):
    parts = line.split(' ')
    if len(parts) != 5:
        raise MinutiaeSyntaxError(f"expected 5 fields, got {len(parts)}",
                                  lineno=lineno)
    xs, ys, angles, kinds, qualities = parts
    x = _int(xs, 'x', lineno)
    y = _int(ys, 'y', lineno)
    quality = _int(qualities, 'quality', lineno)
    try:
        angle = float(angles)
    except ValueError as ex:
        raise MinutiaeSyntaxError(f"bad angle: {angles!r}",
                                  lineno=lineno) from ex
    try:
        kind = MinutiaKind(kinds)
    except ValueError as ex:
        raise MinutiaeSyntaxError(f"bad kind letter: {kinds!r}",
                                  lineno=lineno) from ex
    if not (0 <= x < width and 0 <= y < height):
        raise MinutiaeBoundsError(f"point ({x}, {y}) outside "
                                  f"{width}x{height}", lineno=lineno)
    if not 0 <= angle < 360:
        raise MinutiaeBoundsError(f"angle {angle} outside [0, 360)",
                                  lineno=lineno)
    if not 0 <= quality <= 100:
        raise MinutiaeBoundsError(f"quality {quality} outside [0, 100]",
                                  lineno=lineno)
    return MinutiaPoint(x, y, angle, kind, quality)


def _parse_header(line):
    parts = line.split(' ')
    if len(parts) != 4 or parts[0] != MAGIC:
        raise MinutiaeHeaderError(f"expected '{MAGIC} {VERSION} <width> "
                                  f"<height>', got {line!r}", lineno=1)
    if parts[1] != VERSION:
        raise MinutiaeHeaderError(f"unsupported version {parts[1]!r}",
                                  lineno=1)
    if not (_digits(parts[2]) and _digits(parts[3])):
        raise MinutiaeHeaderError(f"bad dimensions in {line!r}", lineno=1)
    width, height = int(parts[2]), int(parts[3])
    if width < 1 or height < 1:
        raise MinutiaeHeaderError(f"bad dimensions {width}x{height}",
                                  lineno=1)
    return width, height


def parse_minutiae_text(data, source=None):
    """ Parse a minutiae template from bytes (or str) """
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode('utf-8')
        except UnicodeDecodeError as ex:
            raise MinutiaeSyntaxError(f"not UTF-8: {ex}", source) from ex
    lines = data.split('\n')
    try:
        width, height = _parse_header(lines[0])
        points = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line or line.startswith('#'):
                continue
            points.append(_parse_point(line, lineno, width, height))
    except (MinutiaeHeaderError, MinutiaeSyntaxError,
            MinutiaeBoundsError) as ex:
        if source and not ex.source:
            ex.source = source
        raise
    log.debug("parsed %s minutiae (%sx%s)", len(points), width, height)
    return MinutiaeTemplate(width, height, points)


def _angle_text(angle):
    # quantize to tenths, wrapping 359.96 -> 0.0 rather than 360.0
    tenths = round(angle * 10) % 3600
    return f"{tenths // 10}.{tenths % 10}"


def serialize_minutiae_text(template):
    """ Render a template in canonical text form, as UTF-8 bytes """
    lines = [f"{MAGIC} {VERSION} {template.width} {template.height}"]
    lines.extend(f"{p.x} {p.y} {_angle_text(p.angle)} {p.kind} {p.quality}"
                 for p in template.points)
    return ('\n'.join(lines) + '\n').encode('utf-8')


def read_minutiae(path):
    with flexopen(path, 'rb') as f:
        return parse_minutiae_text(f.read(), getattr(f, 'name', str(path)))


def write_minutiae(template, path):
    atomic_write(path, serialize_minutiae_text(template))
