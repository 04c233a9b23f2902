""" Grayscale images, PGM I/O and the ensemble input transformations.

Each ensemble member sees the fingerprint through one transformation:

    Identity    the image as given
    FlipX       reflected about the x axis (rows reversed)
    FlipY       reflected about the y axis (columns reversed)
    Ridge       adaptive local-mean binarization
    MinuGate    sharp inside 64x64 patches around minutiae, blurred elsewhere

All transforms preserve the image dimensions and never modify their input.
"""

import logging
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import TagEnum, ModelTag
from .exceptions import DataError, PgmFormatError, MinutiaOutOfBounds
from .exceptions import MissingMinutiae
from .util import flexopen, atomic_write

log = logging.getLogger(__name__)

PATCH_SIZE = 64
DEFAULT_KERNEL = 11
DEFAULT_BLOCK = 15
DEFAULT_OFFSET = 2.0


class GrayscaleImage:
    """ An 8-bit grayscale raster

    Pixels are held as a read-only (height, width) uint8 array, indexed
    [row, column].
    """
    __slots__ = ('pixels',)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"images must be 2-D and non-empty, "
                            f"got shape {arr.shape}")
        arr.flags.writeable = False
        self.pixels = arr

    @classmethod
    def from_bytes(cls, width, height, data):
        """ Build an image from row-major pixel bytes """
        if len(data) != width * height:
            raise DataError(f"expected {width * height} pixels, "
                            f"got {len(data)}")
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        return cls(arr.reshape(height, width))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def tobytes(self):
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, GrayscaleImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.shape, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayscaleImage({self.width}x{self.height})"


@dataclass(frozen=True)
class BlurParams:
    """ Gaussian blur kernel size and spread

    If sigma is omitted it is derived from the kernel size with the usual
    0.3 * ((k - 1) / 2 - 1) + 0.8 rule.
    """
    kernel_size: int = DEFAULT_KERNEL
    sigma: float = field(default=None)

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 != 1:
            raise DataError(f"kernel size must be odd and positive, "
                            f"got {self.kernel_size}")
        if self.sigma is None:
            sigma = 0.3 * ((self.kernel_size - 1) / 2 - 1) + 0.8
            object.__setattr__(self, 'sigma', sigma)
        if not self.sigma > 0:
            raise DataError(f"sigma must be positive, got {self.sigma}")

    def kernel(self):
        """ The normalized 1-D kernel, float64 """
        half = self.kernel_size // 2
        offsets = np.arange(-half, half + 1, dtype=np.float64)
        weights = np.exp(-(offsets ** 2) / (2 * self.sigma ** 2))
        return weights / weights.sum()


class TransformTag(TagEnum):
    """ The input transformation behind each ensemble member """
    Identity = 0
    FlipY = 1
    FlipX = 2
    Ridge = 3
    MinuGate = 4

    @property
    def letter(self):
        return self.model.name

    @property
    def model(self):
        """ The ModelTag of the ensemble member trained on this view """
        return ModelTag(int(self))

    @classmethod
    def for_model(cls, tag):
        return cls(int(ModelTag.parse(tag)))


def flip_x(img):
    """ Reflect about the x axis: output[r, c] = input[h-1-r, c] """
    return GrayscaleImage(img.pixels[::-1, :])


def flip_y(img):
    """ Reflect about the y axis: output[r, c] = input[r, w-1-c] """
    return GrayscaleImage(img.pixels[:, ::-1])


def _round8(values):
    """ Round half away from zero and clip to the 8-bit range """
    rounded = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def gaussian_blur(img, params=None):
    """ Separable Gaussian blur with edge replication """
    params = params or BlurParams()
    kernel = params.kernel()
    data = img.pixels.astype(np.float64)
    data = ndimage.correlate1d(data, kernel, axis=1, mode='nearest')
    data = ndimage.correlate1d(data, kernel, axis=0, mode='nearest')
    return GrayscaleImage(_round8(data))


def _block_sums(pixels, block):
    """ Exact integer sums over each pixel's block x block neighbourhood """
    half = block // 2
    padded = np.pad(pixels.astype(np.int64), half, mode='edge')
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1),
                        dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = pixels.shape
    return (integral[block:block + h, block:block + w]
            - integral[:h, block:block + w]
            - integral[block:block + h, :w]
            + integral[:h, :w])


def ridge_binarize(img, block=DEFAULT_BLOCK, offset=DEFAULT_OFFSET):
    """ Adaptive local-mean binarization

    A pixel becomes ridge (0) when it is strictly darker than its local mean
    minus `offset`, otherwise background (255). Neighbourhood sums are exact
    integers, so ties with the mean are decided consistently.
    """
    if block < 3 or block % 2 != 1:
        raise DataError(f"block must be odd and at least 3, got {block}")
    area = block * block
    sums = _block_sums(img.pixels, block)
    ridge = img.pixels.astype(np.int64) * area < sums - offset * area
    return GrayscaleImage(np.where(ridge, 0, 255).astype(np.uint8))


def patch_mask(width, height, points, size=PATCH_SIZE):
    """ Boolean (height, width) mask of the union of minutia patches

    Each patch covers [x - size/2, x + size/2) by [y - size/2, y + size/2),
    clipped at the image borders.
    """
    mask = np.zeros((height, width), dtype=bool)
    half = size // 2
    for point in points:
        if not (0 <= point.x < width and 0 <= point.y < height):
            raise MinutiaOutOfBounds(f"minutia at ({point.x}, {point.y}) is "
                                     f"outside a {width}x{height} image")
        top, left = max(point.y - half, 0), max(point.x - half, 0)
        mask[top:point.y - half + size, left:point.x - half + size] = True
    return mask


def minutiae_soft_gate(img, minutiae, params=None):
    """ Keep minutia neighbourhoods sharp and blur everything else """
    mask = patch_mask(img.width, img.height, minutiae.points)
    blurred = gaussian_blur(img, params)
    return GrayscaleImage(np.where(mask, img.pixels, blurred.pixels))


def apply_transform(img, tag, minutiae=None, blur=None,
                    block=DEFAULT_BLOCK, offset=DEFAULT_OFFSET):
    """ Apply the transformation named by `tag` """
    tag = TransformTag.parse(tag)
    if tag is TransformTag.Identity:
        return img
    if tag is TransformTag.FlipX:
        return flip_x(img)
    if tag is TransformTag.FlipY:
        return flip_y(img)
    if tag is TransformTag.Ridge:
        return ridge_binarize(img, block, offset)
    if minutiae is None:
        raise MissingMinutiae("the MinuGate transform needs a minutiae "
                              "template")
    return minutiae_soft_gate(img, minutiae, blur)


#
# PGM I/O
#

_TOKEN = re.compile(rb'\s*(?:#[^\n]*\n\s*)*(\S+)')


def _header_tokens(data, count):
    """ Pull `count` whitespace-separated header tokens, skipping comments

    Returns the tokens and the offset just past the last one.
    """
    pos, tokens = 0, []
    for _ in range(count):
        match = _TOKEN.match(data, pos)
        if not match:
            raise PgmFormatError("truncated header")
        tokens.append(match.group(1))
        pos = match.end()
    return tokens, pos


def parse_pgm(data, source=None):
    """ Parse a binary (P5) or ASCII (P2) 8-bit PGM image """
    try:
        (magic, width, height, maxval), pos = _header_tokens(data, 4)
        width, height, maxval = int(width), int(height), int(maxval)
    except ValueError as ex:
        raise PgmFormatError(f"bad header: {ex}", source) from ex
    except PgmFormatError as ex:
        raise PgmFormatError(ex.msg, source) from ex
    if magic not in (b'P5', b'P2'):
        raise PgmFormatError(f"unsupported magic {magic!r}", source)
    if width < 1 or height < 1:
        raise PgmFormatError(f"bad dimensions {width}x{height}", source)
    if maxval != 255:
        raise PgmFormatError(f"only maxval 255 is supported, got {maxval}",
                             source)
    count = width * height
    if magic == b'P5':
        # exactly one whitespace byte separates the header from the raster
        raster = data[pos + 1:]
        if len(raster) != count:
            raise PgmFormatError(f"expected {count} raster bytes, "
                                 f"got {len(raster)}", source)
        return GrayscaleImage.from_bytes(width, height, raster)
    values = data[pos:].split()
    if len(values) != count:
        raise PgmFormatError(f"expected {count} pixel values, "
                             f"got {len(values)}", source)
    try:
        pixels = np.array([int(v) for v in values], dtype=np.int64)
    except ValueError as ex:
        raise PgmFormatError(f"bad pixel value: {ex}", source) from ex
    if pixels.min() < 0 or pixels.max() > 255:
        raise PgmFormatError("pixel value out of range", source)
    return GrayscaleImage(pixels.reshape(height, width))


def format_pgm(img):
    """ Serialize an image as binary P5 """
    header = f"P5\n{img.width} {img.height}\n255\n".encode('ascii')
    return header + img.tobytes()


def read_pgm(path):
    """ Read a PGM image from a path or open binary file """
    with flexopen(path, 'rb') as f:
        return parse_pgm(f.read(), getattr(f, 'name', None))


def write_pgm(img, path):
    """ Write an image as binary P5, atomically when given a path """
    atomic_write(path, format_pgm(img))
