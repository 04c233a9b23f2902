""" Synthetic fingerprint-like datasets.

Each subject gets a ridge pattern: a cosine grating whose orientation drifts
smoothly across the image, with its own base orientation, ridge frequency
and phase. An impression of a subject is that pattern sampled at a small
integer offset, plus Gaussian noise. With zero noise, two impressions of a
subject are exact translations of each other.

Every random draw comes from a generator seeded by (seed, subject) or
(seed, subject, impression), so a dataset is reproducible piece by piece
regardless of generation order.

A dataset directory looks like this:

    labels.tsv                 image, subject, impression, minutiae
    images/s0000_0.pgm
    minutiae/s0000.minu
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from more_itertools import unique_everseen as unique

from .exceptions import DataError
from .imaging import GrayscaleImage, read_pgm, write_pgm
from .minutiae import MinutiaKind, MinutiaPoint, MinutiaeTemplate
from .minutiae import read_minutiae, write_minutiae
from .util import readtsv, dumptsv, atomic_write

log = logging.getLogger(__name__)

LABEL_COLUMNS = ['image', 'subject', 'impression', 'minutiae']


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 50
    impressions_per_subject: int = 4
    image_size: int = 128
    noise_level: float = 0.2
    minutiae_per_subject: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise DataError("n_subjects must be positive")
        if self.impressions_per_subject < 1:
            raise DataError("impressions_per_subject must be positive")
        if self.image_size < 16:
            raise DataError("image_size must be at least 16")
        if not 0 <= self.noise_level < 1:
            raise DataError(f"noise_level must be in [0, 1), "
                            f"got {self.noise_level}")
        if self.minutiae_per_subject < 0:
            raise DataError("minutiae_per_subject must not be negative")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must be an unsigned 64-bit integer")

    @property
    def max_shift(self):
        return max(1, self.image_size // 16)


def subject_name(index):
    return f"s{index:04d}"


def image_name(subject, impression):
    return f"{subject}_{impression}"


def subject_of(image_id):
    """ The subject part of an image id (everything before the last '_') """
    subject, sep, impression = image_id.rpartition('_')
    if not sep or not subject or not (impression.isascii()
                                      and impression.isdigit()):
        raise DataError(f"not an image id: {image_id!r}")
    return subject


@dataclass(frozen=True)
class Sample:
    image_id: str
    subject: str
    impression: int
    image: GrayscaleImage
    minutiae: Optional[MinutiaeTemplate] = None


class Dataset:
    """ Labelled impressions, in subject then impression order """

    def __init__(self, samples, root=None):
        self.samples = sorted(samples, key=lambda s: (s.subject, s.impression))
        self.root = root
        self._index = {s.image_id: s for s in self.samples}
        if len(self._index) != len(self.samples):
            raise DataError("dataset has duplicate image ids")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, image_id):
        return self._index[image_id]

    def __repr__(self):
        return (f"Dataset({len(self.subjects())} subjects, "
                f"{len(self)} images, root={self.root})")

    def subjects(self):
        return list(unique(s.subject for s in self.samples))

    def subject_impressions(self):
        """ Map of subject -> impression indices, as build_pairs wants """
        out = {}
        for s in self.samples:
            out.setdefault(s.subject, []).append(s.impression)
        return out

    def sample(self, subject, impression):
        return self._index[image_name(subject, impression)]


def _subject_params(spec, subject):
    rng = np.random.default_rng([spec.seed, subject])
    return {
        'theta': rng.uniform(0, np.pi),
        'freq': rng.uniform(0.07, 0.14),
        'phase': rng.uniform(0, 2 * np.pi),
        'swirl': rng.uniform(0.3, 0.9, size=2),
        'waves': rng.uniform(0.5, 1.5, size=2),
        'offsets': rng.uniform(0, 2 * np.pi, size=2),
        'rng': rng,
    }


def ridge_pattern(spec, params, dx=0, dy=0):
    """ A subject's pattern over the image window shifted by (dx, dy), float64 """
    size = spec.image_size
    ys, xs = np.mgrid[0:size, 0:size]
    xs = xs + dx
    ys = ys + dy
    a, b = params['swirl']
    ka, kb = params['waves']
    pa, pb = params['offsets']
    theta = (params['theta']
             + a * np.sin(2 * np.pi * ka * xs / size + pa)
             + b * np.cos(2 * np.pi * kb * ys / size + pb))
    wave = 2 * np.pi * params['freq'] * (xs * np.cos(theta)
                                         + ys * np.sin(theta))
    return 127.5 + 127.5 * np.cos(wave + params['phase'])


def _minutiae(spec, rng):
    size = spec.image_size
    kinds = list(MinutiaKind)
    points = []
    for _ in range(spec.minutiae_per_subject):
        x, y = (int(v) for v in rng.integers(0, size, size=2))
        angle = int(rng.integers(0, 3600)) / 10
        kind = kinds[int(rng.integers(0, len(kinds)))]
        quality = int(rng.integers(0, 101))
        points.append(MinutiaPoint(x, y, angle, kind, quality))
    return MinutiaeTemplate(size, size, points)


def impression_image(spec, params, subject, impression):
    rng = np.random.default_rng([spec.seed, subject, impression])
    dx, dy = (int(v) for v in rng.integers(-spec.max_shift,
                                           spec.max_shift + 1, size=2))
    values = ridge_pattern(spec, params, dx, dy)
    if spec.noise_level > 0:
        values = values + rng.normal(0, spec.noise_level * 127.5,
                                     size=values.shape)
    pixels = np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)
    return GrayscaleImage(pixels)


def synthesize(spec, bar=None):
    """ Generate a dataset in memory """
    samples = []
    for s in range(spec.n_subjects):
        subject = subject_name(s)
        params = _subject_params(spec, s)
        template = _minutiae(spec, params['rng'])
        for i in range(spec.impressions_per_subject):
            samples.append(Sample(image_name(subject, i), subject, i,
                                  impression_image(spec, params, s, i),
                                  template))
            if bar:
                bar()
    log.info("synthesized %s subjects x %s impressions (%spx, noise %s)",
             spec.n_subjects, spec.impressions_per_subject, spec.image_size,
             spec.noise_level)
    return Dataset(samples)


def save_dataset(dataset, outdir):
    """ Write a dataset as images, minutiae files and a label table """
    outdir = Path(outdir)
    rows = []
    written = set()
    for sample in dataset:
        image_path = Path('images', f'{sample.image_id}.pgm')
        write_pgm(sample.image, outdir / image_path)
        minutiae = ''
        if sample.minutiae is not None:
            minutiae = Path('minutiae', f'{sample.subject}.minu')
            if sample.subject not in written:
                write_minutiae(sample.minutiae, outdir / minutiae)
                written.add(sample.subject)
            minutiae = minutiae.as_posix()
        rows.append({'image': image_path.as_posix(),
                     'subject': sample.subject,
                     'impression': sample.impression,
                     'minutiae': minutiae})
    atomic_write(outdir / 'labels.tsv', dumptsv(rows, LABEL_COLUMNS))
    return Dataset(dataset.samples, outdir)


def generate_synthetic(spec, outdir, bar=None):
    """ Generate a dataset and write it under `outdir` """
    return save_dataset(synthesize(spec, bar), outdir)


def load_dataset(root, bar=None):
    """ Read a dataset directory written by generate_synthetic """
    root = Path(root)
    templates = {}
    samples = []
    for row in readtsv(root / 'labels.tsv'):
        missing = set(LABEL_COLUMNS) - set(row)
        if missing:
            raise DataError(f"{root / 'labels.tsv'}: missing columns "
                            f"{sorted(missing)}")
        image = read_pgm(root / row['image'])
        template = None
        if row['minutiae']:
            if row['minutiae'] not in templates:
                templates[row['minutiae']] = read_minutiae(
                        root / row['minutiae'])
            template = templates[row['minutiae']]
        try:
            impression = int(row['impression'])
        except ValueError as ex:
            raise DataError(f"bad impression index {row['impression']!r}") \
                from ex
        samples.append(Sample(image_name(row['subject'], impression),
                              row['subject'], impression, image, template))
        if bar:
            bar()
    log.info("loaded %s images from %s", len(samples), root)
    return Dataset(samples, root)
