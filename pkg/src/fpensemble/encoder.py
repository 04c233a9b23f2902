""" Reference encoder: image -> fixed-length embedding.

This stands in for a learned fingerprint encoder so the rest of the pipeline
can run end to end. It is deliberately simple and fully deterministic:

1. central-difference gradients (zero on the one-pixel border);
2. orientation folded into [0, 180) degrees and split into `bins` bins;
3. magnitude-weighted orientation histograms over a `grid` x `grid` cell
   layout, giving grid * grid * bins raw features;
4. a fixed, seeded +/-1 random projection down to `dim` values;
5. L2 normalization.

Embeddings produced elsewhere (by a real network) enter the system through
embedding-store files instead; see gallery.Gallery.load.
"""

import logging
import threading
from dataclasses import dataclass

import numpy as np

from .core import EmbeddingVector, ModelSubset, DEFAULT_DIM, normalize
from .exceptions import DataError, DegenerateImage, ImageTooSmall
from .exceptions import MissingMinutiae, NormalizationError
from .imaging import TransformTag, apply_transform, BlurParams
from .imaging import DEFAULT_BLOCK, DEFAULT_OFFSET

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = DEFAULT_DIM
    grid: int = 8
    bins: int = 12
    projection_seed: int = 42

    def __post_init__(self):
        if self.dim < 2:
            raise DataError(f"dim must be at least 2, got {self.dim}")
        if self.grid < 1:
            raise DataError(f"grid must be at least 1, got {self.grid}")
        if self.bins < 2:
            raise DataError(f"bins must be at least 2, got {self.bins}")
        if not 0 <= self.projection_seed < 2**64:
            raise DataError("projection seed must be an unsigned 64-bit int")

    @property
    def features(self):
        return self.grid * self.grid * self.bins


_projections = {}
_projection_lock = threading.Lock()


def projection(cfg):
    """ The (dim, features) +/-1 projection matrix for a config

    Built once per config and shared; the returned array is read-only.
    """
    key = (cfg.dim, cfg.features, cfg.projection_seed)
    matrix = _projections.get(key)
    if matrix is None:
        with _projection_lock:
            matrix = _projections.get(key)
            if matrix is None:
                rng = np.random.default_rng(cfg.projection_seed)
                signs = rng.integers(0, 2, size=(cfg.dim, cfg.features),
                                     dtype=np.int8)
                matrix = (signs * 2 - 1).astype(np.float64)
                matrix.flags.writeable = False
                _projections[key] = matrix
                log.debug("built %sx%s projection (seed %s)", cfg.dim,
                          cfg.features, cfg.projection_seed)
    return matrix


def gradients(pixels):
    """ Central-difference gradients (gx, gy) as float64, zero at borders """
    data = np.asarray(pixels, dtype=np.float64)
    gx = np.zeros_like(data)
    gy = np.zeros_like(data)
    gx[:, 1:-1] = (data[:, 2:] - data[:, :-2]) / 2
    gy[1:-1, :] = (data[2:, :] - data[:-2, :]) / 2
    return gx, gy


def orientation_histograms(img, cfg):
    """ The raw grid x grid x bins feature vector, before projection """
    if img.width < cfg.grid or img.height < cfg.grid:
        raise ImageTooSmall(f"{img.width}x{img.height} image is smaller "
                            f"than the {cfg.grid}x{cfg.grid} encoder grid")
    gx, gy = gradients(img.pixels)
    magnitude = np.hypot(gx, gy)
    theta = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.minimum((theta * cfg.bins / 180.0).astype(np.int64),
                      cfg.bins - 1)
    rows = np.arange(img.height) * cfg.grid // img.height
    cols = np.arange(img.width) * cfg.grid // img.width
    cells = rows[:, None] * cfg.grid + cols[None, :]
    index = (cells * cfg.bins + bins).ravel()
    return np.bincount(index, weights=magnitude.ravel(),
                       minlength=cfg.features)


def encode(img, cfg=None):
    """ Encode one image into a unit-norm embedding """
    cfg = cfg or EncoderConfig()
    hist = orientation_histograms(img, cfg)
    if not hist.any():
        raise DegenerateImage(f"{img!r} has no gradient energy")
    raw = projection(cfg) @ hist
    try:
        return EmbeddingVector(normalize(raw))
    except NormalizationError as ex:
        raise DegenerateImage(f"{img!r}: {ex}") from ex


def encode_ensemble(img, minutiae, subset, cfg=None, blur=None,
                    block=DEFAULT_BLOCK, offset=DEFAULT_OFFSET):
    """ Encode an image under every transformation in `subset`

    Returns a dict keyed by ModelTag, in tag order.
    """
    subset = ModelSubset(subset)
    cfg = cfg or EncoderConfig()
    blur = blur or BlurParams()
    out = {}
    for tag in subset:
        transform = TransformTag.for_model(tag)
        if transform is TransformTag.MinuGate and minutiae is None:
            raise MissingMinutiae("model M is in the subset but no "
                                  "minutiae template was given")
        view = apply_transform(img, transform, minutiae, blur, block, offset)
        out[tag] = encode(view, cfg)
    return out
