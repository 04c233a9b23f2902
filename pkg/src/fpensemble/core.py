""" Shared domain types and the similarity primitive.

Every embedding stored or compared anywhere in fpensemble is an
EmbeddingVector: a fixed-length, unit-norm float32 vector. The match score
between two embeddings is their cosine similarity, which for unit vectors is
just the inner product.
"""

import logging
from enum import IntEnum
from itertools import combinations

import numpy as np

from .exceptions import DataError, DimensionMismatch, NormalizationError

log = logging.getLogger(__name__)

DEFAULT_DIM = 192
NORM_TOLERANCE = 1e-5
MAX_ID_BYTES = 4096


class TagEnum(IntEnum):
    """ IntEnum variant that prints as its name and parses leniently """
    def __str__(self):
        return self._name_  # pylint: disable=no-member

    @classmethod
    def parse(cls, string):
        """ Look up a member by name (any case), letter alias or number """
        if isinstance(string, cls):
            return string
        string = str(string).strip()
        for member in cls:
            if string.lower() in (member.name.lower(), member.letter.lower()):
                return member
        try:
            return cls(int(string, 0))
        except ValueError:
            pass
        raise ValueError(f"not a valid {cls.__name__}: {string}")

    @property
    def letter(self):
        return self._name_[0]


class ModelTag(TagEnum):
    """ One member of the ensemble

    The integer values double as the tag byte of the embedding-store format.
    """
    O = 0  # unperturbed
    Y = 1
    X = 2
    R = 3
    M = 4


class ModelSubset(frozenset):
    """ A non-empty set of ensemble members

    Iteration is always in tag order, so anything built by looping over a
    subset is deterministic.
    """
    def __new__(cls, members):
        if isinstance(members, str):
            members = members.replace(',', ' ').split()
            if len(members) == 1 and len(members[0]) > 1:
                members = list(members[0])
        members = [ModelTag.parse(m) for m in members]
        if not members:
            raise DataError("a model subset needs at least one member")
        if len(set(members)) != len(members):
            raise DataError(f"duplicate models in subset: {members}")
        return super().__new__(cls, members)

    @classmethod
    def all(cls):
        return cls(ModelTag)

    def __iter__(self):
        yield from sorted(super().__iter__())

    def __str__(self):
        return ''.join(tag.name for tag in self)

    def __repr__(self):
        return f"{type(self).__name__}('{self}')"

    def subsets(self):
        """ Yield every non-empty subset, smallest first """
        tags = list(self)
        for size in range(1, len(tags) + 1):
            for combo in combinations(tags, size):
                yield type(self)(combo)


def subject_id(value):
    """ Validate a subject id and return it as a str """
    if not isinstance(value, str):
        raise DataError(f"subject ids must be strings, not {type(value)}")
    size = len(value.encode('utf-8'))
    if not 1 <= size <= MAX_ID_BYTES:
        raise DataError(f"subject id must be 1..{MAX_ID_BYTES} bytes "
                        f"of UTF-8, got {size}")
    return value


SubjectId = str


def normalize(values):
    """ Scale a raw vector to unit length as float32

    Raises NormalizationError for zero (or non-finite) vectors rather than
    inventing a direction.
    """
    raw = np.asarray(values, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise NormalizationError(f"expected a non-empty 1-D vector, "
                                 f"got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise NormalizationError("vector contains non-finite values")
    norm = np.linalg.norm(raw)
    if norm == 0:
        raise NormalizationError("cannot normalize an all-zero vector")
    return (raw / norm).astype(np.float32)


class EmbeddingVector:
    """ A fixed-length, unit-norm embedding

    The constructor validates an already-normalized vector; use from_raw() to
    normalize arbitrary input. The values are held in a read-only float32
    array, so instances are safe to share between threads.
    """
    __slots__ = ('values',)

    def __init__(self, values, dim=None):
        arr = np.array(values, dtype=np.float32)
        if arr.ndim != 1:
            raise DataError(f"embeddings are 1-D, got shape {arr.shape}")
        if dim is not None and arr.size != dim:
            raise DimensionMismatch(f"expected {dim} values, got {arr.size}")
        if arr.size == 0:
            raise DataError("embeddings need at least one value")
        if not np.all(np.isfinite(arr)):
            raise DataError("embedding contains non-finite values")
        norm = np.linalg.norm(arr.astype(np.float64))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NormalizationError(f"embedding norm is {norm}, not 1")
        arr.flags.writeable = False
        self.values = arr

    @classmethod
    def from_raw(cls, values):
        """ Normalize a raw feature vector into an embedding """
        return cls(normalize(values))

    @property
    def dim(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        head = ', '.join(f'{v:.4f}' for v in self.values[:3])
        return f"EmbeddingVector(dim={self.dim}, [{head}, ...])"


def cosine_similarity(a, b):
    """ Cosine similarity of two unit embeddings, clamped to [-1, 1]

    The products are accumulated in float64 and in a fixed order, so the
    result is exactly symmetric.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot compare {a.dim}-d and {b.dim}-d "
                                "embeddings")
    score = float(np.dot(a.values.astype(np.float64),
                         b.values.astype(np.float64)))
    return min(1.0, max(-1.0, score))
