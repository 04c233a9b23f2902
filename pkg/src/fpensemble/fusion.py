""" Ensemble fusion: feature, score and decision level.

Feature fusion collapses a set of supervisor embeddings into one. The
weighted objective

    L(fe) = sum_c w_c * ||fe - F_c||^2

is minimized by the weighted mean of the supervisors; feature_fuse_centroid
returns that mean rescaled to unit length so it can be stored and compared
like any other embedding.

Score fusion combines same-model similarity scores with a mean or median.
Decision fusion thresholds each model separately (at its own calibrated
threshold for a common FMR) and accepts when enough models accept; the OR
rule is a quorum of one.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .core import ModelTag, EmbeddingVector, normalize
from .exceptions import DataError, DimensionMismatch, MissingWeight
from .exceptions import MissingThreshold, EmptyScores, DegenerateCentroid
from .exceptions import NormalizationError, ConfigError
from .util import canonical_json, flexopen, atomic_write

log = logging.getLogger(__name__)

CALIBRATION_EPSILON = 1e-6
CENTROID_MIN_NORM = 1e-9
DEFAULT_WEIGHTS = {ModelTag.R: 0.08, ModelTag.M: 0.05}


class ScoreRule(Enum):
    Mean = 'mean'
    Median = 'median'

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, string):
        if isinstance(string, cls):
            return string
        try:
            return cls(str(string).lower())
        except ValueError:
            raise ValueError(f"not a score rule: {string}") from None


@dataclass(frozen=True)
class FusionWeights:
    """ Per-model supervisor weights

    Weights are used as given; only their ratios affect the centroid.
    """
    weights: Mapping[ModelTag, float] = field(
            default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        weights = {ModelTag.parse(k): float(v)
                   for k, v in dict(self.weights).items()}
        for tag, weight in weights.items():
            if not math.isfinite(weight) or weight < 0:
                raise DataError(f"weight for {tag} must be finite and "
                                f"non-negative, got {weight}")
        if not any(w > 0 for w in weights.values()):
            raise DataError("at least one fusion weight must be positive")
        object.__setattr__(self, 'weights', dict(sorted(weights.items())))

    @classmethod
    def for_subset(cls, subset, overrides=None):
        """ Default weights for a supervisor subset

        R and M get their usual 0.08/0.05; any other member gets 1.0.
        """
        overrides = {ModelTag.parse(k): v
                     for k, v in (overrides or {}).items()}
        return cls({tag: overrides.get(tag, DEFAULT_WEIGHTS.get(tag, 1.0))
                    for tag in subset})

    def __getitem__(self, tag):
        try:
            return self.weights[tag]
        except KeyError:
            raise MissingWeight(f"no fusion weight for model {tag}") from None

    def to_mapping(self):
        return {str(tag): weight for tag, weight in self.weights.items()}


def _check_dims(embeddings):
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise DimensionMismatch(f"embeddings disagree on dim: {sorted(dims)}")


def supervision_loss(fe, supervisors, weights):
    """ Weighted sum of squared distances from `fe` to each supervisor

    `fe` may be an EmbeddingVector or a raw vector (the unnormalized
    centroid, for instance).
    """
    fe = fe.values if isinstance(fe, EmbeddingVector) else fe
    fe = np.asarray(fe, dtype=np.float64)
    total = 0.0
    for tag, sup in supervisors.items():
        if sup.dim != fe.size:
            raise DimensionMismatch(f"supervisor {tag} is {sup.dim}-d, "
                                    f"fused embedding is {fe.size}-d")
        diff = fe - sup.values.astype(np.float64)
        total += weights[tag] * float(diff @ diff)
    return total


def weighted_centroid(supervisors, weights):
    """ The unnormalized minimizer of supervision_loss, float64 """
    if not supervisors:
        raise DataError("feature fusion needs at least one supervisor")
    _check_dims(supervisors.values())
    ws = np.array([weights[tag] for tag in supervisors], dtype=np.float64)
    if not ws.sum() > 0:
        raise DataError("supervisor weights sum to zero")
    stack = np.stack([sup.values.astype(np.float64)
                      for sup in supervisors.values()])
    return ws @ stack / ws.sum()


def feature_fuse_centroid(supervisors, weights):
    """ Fuse supervisor embeddings into their unit-length weighted centroid """
    centroid = weighted_centroid(supervisors, weights)
    if len(supervisors) == 1:
        # the centroid of one point is the point; skip the rescaling round-off
        return next(iter(supervisors.values()))
    if np.linalg.norm(centroid) < CENTROID_MIN_NORM:
        raise DegenerateCentroid("supervisors cancel out; the centroid has "
                                 "no direction")
    try:
        return EmbeddingVector(normalize(centroid))
    except NormalizationError as ex:
        raise DegenerateCentroid(str(ex)) from ex


def fuse_matrix(stacks, weights):
    """ Row-wise centroid fusion of aligned embedding matrices

    `stacks` maps each supervisor tag to an (n, dim) float32 matrix whose
    rows describe the same n samples. Returns the (n, dim) fused matrix.
    """
    tags = list(stacks)
    ws = np.array([weights[tag] for tag in tags], dtype=np.float64)
    if not ws.sum() > 0:
        raise DataError("supervisor weights sum to zero")
    if len(tags) == 1:
        return np.asarray(stacks[tags[0]], dtype=np.float32)
    total = sum(w * np.asarray(stacks[t], dtype=np.float64)
                for t, w in zip(tags, ws)) / ws.sum()
    norms = np.linalg.norm(total, axis=1, keepdims=True)
    if np.any(norms < CENTROID_MIN_NORM):
        raise DegenerateCentroid("supervisors cancel out for at least one "
                                 "sample")
    return (total / norms).astype(np.float32)


def score_fuse(scores, rule=ScoreRule.Median):
    """ Combine same-model similarity scores for one comparison """
    rule = ScoreRule.parse(rule)
    scores = [float(s) for s in scores]
    if not scores:
        raise EmptyScores("score fusion needs at least one score")
    if rule is ScoreRule.Mean:
        return math.fsum(scores) / len(scores)
    ordered = sorted(scores)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def fuse_score_matrix(matrix, rule=ScoreRule.Median):
    """ Vectorized score_fuse over the first axis of a (models, n) array """
    rule = ScoreRule.parse(rule)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] == 0:
        raise EmptyScores("score fusion needs at least one model")
    if rule is ScoreRule.Mean:
        return matrix.mean(axis=0)
    return np.median(matrix, axis=0)


@dataclass(frozen=True)
class ThresholdTable:
    """ Per-model decision thresholds calibrated at a common FMR """
    thresholds: Mapping[ModelTag, float]
    target_fmr: float

    def __post_init__(self):
        if not 0 < self.target_fmr <= 1:
            raise DataError(f"target FMR must be in (0, 1], "
                            f"got {self.target_fmr}")
        thresholds = {ModelTag.parse(k): float(v)
                      for k, v in dict(self.thresholds).items()}
        object.__setattr__(self, 'thresholds', dict(sorted(thresholds.items())))

    def __getitem__(self, tag):
        try:
            return self.thresholds[tag]
        except KeyError:
            raise MissingThreshold(f"no threshold for model {tag}") from None

    def to_mapping(self):
        return {'target_fmr': self.target_fmr,
                'thresholds': {str(t): v for t, v in self.thresholds.items()}}

    @classmethod
    def from_mapping(cls, data):
        unknown = set(data) - {'target_fmr', 'thresholds'}
        if unknown:
            raise ConfigError(f"unknown threshold-table keys: "
                              f"{sorted(unknown)}")
        try:
            return cls(data['thresholds'], data['target_fmr'])
        except KeyError as ex:
            raise ConfigError(f"threshold table is missing {ex}") from ex

    def dumps(self):
        return canonical_json(self.to_mapping())

    @classmethod
    def loads(cls, text):
        return cls.from_mapping(json.loads(text))

    def save(self, path):
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path):
        with flexopen(path, 'r', encoding='utf-8') as f:
            return cls.loads(f.read())


def decision_fuse_vote(per_model_scores, table, quorum=1):
    """ Accept when at least `quorum` models score at or above threshold

    Scores must come from same-model comparisons; each is judged against
    its own model's threshold.
    """
    if quorum < 1:
        raise DataError(f"quorum must be at least 1, got {quorum}")
    votes = sum(1 for tag, score in per_model_scores.items()
                if score >= table[tag])
    return votes >= quorum


def decision_fuse_or(per_model_scores, table):
    """ OR rule: accept if any model accepts at its own threshold """
    # look every threshold up first so a missing one always raises
    thresholds = {tag: table[tag] for tag in per_model_scores}
    return any(score >= thresholds[tag]
               for tag, score in per_model_scores.items())


def calibrate_threshold(impostor_scores, target_fmr):
    """ Threshold whose empirical FMR on `impostor_scores` is <= target

    With the scores sorted in descending order and m = floor(fmr * n), the
    threshold sits midway between the m-th and (m+1)-th largest scores, so
    exactly the top m impostors are accepted. m = 0 gives max + epsilon.
    """
    if not 0 < target_fmr <= 1:
        raise DataError(f"target FMR must be in (0, 1], got {target_fmr}")
    scores = np.sort(np.asarray(impostor_scores, dtype=np.float64))[::-1]
    n = scores.size
    if n == 0:
        raise EmptyScores("calibration needs impostor scores")
    m = math.floor(target_fmr * n + 1e-9)
    if m == 0:
        return float(scores[0]) + CALIBRATION_EPSILON
    if m >= n:
        return float(scores[-1])
    upper, lower = float(scores[m - 1]), float(scores[m])
    if upper == lower:
        return upper + CALIBRATION_EPSILON
    mid = (upper + lower) / 2
    # adjacent floats: the midpoint may round onto the lower score
    return mid if mid > lower else upper


def calibrate_table(impostors_by_tag, target_fmr):
    """ Calibrate every model's threshold at the same target FMR """
    return ThresholdTable({tag: calibrate_threshold(scores, target_fmr)
                           for tag, scores in impostors_by_tag.items()},
                          target_fmr)
