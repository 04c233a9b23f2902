""" Measurement: verification, closed-set and open-set metrics.

Everything here works on plain score samples and search results; building
those from a dataset is the job of fpensemble.experiments. Threshold sweeps
only ever visit observed scores (plus an above-max sentinel), never a grid,
so every reported operating point can be checked by recounting.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from .exceptions import DataError, EmptyScores, InsufficientData
from .exceptions import InsufficientSamples, RankDepthTooSmall
from .fusion import calibrate_threshold, CALIBRATION_EPSILON

log = logging.getLogger(__name__)

HISTOGRAM_BINS = 512
REPORT_FMRS = (1e-4, 1e-3, 1e-2, 1e-1)


def _scores(values, what):
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyScores(f"no {what} scores")
    return arr


@dataclass(frozen=True)
class ScoreSample:
    """ Genuine and impostor similarity scores from one comparison run """
    genuine: Sequence[float]
    impostor: Sequence[float]

    def __post_init__(self):
        object.__setattr__(self, 'genuine',
                           np.asarray(self.genuine, dtype=np.float64).ravel())
        object.__setattr__(self, 'impostor',
                           np.asarray(self.impostor, dtype=np.float64).ravel())


class OperatingPoint(NamedTuple):
    target_fmr: float
    threshold: float
    tar: float
    fmr: float
    under_resolved: bool


def accept_rate(scores, threshold):
    """ Fraction of `scores` at or above `threshold` """
    scores = np.asarray(scores, dtype=np.float64)
    return float(np.count_nonzero(scores >= threshold)) / scores.size


def tar_at_fmr(sample, target_fmr):
    """ True accept rate at the threshold calibrated for `target_fmr` """
    genuine = _scores(sample.genuine, 'genuine')
    threshold = calibrate_threshold(_scores(sample.impostor, 'impostor'),
                                    target_fmr)
    return accept_rate(genuine, threshold)


def tar_at_fmrs(sample, fmrs=REPORT_FMRS):
    """ Operating points at several target FMRs, lowest first

    A point is under-resolved when the impostor set is too small for its
    target to admit even one false match.
    """
    genuine = _scores(sample.genuine, 'genuine')
    impostor = _scores(sample.impostor, 'impostor')
    points = []
    for fmr in sorted(set(fmrs)):
        threshold = calibrate_threshold(impostor, fmr)
        points.append(OperatingPoint(fmr, threshold,
                                     accept_rate(genuine, threshold),
                                     accept_rate(impostor, threshold),
                                     fmr * impostor.size < 1))
    return points


def equal_error_rate(sample):
    """ (EER, threshold) where false accepts and false rejects cross

    Candidate thresholds are the observed scores; the EER is the mean of
    FAR and FRR at the candidate where they are closest.
    """
    genuine = np.sort(_scores(sample.genuine, 'genuine'))
    impostor = np.sort(_scores(sample.impostor, 'impostor'))
    candidates = np.unique(np.concatenate([genuine, impostor]))
    frr = np.searchsorted(genuine, candidates, side='left') / genuine.size
    far = 1 - np.searchsorted(impostor, candidates, side='left') / impostor.size
    best = int(np.argmin(np.abs(far - frr)))
    return float((far[best] + frr[best]) / 2), float(candidates[best])


def score_histogram(scores, bins=HISTOGRAM_BINS):
    """ Counts over `bins` equal-width bins spanning [-1, 1] """
    counts, _ = np.histogram(np.asarray(scores, dtype=np.float64),
                             bins=bins, range=(-1.0, 1.0))
    return [int(c) for c in counts]


#
# Pairing protocols
#

class PairingProtocol(Enum):
    FullCross = 'full'
    FvcStyle = 'fvc'

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, string):
        if isinstance(string, cls):
            return string
        for member in cls:
            if str(string).lower() in (member.value, member.name.lower()):
                return member
        raise ValueError(f"not a pairing protocol: {string}")


class Pairs(NamedTuple):
    genuine: list
    impostor: list


def build_pairs(subject_impressions, protocol):
    """ Genuine and impostor comparison pairs for a labelled dataset

    `subject_impressions` maps each subject to its impression indices.
    Pairs are unordered and given as ((subject, impression), (subject,
    impression)) in a stable order. FvcStyle pairs only the first
    impression of each subject across subjects.
    """
    protocol = PairingProtocol.parse(protocol)
    if len(subject_impressions) < 2:
        raise InsufficientData("pairing needs at least two subjects")
    for subject, impressions in subject_impressions.items():
        if not impressions:
            raise InsufficientData(f"subject {subject} has no impressions")

    samples = {s: [(s, i) for i in imps]
               for s, imps in subject_impressions.items()}
    genuine = [pair for group in samples.values()
               for pair in itertools.combinations(group, 2)]
    if protocol is PairingProtocol.FvcStyle:
        firsts = [group[0] for group in samples.values()]
        impostor = list(itertools.combinations(firsts, 2))
    else:
        impostor = [(a, b)
                    for ga, gb in itertools.combinations(samples.values(), 2)
                    for a in ga for b in gb]
    log.debug("%s pairing: %s genuine, %s impostor", protocol, len(genuine),
              len(impostor))
    return Pairs(genuine, impostor)


#
# Closed-set identification
#

@dataclass(frozen=True)
class CmcCurve:
    """ hits_at_rank[r-1] is the fraction of probes with their mate at rank <= r """
    hits_at_rank: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'hits_at_rank', tuple(self.hits_at_rank))

    def __getitem__(self, rank):
        if rank < 1:
            raise IndexError("ranks start at 1")
        return self.hits_at_rank[rank - 1]

    def __len__(self):
        return len(self.hits_at_rank)

    @property
    def rank1(self):
        return self.hits_at_rank[0]


def cmc(results, max_rank):
    """ Cumulative match characteristic from (SearchResult, true id) pairs

    Each ranking must reach `max_rank` or cover the whole gallery.
    """
    if max_rank < 1:
        raise DataError(f"max_rank must be positive, got {max_rank}")
    hits = np.zeros(max_rank, dtype=np.int64)
    n = 0
    for result, true_id in results:
        n += 1
        if len(result) < min(max_rank, result.total):
            raise RankDepthTooSmall(f"ranking has {len(result)} candidates, "
                                    f"need {min(max_rank, result.total)}")
        rank = result.rank_of(true_id)
        if rank is not None and rank <= max_rank:
            hits[rank - 1] += 1
    if n == 0:
        raise EmptyScores("cmc needs at least one probe")
    return CmcCurve(float(h) / n for h in np.cumsum(hits))


#
# Open-set identification
#

@dataclass(frozen=True)
class OpenSetOutcome:
    """ Top-1 results of an open-set search run

    mated_top holds (retrieved id, top score, true id) per mated probe;
    nonmated_top holds the top score of each non-mated probe.
    """
    mated_top: Sequence[Tuple[str, float, str]]
    nonmated_top: Sequence[float]

    def __post_init__(self):
        object.__setattr__(self, 'mated_top', tuple(
            (r, float(s), t) for r, s, t in self.mated_top))
        object.__setattr__(self, 'nonmated_top', np.asarray(
            self.nonmated_top, dtype=np.float64).ravel())

    def correct_scores(self):
        return np.array([s for r, s, t in self.mated_top if r == t],
                        dtype=np.float64)

    @property
    def wrong_ids(self):
        return sum(1 for r, _, t in self.mated_top if r != t)


class OpenSetPoint(NamedTuple):
    fpir: float
    fnir: float
    threshold: float
    flagged: bool


def fnir_at(outcome, threshold):
    """ Mated probes that miss: wrong id, or right id below threshold """
    if not outcome.mated_top:
        raise EmptyScores("no mated probes")
    misses = sum(1 for r, s, t in outcome.mated_top
                 if r != t or s < threshold)
    return misses / len(outcome.mated_top)


def fpir_at(outcome, threshold):
    """ Non-mated probes whose top score reaches the threshold """
    if outcome.nonmated_top.size == 0:
        raise EmptyScores("no non-mated probes")
    return accept_rate(outcome.nonmated_top, threshold)


def fpir_at_fnir(outcome, target_fnir):
    """ FPIR at the largest threshold whose FNIR meets `target_fnir`

    When wrong-id retrievals alone exceed the target, no threshold can
    meet it; the point at the lowest reachable FNIR is returned, flagged.
    """
    if not 0 < target_fnir <= 1:
        raise DataError(f"target FNIR must be in (0, 1], got {target_fnir}")
    if not outcome.mated_top:
        raise EmptyScores("no mated probes")
    if outcome.nonmated_top.size == 0:
        raise EmptyScores("no non-mated probes")

    correct = np.sort(outcome.correct_scores())
    # how many correct retrievals may fall below threshold
    allowed = math.floor(target_fnir * len(outcome.mated_top) + 1e-9) \
        - outcome.wrong_ids
    top = max(float(outcome.nonmated_top.max()),
              max(s for _, s, _ in outcome.mated_top))
    flagged = allowed < 0
    if flagged:
        threshold = float(correct[0]) if correct.size else \
            top + CALIBRATION_EPSILON
    elif allowed >= correct.size:
        threshold = top + CALIBRATION_EPSILON
    else:
        threshold = float(correct[allowed])
    point = OpenSetPoint(fpir_at(outcome, threshold),
                         fnir_at(outcome, threshold), threshold, flagged)
    if flagged:
        log.warning("FNIR target %s unreachable: %s of %s mated probes "
                    "retrieve the wrong id", target_fnir, outcome.wrong_ids,
                    len(outcome.mated_top))
    return point


#
# Significance
#

class TTestResult(NamedTuple):
    t: float
    df: float
    significant: bool
    critical: float
    p_value: float


def t_critical(df, alpha):
    """ Two-sided Student-t critical value, by bisection on the CDF """
    target = 1 - alpha / 2
    hi = 1.0
    while stats.t.cdf(hi, df) < target:
        hi *= 2
    return optimize.bisect(lambda x: stats.t.cdf(x, df) - target, 0.0, hi,
                           xtol=1e-9)


def two_sample_t_test(a, b, alpha=0.05):
    """ Welch's unequal-variance t-test of mean(a) against mean(b) """
    if not 0 < alpha < 1:
        raise DataError(f"alpha must be in (0, 1), got {alpha}")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise InsufficientSamples(f"t-test needs two samples of at least 2, "
                                  f"got {a.size} and {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("t-test samples must be finite")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        df = float(a.size + b.size - 2)
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = float(diff / math.sqrt(se2))
        df = float(se2 ** 2 / (va ** 2 / (a.size - 1) +
                               vb ** 2 / (b.size - 1)))
    critical = t_critical(df, alpha)
    p_value = float(2 * stats.t.sf(abs(t), df))
    return TTestResult(t, df, abs(t) > critical, critical, p_value)


#
# Throughput
#

class BenchResult(NamedTuple):
    rate: float
    entries_scanned: int
    elapsed: float
    threads: int
    checksum: float
    gallery_bytes: int


def throughput_bench(gallery, tag, probes, seconds, threads=1, bar=None):
    """ Comparisons per second of repeated full-column searches

    Probes are cycled until at least `seconds` of wall time has passed.
    The top scores are summed into a checksum so no search can be skipped.
    """
    if seconds <= 0:
        raise DataError(f"bench time must be positive, got {seconds}")
    probes = list(probes)
    if not probes:
        raise EmptyScores("bench needs at least one probe")
    total = gallery.count(tag)
    scanned, checksum = 0, 0.0
    start = time.perf_counter()
    elapsed = 0.0
    for probe in itertools.cycle(probes):
        result = gallery.search_topk(tag, probe, 1, threads)
        checksum += result.scores[0]
        scanned += result.total
        if bar:
            bar()
        elapsed = time.perf_counter() - start
        if elapsed >= seconds:
            break
    rate = scanned / elapsed if elapsed > 0 else math.inf
    log.info("%s comparisons in %.3fs on %s thread(s): %.3g/s", scanned,
             elapsed, threads, rate)
    return BenchResult(rate, scanned, elapsed, threads, checksum,
                       gallery.nbytes(tag) if total else 0)
