""" Dataset-level experiments built from the encoder, fusion and gallery.

All comparisons are same-model: an O embedding is only ever scored against
another O embedding. Fused methods combine those per-model comparisons
(score and decision fusion) or replace every per-model embedding with the
centroid of the supervisors (feature fusion).

Method names used in results:

    O, Y, X, R, M       single models
    decision-or         OR rule at per-model thresholds
    score-mean          mean of per-model scores
    score-median        median of per-model scores
    feature-centroid    centroid of the supervisor embeddings
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List

import numpy as np
from more_itertools import chunked

from .core import ModelTag, ModelSubset
from .encoder import EncoderConfig, encode_ensemble
from .evaluation import ScoreSample, PairingProtocol, build_pairs
from .evaluation import tar_at_fmr, tar_at_fmrs, equal_error_rate
from .evaluation import score_histogram, cmc
from .evaluation import OpenSetOutcome, fpir_at_fnir, two_sample_t_test
from .exceptions import DataError, InsufficientData, EmptyScores
from .fusion import FusionWeights, ScoreRule, fuse_matrix, fuse_score_matrix
from .fusion import calibrate_table
from .gallery import Gallery
from .imaging import BlurParams, DEFAULT_BLOCK, DEFAULT_OFFSET
from .synth import synthesize, subject_of

log = logging.getLogger(__name__)

PAIR_BLOCK = 65536
DECISION = 'decision-or'
CENTROID = 'feature-centroid'
FUSED_TAG = ModelTag.O


def score_method(rule):
    return f'score-{ScoreRule.parse(rule)}'


class EncodedSet:
    """ Per-model embedding matrices for a labelled set of images

    Rows are aligned across models: row i of every matrix is image ids[i].
    """
    def __init__(self, ids, subjects, impressions, matrices):
        self.ids = list(ids)
        self.subjects = list(subjects)
        self.impressions = list(impressions)
        self.matrices = {ModelTag.parse(t): np.asarray(m, dtype=np.float32)
                         for t, m in sorted(matrices.items())}
        for tag, matrix in self.matrices.items():
            if matrix.shape[0] != len(self.ids):
                raise DataError(f"{tag} matrix has {matrix.shape[0]} rows "
                                f"for {len(self.ids)} images")
        self._rows = {(s, i): n for n, (s, i)
                      in enumerate(zip(self.subjects, self.impressions))}

    def __len__(self):
        return len(self.ids)

    @property
    def tags(self):
        return ModelSubset(self.matrices)

    @property
    def dim(self):
        return next(iter(self.matrices.values())).shape[1]

    def row(self, subject, impression):
        return self._rows[subject, impression]

    def subject_impressions(self):
        out = {}
        for s, i in zip(self.subjects, self.impressions):
            out.setdefault(s, []).append(i)
        return out

    def require(self, tags):
        missing = set(ModelSubset(tags)) - set(self.matrices)
        if missing:
            names = ''.join(str(t) for t in sorted(missing))
            raise DataError(f"encoded set has no embeddings for {names}")

    def fused(self, supervisors, weights):
        """ Centroid-fused (n, dim) matrix of the supervisor embeddings """
        supervisors = ModelSubset(supervisors)
        self.require(supervisors)
        return fuse_matrix({t: self.matrices[t] for t in supervisors},
                           weights)

    def to_gallery(self, threads=1):
        """ A store keyed by image id, one column per model """
        return Gallery.from_matrices(self.ids, self.matrices, threads)

    @classmethod
    def from_gallery(cls, gallery):
        """ Rebuild an encoded set from a store keyed by image id """
        tags = gallery.tags
        if not tags:
            raise EmptyScores("store is empty")
        ids = gallery.ids(tags[0])
        for tag in tags[1:]:
            if gallery.ids(tag) != ids:
                raise DataError(f"store column {tag} is not aligned with "
                                f"column {tags[0]}")
        subjects = [subject_of(i) for i in ids]
        impressions = [int(i.rpartition('_')[2]) for i in ids]
        return cls(ids, subjects, impressions,
                   {t: gallery.matrix(t) for t in tags})


def encode_dataset(dataset, subset, cfg=None, blur=None, block=DEFAULT_BLOCK,
                   offset=DEFAULT_OFFSET, threads=1, bar=None):
    """ Encode every image of a dataset under every model in `subset` """
    subset = ModelSubset(subset)
    cfg = cfg or EncoderConfig()
    blur = blur or BlurParams()

    def work(sample):
        return encode_ensemble(sample.image, sample.minutiae, subset, cfg,
                               blur, block, offset)

    samples = list(dataset)
    matrices = {tag: np.empty((len(samples), cfg.dim), dtype=np.float32)
                for tag in subset}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for n, embeddings in enumerate(pool.map(work, samples)):
            for tag, emb in embeddings.items():
                matrices[tag][n] = emb.values
            if bar:
                bar()
    log.info("encoded %s images under %s", len(samples), subset)
    return EncodedSet([s.image_id for s in samples],
                      [s.subject for s in samples],
                      [s.impression for s in samples], matrices)


def pair_scores(matrix, left, right):
    """ Cosine scores of row pairs (left[i], right[i]), float64 """
    out = np.empty(len(left), dtype=np.float64)
    for block in chunked(range(len(left)), PAIR_BLOCK):
        lo, hi = block[0], block[-1] + 1
        a = matrix[left[lo:hi]].astype(np.float64)
        b = matrix[right[lo:hi]].astype(np.float64)
        out[lo:hi] = np.einsum('ij,ij->i', a, b)
    return np.clip(out, -1.0, 1.0, out=out)


def _pair_rows(encoded, pairs):
    left = np.array([encoded.row(*a) for a, _ in pairs], dtype=np.int64)
    right = np.array([encoded.row(*b) for _, b in pairs], dtype=np.int64)
    return left, right


@dataclass
class MethodResult:
    """ Verification figures for one method """
    tar: float
    fmr: float
    operating_points: list = field(default_factory=list)
    eer: float = None
    genuine_histogram: list = None
    impostor_histogram: list = None

    def to_mapping(self):
        out = {'tar': self.tar, 'fmr': self.fmr}
        if self.operating_points:
            out['operating_points'] = [p._asdict()
                                       for p in self.operating_points]
        if self.eer is not None:
            out['eer'] = self.eer
        if self.genuine_histogram is not None:
            out['histograms'] = {'genuine': self.genuine_histogram,
                                 'impostor': self.impostor_histogram}
        return out


def _sample_result(sample, target_fmr, fmrs):
    points = tar_at_fmrs(sample, tuple(fmrs) + (target_fmr,))
    point = next(p for p in points if p.target_fmr == target_fmr)
    return MethodResult(point.tar, point.fmr, points,
                        equal_error_rate(sample)[0],
                        score_histogram(sample.genuine),
                        score_histogram(sample.impostor))


@dataclass
class VerificationResult:
    protocol: PairingProtocol
    target_fmr: float
    n_genuine: int
    n_impostor: int
    methods: Dict[str, MethodResult]
    thresholds: dict

    def to_mapping(self):
        return {'protocol': str(self.protocol),
                'target_fmr': self.target_fmr,
                'genuine_pairs': self.n_genuine,
                'impostor_pairs': self.n_impostor,
                'thresholds': self.thresholds,
                'methods': {k: v.to_mapping()
                            for k, v in self.methods.items()}}


class _PairScores:
    """ Per-model genuine/impostor scores for a pairing of an encoded set """
    def __init__(self, encoded, protocol):
        pairs = build_pairs(encoded.subject_impressions(), protocol)
        if not pairs.genuine:
            raise InsufficientData("no genuine pairs; subjects need at least "
                                   "two impressions")
        self.pairs = pairs
        self.encoded = encoded
        self._rows = (_pair_rows(encoded, pairs.genuine),
                      _pair_rows(encoded, pairs.impostor))
        self.samples = {tag: self.score(encoded.matrices[tag])
                        for tag in encoded.tags}

    def score(self, matrix):
        (gl, gr), (il, ir) = self._rows
        return ScoreSample(pair_scores(matrix, gl, gr),
                           pair_scores(matrix, il, ir))

    def stacked(self, tags, which):
        return np.stack([getattr(self.samples[t], which) for t in tags])

    def decision_or(self, tags, target_fmr):
        """ (TAR, FMR, thresholds) of the OR rule over `tags` """
        table = calibrate_table({t: self.samples[t].impostor for t in tags},
                                target_fmr)
        thresholds = np.array([table[t] for t in tags])[:, None]
        genuine = np.any(self.stacked(tags, 'genuine') >= thresholds, axis=0)
        impostor = np.any(self.stacked(tags, 'impostor') >= thresholds,
                          axis=0)
        return float(genuine.mean()), float(impostor.mean()), table

    def score_fused(self, tags, rule):
        return ScoreSample(fuse_score_matrix(self.stacked(tags, 'genuine'),
                                             rule),
                           fuse_score_matrix(self.stacked(tags, 'impostor'),
                                             rule))


def run_verification(encoded, protocol=PairingProtocol.FvcStyle,
                     target_fmr=1e-3, supervisors=None, weights=None,
                     fmrs=(1e-4, 1e-3, 1e-2, 1e-1)):
    """ Verification accuracy of every single model and fused method """
    protocol = PairingProtocol.parse(protocol)
    tags = list(encoded.tags)
    scores = _PairScores(encoded, protocol)
    methods = {str(t): _sample_result(scores.samples[t], target_fmr, fmrs)
               for t in tags}
    if len(tags) > 1:
        tar, fmr, table = scores.decision_or(tags, target_fmr)
        methods[DECISION] = MethodResult(tar, fmr)
        thresholds = table.to_mapping()['thresholds']
        for rule in ScoreRule:
            methods[score_method(rule)] = _sample_result(
                    scores.score_fused(tags, rule), target_fmr, fmrs)
    else:
        thresholds = {}
    if supervisors:
        supervisors = ModelSubset(supervisors)
        weights = weights or FusionWeights.for_subset(supervisors)
        methods[CENTROID] = _sample_result(
                scores.score(encoded.fused(supervisors, weights)),
                target_fmr, fmrs)
    log.info("verification: %s genuine, %s impostor pairs",
             len(scores.pairs.genuine), len(scores.pairs.impostor))
    return VerificationResult(protocol, target_fmr, len(scores.pairs.genuine),
                              len(scores.pairs.impostor), methods,
                              thresholds)


def calibrate_encoded(encoded, target_fmr, protocol=PairingProtocol.FvcStyle):
    """ Per-model thresholds from the impostor pairs of an encoded set """
    scores = _PairScores(encoded, protocol)
    return calibrate_table({t: s.impostor for t, s in scores.samples.items()},
                           target_fmr)


#
# Identification
#

def _split(encoded, gallery_impression):
    enrolled, probes = [], []
    for n, (s, i) in enumerate(zip(encoded.subjects, encoded.impressions)):
        (enrolled if i == gallery_impression else probes).append(n)
    return enrolled, probes


def _gallery(encoded, rows, extra=None, threads=1):
    """ A gallery of `rows`, keyed by subject, with an optional fused column """
    gallery = Gallery(encoded.dim, threads)
    for n in rows:
        gallery.enroll(encoded.subjects[n],
                       {t: m[n] for t, m in encoded.matrices.items()})
    fused = None
    if extra is not None:
        fused = Gallery(encoded.dim, threads)
        for n in rows:
            fused.enroll(encoded.subjects[n], {FUSED_TAG: extra[n]})
    return gallery, fused


@dataclass
class IdentificationResult:
    n_gallery: int
    n_probes: int
    max_rank: int
    curves: Dict[str, object]
    rank1_or: float = None

    def rank1(self):
        out = {name: curve.rank1 for name, curve in self.curves.items()}
        if self.rank1_or is not None:
            out[DECISION] = self.rank1_or
        return out

    def to_mapping(self):
        return {'gallery_size': self.n_gallery,
                'probes': self.n_probes,
                'max_rank': self.max_rank,
                'rank1': self.rank1(),
                'cmc': {name: list(curve.hits_at_rank)
                        for name, curve in self.curves.items()}}


def run_identification(encoded, max_rank=20, rule=ScoreRule.Median,
                       supervisors=None, weights=None, gallery_impression=0,
                       models=True, threads=1, bar=None):
    """ Closed-set identification: one impression enrolled, the rest probe """
    enrolled, probes = _split(encoded, gallery_impression)
    if not enrolled or not probes:
        raise InsufficientData("closed-set search needs enrolled images and "
                               "probe images")
    tags = list(encoded.tags)
    fused = None
    if supervisors:
        supervisors = ModelSubset(supervisors)
        weights = weights or FusionWeights.for_subset(supervisors)
        fused = encoded.fused(supervisors, weights)
    gallery, fused_gallery = _gallery(encoded, enrolled, fused, threads)
    depth = min(max_rank, len(enrolled))

    results = {str(t): [] for t in (tags if models else [])}
    if len(tags) > 1:
        results[score_method(rule)] = []
    if fused_gallery:
        results[CENTROID] = []
    or_hits = 0
    for n in probes:
        true_id = encoded.subjects[n]
        embeddings = {t: m[n] for t, m in encoded.matrices.items()}
        for tag in (tags if models else []):
            results[str(tag)].append(
                (gallery.search_topk(tag, embeddings[tag], depth), true_id))
        if len(tags) > 1:
            results[score_method(rule)].append(
                (gallery.ensemble_search_scorefuse(embeddings, rule, depth),
                 true_id))
            or_hits += gallery.ensemble_rank1_or(embeddings, true_id)
        if fused_gallery:
            results[CENTROID].append(
                (fused_gallery.search_topk(FUSED_TAG, fused[n], depth),
                 true_id))
        if bar:
            bar()
    curves = {name: cmc(res, max_rank) for name, res in results.items()}
    return IdentificationResult(len(enrolled), len(probes), max_rank, curves,
                                or_hits / len(probes) if len(tags) > 1
                                else None)


@dataclass
class OpenSetResult:
    target_fnir: float
    mate_fraction: float
    n_enrolled: int
    n_mated: int
    n_nonmated: int
    points: dict

    def to_mapping(self):
        return {'target_fnir': self.target_fnir,
                'mate_fraction': self.mate_fraction,
                'enrolled': self.n_enrolled,
                'mated_probes': self.n_mated,
                'nonmated_probes': self.n_nonmated,
                'methods': {k: p._asdict() for k, p in self.points.items()}}


def run_openset(encoded, target_fnir=0.01, mate_fraction=0.5,
                rule=ScoreRule.Median, supervisors=None, weights=None,
                seed=0, gallery_impression=0, threads=1, bar=None):
    """ Open-set identification with part of the subjects enrolled

    A seeded `mate_fraction` of subjects is enrolled from one impression.
    Their other impressions are mated probes; every impression of the
    remaining subjects is a non-mated probe. The OR rule has no open-set
    counterpart and is not reported.
    """
    if not 0 < mate_fraction < 1:
        raise DataError(f"mate fraction must be in (0, 1), "
                        f"got {mate_fraction}")
    subjects = sorted(set(encoded.subjects))
    order = np.random.default_rng(seed).permutation(len(subjects))
    count = int(round(mate_fraction * len(subjects)))
    if count < 1 or count >= len(subjects):
        raise InsufficientData(f"mate fraction {mate_fraction} of "
                               f"{len(subjects)} subjects leaves one side "
                               "empty")
    mates = {subjects[i] for i in order[:count]}

    enrolled, mated, nonmated = [], [], []
    for n, (s, i) in enumerate(zip(encoded.subjects, encoded.impressions)):
        if s not in mates:
            nonmated.append(n)
        elif i == gallery_impression:
            enrolled.append(n)
        else:
            mated.append(n)
    if not mated:
        raise InsufficientData("no mated probes; enrolled subjects need a "
                               "second impression")

    tags = list(encoded.tags)
    fused = None
    if supervisors:
        supervisors = ModelSubset(supervisors)
        weights = weights or FusionWeights.for_subset(supervisors)
        fused = encoded.fused(supervisors, weights)
    gallery, fused_gallery = _gallery(encoded, enrolled, fused, threads)

    def top1(n):
        embeddings = {t: m[n] for t, m in encoded.matrices.items()}
        out = {str(t): gallery.search_topk(t, embeddings[t], 1).ranked[0]
               for t in tags}
        if len(tags) > 1:
            out[score_method(rule)] = gallery.ensemble_search_scorefuse(
                    embeddings, rule, 1).ranked[0]
        if fused_gallery:
            out[CENTROID] = fused_gallery.search_topk(
                    FUSED_TAG, fused[n], 1).ranked[0]
        if bar:
            bar()
        return out

    mated_top = [(n, top1(n)) for n in mated]
    nonmated_top = [top1(n) for n in nonmated]
    points = {}
    for name in mated_top[0][1]:
        outcome = OpenSetOutcome(
                [(top[name][0], top[name][1], encoded.subjects[n])
                 for n, top in mated_top],
                [top[name][1] for top in nonmated_top])
        points[name] = fpir_at_fnir(outcome, target_fnir)
    return OpenSetResult(target_fnir, mate_fraction, len(enrolled),
                         len(mated), len(nonmated), points)


#
# Ablation and fusion benefit
#

@dataclass
class AblationRow:
    subset: ModelSubset
    decision: float
    score: float
    feature: float

    def to_mapping(self):
        return {'subset': str(self.subset), DECISION: self.decision,
                'score': self.score, CENTROID: self.feature}


def run_ablation(encoded, subset=None, protocol=PairingProtocol.FvcStyle,
                 target_fmr=1e-3, rule=ScoreRule.Median, weights=None):
    """ Verification TAR of every non-empty model subset, per fusion level

    Single-model subsets report that model's TAR in every column.
    """
    subset = ModelSubset(subset or encoded.tags)
    encoded.require(subset)
    overrides = weights.weights if weights else None
    scores = _PairScores(encoded, protocol)
    rows = []
    for members in subset.subsets():
        tags = list(members)
        if len(tags) == 1:
            tar = tar_at_fmr(scores.samples[tags[0]], target_fmr)
            rows.append(AblationRow(members, tar, tar, tar))
            continue
        decision, _, _ = scores.decision_or(tags, target_fmr)
        score = tar_at_fmr(scores.score_fused(tags, rule), target_fmr)
        fused = encoded.fused(members,
                              FusionWeights.for_subset(members, overrides))
        feature = tar_at_fmr(scores.score(fused), target_fmr)
        rows.append(AblationRow(members, decision, score, feature))
    return rows


@dataclass
class FusionBenefit:
    subset: ModelSubset
    baseline: List[float]
    fused: List[float]
    ttest: object

    @property
    def mean_difference(self):
        return float(np.mean(self.fused) - np.mean(self.baseline))

    def to_mapping(self):
        return {'subset': str(self.subset),
                'baseline_rank1': self.baseline,
                'fused_rank1': self.fused,
                'mean_difference': self.mean_difference,
                'ttest': self.ttest._asdict()}


def fusion_benefit(spec, n_datasets=20, subset='ORM', weights=None,
                   cfg=None, blur=None, block=DEFAULT_BLOCK,
                   offset=DEFAULT_OFFSET, alpha=0.05, threads=1, bar=None):
    """ Rank-1 accuracy of O alone against centroid fusion of `subset`

    Dataset i is synthesized from `spec` with its seed advanced by i. The
    per-dataset accuracies are compared with Welch's t-test (fused minus
    baseline).
    """
    if n_datasets < 2:
        raise InsufficientData("fusion benefit needs at least two datasets")
    subset = ModelSubset(subset)
    weights = weights or FusionWeights.for_subset(subset)
    models = ModelSubset(set(subset) | {ModelTag.O})
    baseline, fused = [], []
    for i in range(n_datasets):
        dataset = synthesize(replace(spec, seed=spec.seed + i))
        encoded = encode_dataset(dataset, models, cfg, blur, block, offset,
                                 threads)
        single = EncodedSet(encoded.ids, encoded.subjects,
                            encoded.impressions,
                            {ModelTag.O: encoded.matrices[ModelTag.O]})
        base = run_identification(single, max_rank=1, threads=threads)
        both = run_identification(encoded, max_rank=1, supervisors=subset,
                                  weights=weights, models=False,
                                  threads=threads)
        baseline.append(base.curves[str(ModelTag.O)].rank1)
        fused.append(both.curves[CENTROID].rank1)
        log.info("dataset %s: O %.4f, centroid %.4f", i, baseline[-1],
                 fused[-1])
        if bar:
            bar()
    return FusionBenefit(subset, baseline, fused,
                         two_sample_t_test(fused, baseline, alpha))
