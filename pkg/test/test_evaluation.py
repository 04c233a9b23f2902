import math
import unittest
from itertools import combinations

import numpy as np
from scipy import stats

from fpensemble.core import ModelTag
from fpensemble.evaluation import ScoreSample, accept_rate, tar_at_fmr
from fpensemble.evaluation import tar_at_fmrs, equal_error_rate
from fpensemble.evaluation import score_histogram, HISTOGRAM_BINS
from fpensemble.evaluation import PairingProtocol, build_pairs
from fpensemble.evaluation import CmcCurve, cmc
from fpensemble.evaluation import OpenSetOutcome, fnir_at, fpir_at
from fpensemble.evaluation import fpir_at_fnir
from fpensemble.evaluation import t_critical, two_sample_t_test
from fpensemble.evaluation import throughput_bench
from fpensemble.fusion import calibrate_threshold
from fpensemble.gallery import Gallery, SearchResult
from fpensemble.exceptions import DataError, EmptyScores, InsufficientData
from fpensemble.exceptions import InsufficientSamples, RankDepthTooSmall
from fpensemble.exceptions import EmptyGallery


class TestVerificationMetrics(unittest.TestCase):
    def test_tar_matches_recount(self):
        rng = np.random.default_rng(0)
        for i in range(50):
            with self.subTest(seed=i):
                sample = ScoreSample(rng.normal(0.5, 0.2, 300),
                                     rng.normal(0.0, 0.2, 2000))
                for fmr in [1e-3, 1e-2, 1e-1]:
                    thr = calibrate_threshold(sample.impostor, fmr)
                    expected = sum(1 for s in sample.genuine if s >= thr) / 300
                    self.assertEqual(tar_at_fmr(sample, fmr), expected)

    def test_tar_monotone_in_fmr(self):
        rng = np.random.default_rng(1)
        fmrs = [1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0]
        for i in range(50):
            with self.subTest(seed=i):
                sample = ScoreSample(rng.normal(0.3, 0.3, 200),
                                     np.round(rng.normal(0, 0.2, 1000), 2))
                tars = [tar_at_fmr(sample, f) for f in fmrs]
                self.assertEqual(tars, sorted(tars))

    def test_operating_points(self):
        sample = ScoreSample(np.linspace(0, 1, 50), np.linspace(-1, 0.5, 100))
        points = tar_at_fmrs(sample, [0.1, 1e-3, 0.01])
        self.assertEqual([p.target_fmr for p in points], [1e-3, 0.01, 0.1])
        self.assertEqual([p.under_resolved for p in points],
                         [True, False, False])
        for p in points:
            self.assertLessEqual(p.fmr, p.target_fmr)
            self.assertEqual(p.tar, accept_rate(sample.genuine, p.threshold))

    def test_empty(self):
        self.assertRaises(EmptyScores, tar_at_fmr, ScoreSample([], [0.1]),
                          0.1)
        self.assertRaises(EmptyScores, tar_at_fmr, ScoreSample([0.1], []),
                          0.1)

    def test_eer(self):
        eer, thr = equal_error_rate(ScoreSample([0.8, 0.9], [0.1, 0.2]))
        self.assertEqual((eer, thr), (0.0, 0.8))
        eer, _ = equal_error_rate(ScoreSample([0.1, 0.2], [0.8, 0.9]))
        self.assertGreaterEqual(eer, 0.5)

    def test_histogram(self):
        counts = score_histogram([-1.0, 0.0, 0.999, 1.0])
        self.assertEqual(len(counts), HISTOGRAM_BINS)
        self.assertEqual(sum(counts), 4)
        self.assertEqual(counts[0], 1)
        self.assertEqual(counts[-1], 2)


class TestPairs(unittest.TestCase):
    def test_fvc_counts(self):
        subjects = {f's{i}': list(range(8)) for i in range(100)}
        pairs = build_pairs(subjects, 'fvc')
        self.assertEqual(len(pairs.genuine), 2800)
        self.assertEqual(len(pairs.impostor), 4950)
        for a, b in pairs.impostor:
            self.assertEqual((a[1], b[1]), (0, 0))

    def test_minimal_full_cross(self):
        pairs = build_pairs({'a': [0], 'b': [0]}, PairingProtocol.FullCross)
        self.assertEqual(pairs.genuine, [])
        self.assertEqual(pairs.impostor, [(('a', 0), ('b', 0))])

    def test_counts_closed_form(self):
        rng = np.random.default_rng(2)
        for i in range(100):
            with self.subTest(seed=i):
                sizes = rng.integers(1, 6, size=int(rng.integers(2, 12)))
                subjects = {f's{j}': list(range(m))
                            for j, m in enumerate(sizes)}
                full = build_pairs(subjects, 'full')
                fvc = build_pairs(subjects, 'fvc')
                genuine = sum(m * (m - 1) // 2 for m in sizes)
                self.assertEqual(len(full.genuine), genuine)
                self.assertEqual(len(fvc.genuine), genuine)
                self.assertEqual(len(full.impostor),
                                 sum(int(a) * int(b)
                                     for a, b in combinations(sizes, 2)))
                n = len(sizes)
                self.assertEqual(len(fvc.impostor), n * (n - 1) // 2)
                for a, b in full.genuine:
                    self.assertEqual(a[0], b[0])
                for a, b in full.impostor:
                    self.assertNotEqual(a[0], b[0])

    def test_insufficient(self):
        self.assertRaises(InsufficientData, build_pairs, {'a': [0, 1]},
                          'full')
        self.assertRaises(InsufficientData, build_pairs, {'a': [0], 'b': []},
                          'full')

    def test_protocol_parse(self):
        self.assertIs(PairingProtocol.parse('FVC'), PairingProtocol.FvcStyle)
        self.assertIs(PairingProtocol.parse('fullcross'),
                      PairingProtocol.FullCross)
        self.assertRaises(ValueError, PairingProtocol.parse, 'half')


def ranked(ids, total=None):
    return SearchResult([(sid, 1.0 - i / 100) for i, sid in enumerate(ids)],
                        len(ids), total or len(ids))


class TestCmc(unittest.TestCase):
    def test_perfect_and_miss(self):
        perfect = cmc([(ranked(['a', 'b']), 'a')] * 3, 2)
        self.assertEqual(perfect.hits_at_rank, (1.0, 1.0))
        miss = cmc([(ranked(['a', 'b'], 10), 'z')], 2)
        self.assertEqual(miss.hits_at_rank, (0.0, 0.0))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        ids = [f'g{i}' for i in range(1000)]
        results = []
        for _ in range(200):
            order = rng.permutation(1000)[:20]
            results.append((ranked([ids[i] for i in order], 1000),
                            ids[int(rng.integers(0, 40))]))
        curve = cmc(results, 20)
        for rank in range(1, 21):
            expected = sum(1 for r, t in results if t in r.ids[:rank]) / 200
            self.assertAlmostEqual(curve[rank], expected)
        self.assertEqual(list(curve.hits_at_rank),
                         sorted(curve.hits_at_rank))
        self.assertEqual(curve.rank1, curve[1])

    def test_depth(self):
        self.assertRaises(RankDepthTooSmall, cmc,
                          [(ranked(['a'] * 5, 100), 'a')], 10)
        curve = cmc([(ranked(['a', 'b', 'c']), 'c')], 10)
        self.assertEqual(len(curve), 10)
        self.assertEqual(curve[3], 1.0)
        self.assertEqual(curve[10], 1.0)

    def test_errors(self):
        self.assertRaises(EmptyScores, cmc, [], 5)
        self.assertRaises(DataError, cmc, [(ranked(['a']), 'a')], 0)
        self.assertRaises(IndexError, CmcCurve([1.0]).__getitem__, 0)


class TestOpenSet(unittest.TestCase):
    def random_outcome(self, rng, n_mated=200, n_non=300, wrong=0.03):
        mated = []
        for i in range(n_mated):
            score = float(rng.normal(0.6, 0.15))
            retrieved = f'x{i}' if rng.uniform() < wrong else f't{i}'
            mated.append((retrieved, score, f't{i}'))
        return OpenSetOutcome(mated, rng.normal(0.2, 0.15, n_non))

    def test_separation(self):
        outcome = OpenSetOutcome([('a', 0.9, 'a'), ('b', 0.8, 'b')],
                                 [0.1, 0.2])
        point = fpir_at_fnir(outcome, 0.5)
        self.assertEqual((point.fpir, point.fnir), (0.0, 0.5))
        self.assertEqual(point.threshold, 0.9)
        self.assertFalse(point.flagged)

    def test_brute_force_sweep(self):
        rng = np.random.default_rng(4)
        for i in range(100):
            with self.subTest(seed=i):
                outcome = self.random_outcome(rng)
                target = float(rng.choice([0.05, 0.1, 0.2]))
                point = fpir_at_fnir(outcome, target)
                if point.flagged:
                    continue
                observed = [s for _, s, _ in outcome.mated_top] + \
                    list(outcome.nonmated_top)
                candidates = sorted(observed + [max(observed) + 1e-6],
                                    reverse=True)
                best = next(c for c in candidates
                            if fnir_at(outcome, c) <= target)
                if point.threshold <= max(observed):
                    self.assertEqual(point.threshold, best)
                self.assertLessEqual(point.fnir, target)
                self.assertEqual(point.fpir, fpir_at(outcome, best))

    def test_fpir_monotone(self):
        outcome = self.random_outcome(np.random.default_rng(5))
        thresholds = np.linspace(-0.5, 1.5, 101)
        fpirs = [fpir_at(outcome, t) for t in thresholds]
        fnirs = [fnir_at(outcome, t) for t in thresholds]
        self.assertEqual(fpirs, sorted(fpirs, reverse=True))
        self.assertEqual(fnirs, sorted(fnirs))

    def test_wrong_ids_count_as_misses(self):
        outcome = OpenSetOutcome([('x', 0.99, 'a'), ('b', 0.5, 'b')], [0.3])
        self.assertEqual(fnir_at(outcome, 0.0), 0.5)

    def test_unreachable_is_flagged(self):
        outcome = OpenSetOutcome([('x', 0.9, 'a'), ('y', 0.8, 'b'),
                                  ('c', 0.7, 'c')], [0.1])
        point = fpir_at_fnir(outcome, 0.1)
        self.assertTrue(point.flagged)
        self.assertEqual(point.threshold, 0.7)
        self.assertAlmostEqual(point.fnir, 2 / 3)

    def test_errors(self):
        outcome = OpenSetOutcome([('a', 0.9, 'a')], [])
        self.assertRaises(EmptyScores, fpir_at_fnir, outcome, 0.1)
        self.assertRaises(DataError, fpir_at_fnir, outcome, 0)


class TestTTest(unittest.TestCase):
    a = [2.1, 2.5, 2.3, 2.2]
    b = [1.1, 1.0, 1.3, 1.2]

    def test_textbook_example(self):
        ma, mb = sum(self.a) / 4, sum(self.b) / 4
        va = sum((x - ma) ** 2 for x in self.a) / 3
        vb = sum((x - mb) ** 2 for x in self.b) / 3
        t = (ma - mb) / math.sqrt(va / 4 + vb / 4)
        df = (va / 4 + vb / 4) ** 2 / ((va / 4) ** 2 / 3 + (vb / 4) ** 2 / 3)
        result = two_sample_t_test(self.a, self.b)
        self.assertAlmostEqual(result.t, t, places=9)
        self.assertAlmostEqual(result.df, df, places=9)
        self.assertTrue(result.significant)
        reference = stats.ttest_ind(self.a, self.b, equal_var=False)
        self.assertAlmostEqual(result.t, reference.statistic, places=9)
        self.assertAlmostEqual(result.p_value, reference.pvalue, places=9)

    def test_antisymmetric(self):
        ab = two_sample_t_test(self.a, self.b)
        ba = two_sample_t_test(self.b, self.a)
        self.assertAlmostEqual(ab.t, -ba.t)
        self.assertEqual(ab.df, ba.df)
        self.assertEqual(ab.significant, ba.significant)

    def test_identical(self):
        result = two_sample_t_test(self.a, self.a)
        self.assertEqual(result.t, 0.0)
        self.assertFalse(result.significant)
        zero = two_sample_t_test([1.0, 1.0], [1.0, 1.0])
        self.assertEqual((zero.t, zero.significant), (0.0, False))

    def test_separated(self):
        rng = np.random.default_rng(6)
        result = two_sample_t_test(rng.normal(0, 1e-9, 10),
                                   1 + rng.normal(0, 1e-9, 10))
        self.assertTrue(result.significant)
        self.assertLess(result.t, 0)
        constant = two_sample_t_test([0.0, 0.0], [1.0, 1.0])
        self.assertEqual(constant.t, -math.inf)
        self.assertTrue(constant.significant)

    def test_critical_value(self):
        for df in [1, 2.5, 6, 30, 1000]:
            for alpha in [0.01, 0.05, 0.1]:
                with self.subTest(df=df, alpha=alpha):
                    self.assertAlmostEqual(t_critical(df, alpha),
                                           stats.t.ppf(1 - alpha / 2, df),
                                           places=6)

    def test_insufficient(self):
        self.assertRaises(InsufficientSamples, two_sample_t_test, [1.0],
                          [1.0, 2.0])
        self.assertRaises(DataError, two_sample_t_test, self.a, self.b, 1.5)


class TestBench(unittest.TestCase):
    def test_single_entry(self):
        gallery = Gallery.from_matrices(['a'], {ModelTag.O: [[0.6, 0.8]]})
        probe = np.array([0.6, 0.8], dtype=np.float32)
        result = throughput_bench(gallery, ModelTag.O, [probe], 0.05)
        self.assertGreater(result.rate, 0)
        self.assertTrue(math.isfinite(result.rate))
        self.assertGreaterEqual(result.elapsed, 0.05)
        self.assertGreaterEqual(result.entries_scanned, 1)
        self.assertAlmostEqual(result.checksum / result.entries_scanned, 1.0,
                               places=5)
        self.assertEqual(result.gallery_bytes, 8)

    def test_empty(self):
        gallery = Gallery(2)
        self.assertRaises(EmptyGallery, throughput_bench, gallery,
                          ModelTag.O, [np.array([1.0, 0.0])], 0.01)
        self.assertRaises(DataError, throughput_bench, gallery, ModelTag.O,
                          [], 0)
