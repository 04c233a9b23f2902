""" Throughput and fusion-benefit checks

The fusion-benefit check always runs on 20 seeded datasets of 100 subjects.
The throughput checks use a 20,000-entry gallery unless
FPENSEMBLE_FULL_ACCEPTANCE is set, which scales them to 100,000 entries.
"""

import os
import unittest

import numpy as np

from fpensemble.core import ModelTag
from fpensemble.evaluation import ScoreSample, OpenSetOutcome
from fpensemble.evaluation import tar_at_fmr, cmc, fpir_at, throughput_bench
from fpensemble.experiments import fusion_benefit
from fpensemble.gallery import Gallery, SearchResult
from fpensemble.synth import SyntheticSpec

FULL = bool(os.environ.get('FPENSEMBLE_FULL_ACCEPTANCE'))
RATE_FLOOR = 5e5


def unit_rows(rng, n, dim):
    rows = rng.standard_normal((n, dim), dtype=np.float32)
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class TestThroughput(unittest.TestCase):
    entries = 100_000 if FULL else 20_000
    seconds = 2.0 if FULL else 0.5

    @classmethod
    def setUpClass(cls):
        rng = np.random.default_rng(0)
        cls.gallery = Gallery.from_matrices(
                [f'e{n:07d}' for n in range(cls.entries)],
                {ModelTag.O: unit_rows(rng, cls.entries, 192)})
        cls.probes = list(unit_rows(rng, 16, 192))

    def test_single_thread_rate(self):
        result = throughput_bench(self.gallery, ModelTag.O, self.probes,
                                  self.seconds)
        self.assertGreaterEqual(result.rate, RATE_FLOOR)
        self.assertEqual(result.entries_scanned % self.entries, 0)
        self.assertEqual(result.gallery_bytes, self.entries * 192 * 4)

    @unittest.skipUnless(FULL, "full acceptance only")
    def test_rate_is_stable(self):
        rates = [throughput_bench(self.gallery, ModelTag.O, self.probes,
                                  self.seconds).rate for _ in range(3)]
        self.assertLess(max(rates) / min(rates), 2.0)


class TestFusionBenefit(unittest.TestCase):
    def test_fused_not_worse_than_original(self):
        spec = SyntheticSpec(n_subjects=100, impressions_per_subject=4,
                             noise_level=0.4, seed=0)
        result = fusion_benefit(spec, 20, 'ORM')
        self.assertGreaterEqual(result.mean_difference, 0.0)
        self.assertGreaterEqual(result.ttest.t, 0.0)

    def test_summary(self):
        spec = SyntheticSpec(n_subjects=20, impressions_per_subject=4,
                             image_size=64, noise_level=0.4, seed=0)
        result = fusion_benefit(spec, 3, 'ORM')
        self.assertEqual(len(result.baseline), 3)
        self.assertEqual(len(result.fused), 3)
        for value in result.baseline + result.fused:
            self.assertTrue(0 <= value <= 1)
        self.assertEqual(result.ttest.t > 0, result.mean_difference > 0)
        self.assertEqual(fusion_benefit(spec, 3, 'ORM'), result)


class TestMonotonicity(unittest.TestCase):
    def test_tar_in_fmr(self):
        fmrs = [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0]
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                sample = ScoreSample(rng.normal(0.6, 0.2, 1000),
                                     rng.normal(0.0, 0.2, 1000))
                tars = [tar_at_fmr(sample, f) for f in fmrs]
                self.assertEqual(tars, sorted(tars))

    def test_cmc_in_rank(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                results = []
                for _ in range(1000):
                    order = rng.permutation(50)
                    ranked = [(f'g{i}', 1.0 - r / 50)
                              for r, i in enumerate(order)]
                    results.append((SearchResult(ranked, 50, 50), 'g0'))
                curve = cmc(results, 50).hits_at_rank
                self.assertEqual(list(curve), sorted(curve))
                self.assertEqual(curve[-1], 1.0)

    def test_fpir_in_threshold(self):
        for seed in range(10):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                outcome = OpenSetOutcome([], rng.normal(0, 0.2, 1000))
                fpirs = [fpir_at(outcome, t)
                         for t in np.linspace(-1, 1, 41)]
                self.assertEqual(fpirs, sorted(fpirs, reverse=True))
