import unittest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from fpensemble.synth import SyntheticSpec, synthesize, generate_synthetic
from fpensemble.synth import load_dataset, subject_of, subject_name
from fpensemble.util import readtsv
from fpensemble.exceptions import DataError


def tree_bytes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob('*')) if p.is_file()}


def find_shift(a, b, limit):
    """ (ex, ey) such that a[r, c] == b[r + ey, c + ex] on the overlap """
    h, w = a.shape
    for ey in range(-limit, limit + 1):
        for ex in range(-limit, limit + 1):
            ra, rb = slice(max(0, -ey), min(h, h - ey)), \
                slice(max(0, ey), min(h, h + ey))
            ca, cb = slice(max(0, -ex), min(w, w - ex)), \
                slice(max(0, ex), min(w, w + ex))
            if np.array_equal(a[ra, ca], b[rb, cb]):
                return ex, ey
    return None


class TestSyntheticSpec(unittest.TestCase):
    def test_defaults(self):
        spec = SyntheticSpec()
        self.assertEqual((spec.n_subjects, spec.impressions_per_subject,
                          spec.image_size, spec.noise_level),
                         (50, 4, 128, 0.2))
        self.assertEqual(spec.max_shift, 8)

    def test_rejects(self):
        for kwargs in [{'n_subjects': 0}, {'impressions_per_subject': 0},
                       {'image_size': 8}, {'noise_level': 1.0},
                       {'noise_level': -0.1}, {'minutiae_per_subject': -1},
                       {'seed': -1}]:
            with self.subTest(**kwargs):
                self.assertRaises(DataError, SyntheticSpec, **kwargs)


class TestNames(unittest.TestCase):
    def test_subject_of(self):
        self.assertEqual(subject_of('s0003_2'), 's0003')
        self.assertEqual(subject_of('left_hand_10'), 'left_hand')
        self.assertEqual(subject_name(7), 's0007')
        for bad in ['s0003', '_2', 's0003_x', 's0003_\u00b2']:
            with self.subTest(image_id=bad):
                self.assertRaises(DataError, subject_of, bad)


class TestSynthesize(unittest.TestCase):
    def test_layout(self):
        with TemporaryDirectory() as tmp:
            spec = SyntheticSpec(n_subjects=50, impressions_per_subject=4,
                                 image_size=32, seed=3)
            generate_synthetic(spec, tmp)
            root = Path(tmp)
            self.assertEqual(len(list(root.glob('images/*.pgm'))), 200)
            self.assertEqual(len(list(root.glob('minutiae/*.minu'))), 50)
            rows = list(readtsv(root / 'labels.tsv'))
            self.assertEqual(len(rows), 200)
            for row in rows:
                self.assertTrue((root / row['image']).is_file())
                self.assertEqual(row['minutiae'],
                                 f"minutiae/{row['subject']}.minu")

    def test_reproducible(self):
        spec = SyntheticSpec(n_subjects=6, impressions_per_subject=3,
                             image_size=40, seed=11)
        with TemporaryDirectory() as a, TemporaryDirectory() as b:
            generate_synthetic(spec, a)
            generate_synthetic(spec, b)
            self.assertEqual(tree_bytes(a), tree_bytes(b))

    def test_seed_matters(self):
        a = synthesize(SyntheticSpec(n_subjects=2, image_size=32, seed=1))
        b = synthesize(SyntheticSpec(n_subjects=2, image_size=32, seed=2))
        self.assertNotEqual(a.samples[0].image, b.samples[0].image)

    def test_subjects_independent_of_count(self):
        small = synthesize(SyntheticSpec(n_subjects=2, image_size=32))
        large = synthesize(SyntheticSpec(n_subjects=5, image_size=32))
        for sample in small:
            self.assertEqual(sample.image, large[sample.image_id].image)

    def test_zero_noise_is_translation(self):
        spec = SyntheticSpec(n_subjects=10, impressions_per_subject=3,
                             image_size=48, noise_level=0.0, seed=5)
        dataset = synthesize(spec)
        for subject in dataset.subjects():
            first = dataset.sample(subject, 0).image.pixels
            for i in (1, 2):
                with self.subTest(subject=subject, impression=i):
                    other = dataset.sample(subject, i).image.pixels
                    self.assertIsNotNone(
                        find_shift(first, other, 2 * spec.max_shift))

    def test_minutiae_in_bounds(self):
        dataset = synthesize(SyntheticSpec(n_subjects=5, image_size=32,
                                           minutiae_per_subject=30))
        for sample in dataset:
            self.assertEqual(len(sample.minutiae), 30)
            for p in sample.minutiae.points:
                self.assertTrue(p.in_bounds(32, 32))

    def test_load_matches_generated(self):
        spec = SyntheticSpec(n_subjects=4, impressions_per_subject=2,
                             image_size=32, seed=9)
        with TemporaryDirectory() as tmp:
            written = generate_synthetic(spec, tmp)
            loaded = load_dataset(tmp)
            self.assertEqual(len(loaded), 8)
            self.assertEqual(loaded.subjects(), written.subjects())
            for a, b in zip(written, loaded):
                self.assertEqual(a.image_id, b.image_id)
                self.assertEqual(a.image, b.image)
                self.assertEqual(a.minutiae, b.minutiae)
            self.assertEqual(loaded.subject_impressions(),
                             {f's000{i}': [0, 1] for i in range(4)})
