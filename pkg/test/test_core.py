import unittest

import numpy as np

from fpensemble.core import ModelTag, ModelSubset, EmbeddingVector
from fpensemble.core import cosine_similarity, normalize, subject_id
from fpensemble.exceptions import DataError, DimensionMismatch
from fpensemble.exceptions import NormalizationError


def random_embedding(rng, dim=192):
    return EmbeddingVector.from_raw(rng.standard_normal(dim))


class TestModelTag(unittest.TestCase):
    def test_parse(self):
        cases = [('O', ModelTag.O), ('r', ModelTag.R), (4, ModelTag.M),
                 ('2', ModelTag.X), (ModelTag.Y, ModelTag.Y)]
        for text, expected in cases:
            with self.subTest(text=text):
                self.assertIs(ModelTag.parse(text), expected)

    def test_parse_rejects(self):
        for text in ['Q', '', '9', 'OR']:
            with self.subTest(text=text):
                self.assertRaises(ValueError, ModelTag.parse, text)

    def test_str(self):
        self.assertEqual(str(ModelTag.M), 'M')
        self.assertEqual(int(ModelTag.M), 4)


class TestModelSubset(unittest.TestCase):
    def test_parse_forms(self):
        for text in ['ORM', 'O,R,M', 'M R O', 'mro']:
            with self.subTest(text=text):
                self.assertEqual(ModelSubset(text),
                                 {ModelTag.O, ModelTag.R, ModelTag.M})

    def test_iterates_in_tag_order(self):
        self.assertEqual(list(ModelSubset('MXO')),
                         [ModelTag.O, ModelTag.X, ModelTag.M])
        self.assertEqual(str(ModelSubset('MXO')), 'OXM')

    def test_rejects_empty_and_duplicates(self):
        self.assertRaises(DataError, ModelSubset, [])
        self.assertRaises(DataError, ModelSubset, 'OO')
        self.assertRaises(ValueError, ModelSubset, 'OQ')

    def test_subsets(self):
        subsets = list(ModelSubset.all().subsets())
        self.assertEqual(len(subsets), 31)
        self.assertEqual(len(set(subsets)), 31)
        self.assertEqual(subsets[0], ModelSubset('O'))
        self.assertEqual(subsets[-1], ModelSubset.all())


class TestSubjectId(unittest.TestCase):
    def test_valid(self):
        self.assertEqual(subject_id('s0001'), 's0001')
        self.assertEqual(subject_id('é' * 10), 'é' * 10)

    def test_invalid(self):
        for value in ['', 'x' * 4097, 17, None]:
            with self.subTest(value=repr(value)[:20]):
                self.assertRaises(DataError, subject_id, value)


class TestEmbedding(unittest.TestCase):
    def test_from_raw_is_unit(self):
        rng = np.random.default_rng(0)
        for i in range(50):
            with self.subTest(i=i):
                emb = random_embedding(rng, int(rng.integers(2, 300)))
                norm = np.linalg.norm(emb.values.astype(np.float64))
                self.assertAlmostEqual(norm, 1.0, delta=1e-6)
                self.assertEqual(emb.values.dtype, np.float32)

    def test_rejects_non_unit(self):
        self.assertRaises(NormalizationError, EmbeddingVector, [1.0, 1.0])
        self.assertRaises(DataError, EmbeddingVector, [np.nan, 1.0])
        self.assertRaises(DataError, EmbeddingVector, [])

    def test_dim_check(self):
        self.assertRaises(DimensionMismatch, EmbeddingVector, [1.0, 0.0],
                          dim=3)

    def test_zero_vector(self):
        self.assertRaises(NormalizationError, normalize, np.zeros(8))
        self.assertRaises(NormalizationError, normalize, [np.inf, 0])

    def test_read_only(self):
        emb = EmbeddingVector([0.0, 1.0])
        with self.assertRaises(ValueError):
            emb.values[0] = 1.0

    def test_equality(self):
        self.assertEqual(EmbeddingVector([0.0, 1.0]),
                         EmbeddingVector([0.0, 1.0]))
        self.assertNotEqual(EmbeddingVector([0.0, 1.0]),
                            EmbeddingVector([1.0, 0.0]))


class TestCosine(unittest.TestCase):
    def test_properties(self):
        rng = np.random.default_rng(1)
        for i in range(200):
            with self.subTest(seed=i):
                a, b = random_embedding(rng), random_embedding(rng)
                s = cosine_similarity(a, b)
                self.assertEqual(s, cosine_similarity(b, a))
                self.assertTrue(-1 <= s <= 1)
                self.assertAlmostEqual(cosine_similarity(a, a), 1.0,
                                       places=5)

    def test_opposite(self):
        a = EmbeddingVector([1.0, 0.0])
        b = EmbeddingVector([-1.0, 0.0])
        self.assertEqual(cosine_similarity(a, b), -1.0)

    def test_dim_mismatch(self):
        self.assertRaises(DimensionMismatch, cosine_similarity,
                          EmbeddingVector([1.0, 0.0]),
                          EmbeddingVector([1.0, 0.0, 0.0]))
