import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose, assert_array_equal

from matching.exceptions import DegenerateTriangleError, InvalidProblemError, NonFiniteInputError
from matching.solvers.lap import AssignmentVector
from matching.solvers.tensor_core import eval_s3
from matching.utils.affinity_helper import (
    AffinityParams,
    SamplingConfig,
    build_matrix2,
    build_tensor,
    distance_affinity,
    nearest_features,
    sample_triples,
    triangle_feature,
    triangle_features,
)


class TriangleFeatureTestCase(SimpleTestCase):
    def test_equilateral(self):
        points = [[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]]
        assert_allclose(triangle_feature(points, (0, 1, 2)), [math.sqrt(3) / 2] * 3, rtol=1e-12)

    def test_right_isoceles_in_vertex_order(self):
        points = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
        assert_allclose(triangle_feature(points, (0, 1, 2)), [1.0, math.sqrt(2) / 2, math.sqrt(2) / 2], rtol=1e-12)
        assert_allclose(triangle_feature(points, (1, 0, 2)), [math.sqrt(2) / 2, 1.0, math.sqrt(2) / 2], rtol=1e-12)

    def test_scaled_copy_has_same_feature(self):
        points = np.array([[0.1, 0.3], [1.7, -0.2], [0.4, 2.2]])
        assert_allclose(triangle_feature(points * 2, (0, 1, 2)), triangle_feature(points, (0, 1, 2)), rtol=1e-12)

    def test_degenerate_triangles(self):
        with self.assertRaises(DegenerateTriangleError):
            triangle_feature([[0, 0], [1, 1], [2, 2]], (0, 1, 2))
        with self.assertRaises(DegenerateTriangleError):
            triangle_feature([[0, 0], [0, 0], [1, 0]], (0, 1, 2))
        with self.assertRaises(InvalidProblemError):
            triangle_feature([[0, 0], [1, 0], [0, 1]], (0, 0, 2))

    def test_vectorized_mask(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
        features, valid = triangle_features(points, [[0, 1, 2], [0, 1, 3]])
        assert_array_equal(valid, [False, True])
        assert_array_equal(features[0], [0.0, 0.0, 0.0])


class SampleTriplesTestCase(SimpleTestCase):
    def test_full_enumeration(self):
        triples = sample_triples(np.random.default_rng(0), 5, 100)
        self.assertEqual(triples.shape, (10, 3))

    def test_distinct_sorted_triples(self):
        for cap in (None, 10):
            triples = sample_triples(np.random.default_rng(0), 30, 200, cap)
            self.assertEqual(triples.shape, (200, 3))
            self.assertTrue(np.all(triples[:, 0] < triples[:, 1]))
            self.assertTrue(np.all(triples[:, 1] < triples[:, 2]))
            self.assertEqual(len({tuple(t) for t in triples.tolist()}), 200)

    def test_seeded(self):
        first = sample_triples(np.random.default_rng(42), 20, 50)
        second = sample_triples(np.random.default_rng(42), 20, 50)
        assert_array_equal(first, second)


class NearestFeaturesTestCase(SimpleTestCase):
    def test_matches_brute_force_and_thread_count(self):
        rng = np.random.default_rng(3)
        queries, pool = rng.random((40, 3)), rng.random((90, 3))
        expected = np.argsort(((queries[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2), axis=1, kind='stable')[:, :7]
        indices, distances = nearest_features(queries, pool, 7)
        assert_array_equal(indices, expected)
        self.assertTrue(np.all(np.diff(distances, axis=1) >= 0))
        threaded, _ = nearest_features(queries, pool, 7, threads=4)
        assert_array_equal(threaded, indices)

    def test_k_is_clipped_to_pool_size(self):
        rng = np.random.default_rng(4)
        queries, pool = rng.random((5, 3)), rng.random((6, 3))
        indices, distances = nearest_features(queries, pool, 50)
        self.assertEqual(indices.shape, (5, 6))
        assert_array_equal(np.sort(indices, axis=1), np.tile(np.arange(6), (5, 1)))
        self.assertTrue(np.all(np.diff(distances, axis=1) >= 0))

    def test_single_neighbour_keeps_two_dimensions(self):
        pool = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        indices, distances = nearest_features(np.array([[0.9, 0.9, 0.9]]), pool, 1)
        assert_array_equal(indices, [[1]])
        assert_allclose(distances, [[0.03]])


class BuildTensorTestCase(SimpleTestCase):
    def setUp(self):
        self.points = np.array([[0.0, 0.0], [3.0, 0.2], [0.7, 2.1], [2.6, 3.3]])
        self.rng = np.random.default_rng(17)

    def test_identical_point_sets_score_one_per_triangle(self):
        tensor = build_tensor(self.points, self.points)
        identity = AssignmentVector.identity(tensor.shape)
        self.assertAlmostEqual(eval_s3(tensor, identity.indicator), 6.0 * 4)
        self.assertTrue(np.all(tensor.values > 0))
        self.assertTrue(np.all(tensor.values <= 1.0))

    def test_underflowed_affinities_are_dropped(self):
        tensor = build_tensor(self.points, self.points, SamplingConfig(knn=1000), AffinityParams(gamma=1e12))
        identity = AssignmentVector.identity(tensor.shape)
        self.assertTrue(np.all(tensor.values > 0))
        self.assertAlmostEqual(eval_s3(tensor, identity.indicator), 6.0 * 4)
        # Four template triangles against four scene triangles in six orderings.
        self.assertLess(tensor.num_orbits, 4 * 4 * 6)

    def test_canonical_triples(self):
        scene = self.rng.standard_normal((7, 2))
        tensor = build_tensor(scene[:5], scene, SamplingConfig(triples_per_point=5, knn=20))
        self.assertTrue(np.all(tensor.indices[:, 0] < tensor.indices[:, 1]))
        self.assertTrue(np.all(tensor.indices[:, 1] < tensor.indices[:, 2]))

    def test_default_gamma_normalizes_mean_exponent(self):
        scene = self.rng.standard_normal((6, 2))
        tensor = build_tensor(scene[:4], scene * 1.1 + 0.05, SamplingConfig(knn=1000))
        self.assertAlmostEqual(float(np.mean(-np.log(tensor.values))), 1.0, places=9)

    def test_repeatable(self):
        scene = self.rng.standard_normal((9, 2))
        sampling = SamplingConfig(triples_per_point=4, knn=15, seed=5)
        first = build_tensor(scene[:6], scene, sampling, threads=1)
        second = build_tensor(scene[:6], scene, sampling, threads=3)
        assert_array_equal(first.indices, second.indices)
        assert_array_equal(first.values, second.values)

    def test_scaling_the_scene_keeps_orbit_values(self):
        template = self.rng.standard_normal((4, 2))
        scene = np.vstack([template + 0.03 * self.rng.standard_normal((4, 2)), self.rng.standard_normal((2, 2))])
        sampling = SamplingConfig(knn=1000, seed=3)
        plain = build_tensor(template, scene, sampling)
        scaled = build_tensor(template, scene * 1.5, sampling)
        assert_array_equal(plain.indices, scaled.indices)
        assert_allclose(plain.values, scaled.values, rtol=0, atol=1e-9)

    @override_settings(HYPERMATCH={'Q_TRIPLE_CAP': 30})
    def test_scene_triples_are_capped(self):
        scene = self.rng.standard_normal((12, 2))
        tensor = build_tensor(scene[:3], scene, SamplingConfig(knn=10_000))
        # One template triangle against at most 30 scene triangles in six orderings.
        self.assertLessEqual(tensor.num_orbits, 30 * 6)

    def test_errors(self):
        with self.assertRaises(InvalidProblemError):
            build_tensor(self.points, self.points[:3])
        with self.assertRaises(InvalidProblemError):
            build_tensor(self.points[:2], self.points)
        with self.assertRaises(NonFiniteInputError):
            build_tensor(self.points, np.vstack([self.points, [[np.nan, 0.0]]]))
        with self.assertRaises(InvalidProblemError):
            AffinityParams(gamma=0.0)
        with self.assertRaises(InvalidProblemError):
            SamplingConfig(knn=0)


class BuildMatrix2TestCase(SimpleTestCase):
    def test_identical_pair_distances(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        A = build_matrix2(points, points)
        # (0, 0) and (1, 1) keep the template distance.
        self.assertEqual(A.matrix[0, 4], 1.0)
        self.assertTrue(np.all((A.matrix >= 0) & (A.matrix <= 1)))
        assert_array_equal(A.matrix, A.matrix.T)

    def test_gap_of_sigma(self):
        P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        Q = np.array([[0.0, 0.0], [1.5, 0.0], [0.0, 1.0]])
        affinity = distance_affinity(P, Q, 0.5)
        self.assertAlmostEqual(affinity[0 * 3 + 0, 1 * 3 + 1], math.exp(-1.0))

    def test_conflicting_pairs_are_zero(self):
        points = np.random.default_rng(0).standard_normal((3, 2))
        affinity = distance_affinity(points, points, 0.5)
        blocks = affinity.reshape(3, 3, 3, 3)
        for i in range(3):
            assert_array_equal(blocks[i, :, i, :], np.zeros((3, 3)))
            assert_array_equal(blocks[:, i, :, i], np.zeros((3, 3)))
