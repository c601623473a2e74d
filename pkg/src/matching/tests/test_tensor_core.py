import itertools
import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose, assert_array_equal

from matching.exceptions import (
    DimensionMismatchError,
    InvalidProblemError,
    InvalidTensorError,
    NonFiniteInputError,
    ThresholdExceededError,
)
from matching.solvers.lap import AssignmentVector
from matching.solvers.tensor_core import (
    LiftedOperator,
    MatchingShape,
    SparseSymmetricTensor3,
    alpha_bound,
    contract3_mat,
    contract3_vec,
    eval_f3,
    eval_f4_alpha,
    eval_g4,
    eval_s3,
    eval_s4_alpha,
    exact_alpha,
    f3_norm,
    f4_norm_exact,
    gradient_s4_alpha,
    hessian_s4_alpha,
    lemma1_witness,
    lift_contract_mat,
    lift_contract_vec,
    to_dense3,
)
from matching.utils.selfcheck_helper import dense_f4, random_assignment, random_tensor


def unit(n, *positions):
    """Sum of 1-based unit vectors."""
    x = np.zeros(n)
    for p in positions:
        x[p - 1] += 1.0
    return x


class MatchingShapeTestCase(SimpleTestCase):
    def test_row_major_linearization(self):
        shape = MatchingShape(2, 3)
        self.assertEqual(shape.n, 6)
        self.assertEqual(shape.linear_index(1, 2), 5)
        self.assertEqual(shape.pair(4), (1, 1))
        indices = [shape.linear_index(i, j) for i in range(2) for j in range(3)]
        self.assertEqual(indices, list(range(6)))

    def test_rejects_more_rows_than_columns(self):
        with self.assertRaises(InvalidProblemError):
            MatchingShape(3, 2)
        with self.assertRaises(InvalidProblemError):
            MatchingShape(0, 2)


class SparseSymmetricTensor3TestCase(SimpleTestCase):
    def setUp(self):
        self.shape = MatchingShape(2, 3)

    def test_orbits_are_canonicalized_and_summed(self):
        tensor = SparseSymmetricTensor3.from_orbits(self.shape, [(3, 1, 2, 0.5), (1, 2, 3, 0.25), (2, 4, 6, 1.0)])
        self.assertEqual(list(tensor.orbits()), [(1, 2, 3, 0.75), (2, 4, 6, 1.0)])
        self.assertEqual(tensor.num_orbits, 2)

    def test_from_entries_uses_zero_based_triples(self):
        tensor = SparseSymmetricTensor3.from_entries(self.shape, [[5, 0, 2]], [2.0])
        assert_array_equal(tensor.indices, [[0, 2, 5]])

    def test_rejects_repeated_index(self):
        with self.assertRaises(InvalidTensorError):
            SparseSymmetricTensor3.from_orbits(self.shape, [(1, 1, 2, 1.0)])

    def test_rejects_bad_values_and_indices(self):
        with self.assertRaises(InvalidTensorError):
            SparseSymmetricTensor3.from_orbits(self.shape, [(1, 2, 3, -1.0)])
        with self.assertRaises(InvalidTensorError):
            SparseSymmetricTensor3.from_orbits(self.shape, [(1, 2, 3, float('nan'))])
        with self.assertRaises(InvalidTensorError):
            SparseSymmetricTensor3.from_orbits(self.shape, [(1, 2, 7, 1.0)])

    def test_is_immutable(self):
        tensor = SparseSymmetricTensor3(self.shape)
        with self.assertRaises(AttributeError):
            tensor.values = np.ones(1)
        with self.assertRaises(ValueError):
            tensor.values[:] = 1.0


class ThirdOrderTestCase(SimpleTestCase):
    def setUp(self):
        self.shape = MatchingShape(2, 2)
        self.tensor = SparseSymmetricTensor3.from_orbits(self.shape, [(1, 2, 3, 1.0)])
        self.rng = np.random.default_rng(7)

    def test_eval_s3(self):
        self.assertEqual(eval_s3(self.tensor, unit(4, 1, 2, 3)), 6.0)
        self.assertEqual(eval_s3(self.tensor, unit(4, 1)), 0.0)
        self.assertEqual(eval_s3(SparseSymmetricTensor3(self.shape), self.rng.random(4)), 0.0)

    def test_eval_s3_matches_dense_contraction(self):
        tensor = random_tensor(self.rng, MatchingShape(3, 3), 20)
        x = self.rng.standard_normal(9)
        dense = to_dense3(tensor)
        assert_allclose(eval_s3(tensor, x), np.einsum('ijk,i,j,k->', dense, x, x, x), rtol=1e-12)

    def test_eval_s3_validates_input(self):
        with self.assertRaises(DimensionMismatchError):
            eval_s3(self.tensor, np.ones(3))
        with self.assertRaises(NonFiniteInputError):
            eval_s3(self.tensor, np.array([1.0, np.inf, 0.0, 0.0]))

    def test_contract3_vec(self):
        assert_array_equal(contract3_vec(self.tensor, unit(4, 1), unit(4, 2)), unit(4, 3))
        assert_array_equal(contract3_vec(self.tensor, np.zeros(4), np.zeros(4)), np.zeros(4))
        assert_array_equal(contract3_vec(self.tensor, unit(4, 1), unit(4, 1)), np.zeros(4))

    def test_contract3_mat(self):
        expected = np.zeros((4, 4))
        expected[1, 2] = expected[2, 1] = 1.0
        assert_array_equal(contract3_mat(self.tensor, unit(4, 1)), expected)
        assert_array_equal(contract3_mat(self.tensor, np.zeros(4)), np.zeros((4, 4)))
        tensor = random_tensor(self.rng, MatchingShape(3, 4), 30)
        mat = contract3_mat(tensor, self.rng.standard_normal(12))
        assert_allclose(mat, mat.T, rtol=0, atol=1e-14)

    @override_settings(HYPERMATCH={'MATERIALIZATION_THRESHOLD': 3})
    def test_contract3_mat_respects_threshold(self):
        with self.assertRaises(ThresholdExceededError):
            contract3_mat(self.tensor, unit(4, 1))

    def test_eval_f3_is_trilinear(self):
        self.assertEqual(eval_f3(self.tensor, unit(4, 1), unit(4, 2), unit(4, 3)), 1.0)

    def test_f3_norm(self):
        self.assertAlmostEqual(f3_norm(self.tensor), math.sqrt(6))
        self.assertEqual(f3_norm(SparseSymmetricTensor3(self.shape)), 0.0)
        two = SparseSymmetricTensor3.from_orbits(self.shape, [(1, 2, 3, 1.0), (1, 2, 4, 2.0)])
        self.assertAlmostEqual(f3_norm(two), math.sqrt(30))

    def test_lemma1_witness(self):
        tensor = random_tensor(self.rng, MatchingShape(3, 3), 10)
        value, mirrored = lemma1_witness(tensor, self.rng.standard_normal(9), self.rng.standard_normal(9))
        self.assertNotEqual(value, 0.0)
        self.assertLess(min(value, mirrored), 0.0)


class LiftedTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.shape = MatchingShape(3, 4)
        self.tensor = random_tensor(self.rng, self.shape, 25)

    def test_eval_g4(self):
        ones = np.ones(2)
        self.assertAlmostEqual(eval_g4(ones, ones, ones, ones), 4.0)
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        self.assertAlmostEqual(eval_g4(e1, e2, e1, e2), 1.0 / 3.0)
        self.assertEqual(eval_g4(ones, np.zeros(2), np.zeros(2), np.zeros(2)), 0.0)
        x = self.rng.standard_normal(5)
        self.assertAlmostEqual(eval_g4(x, x, x, x), float(np.dot(x, x)) ** 2)
        with self.assertRaises(DimensionMismatchError):
            eval_g4(ones, np.ones(3), ones, ones)

    def test_lift_contract_vec_small_orbit(self):
        tensor = SparseSymmetricTensor3.from_orbits(MatchingShape(2, 2), [(1, 2, 3, 1.0)])
        out = lift_contract_vec(LiftedOperator(tensor), unit(4, 1), unit(4, 2), unit(4, 3))
        assert_array_equal(out, [2.0, 2.0, 2.0, 1.0])

    def test_lift_contract_vec_zero_tensor(self):
        op = LiftedOperator(SparseSymmetricTensor3(self.shape))
        x, y, z = (self.rng.standard_normal(12) for _ in range(3))
        assert_array_equal(lift_contract_vec(op, x, y, z), np.zeros(12))

    def test_lifted_contractions_match_dense_expansion(self):
        alpha = 0.7
        op = LiftedOperator(self.tensor, alpha)
        dense = dense_f4(self.tensor, alpha)
        x, y, z, t = (self.rng.standard_normal(12) for _ in range(4))
        assert_allclose(lift_contract_vec(op, x, y, z), np.einsum('ijkl,i,j,k->l', dense, x, y, z), rtol=1e-10, atol=1e-12)
        assert_allclose(lift_contract_mat(op, x, y), np.einsum('ijkl,i,j->kl', dense, x, y), rtol=1e-10, atol=1e-12)
        assert_allclose(eval_f4_alpha(op, x, y, z, t), np.einsum('ijkl,i,j,k,l->', dense, x, y, z, t), rtol=1e-10)

    def test_eval_f4_alpha_is_symmetric(self):
        op = LiftedOperator(self.tensor, 0.3)
        vectors = [self.rng.standard_normal(12) for _ in range(4)]
        reference = eval_f4_alpha(op, *vectors)
        for perm in itertools.permutations(vectors):
            assert_allclose(eval_f4_alpha(op, *perm), reference, rtol=1e-10)

    def test_eval_f4_alpha_identity_orbit(self):
        tensor = SparseSymmetricTensor3.from_orbits(MatchingShape(3, 3), [(1, 5, 9, 1.0)])
        x = unit(9, 1, 5, 9)
        self.assertAlmostEqual(eval_f4_alpha(LiftedOperator(tensor), x, x, x, x), 72.0)
        self.assertAlmostEqual(eval_f4_alpha(LiftedOperator(tensor, 2.0), x, x, x, x), 72.0 + 2.0 * 9.0)

    def test_lifting_identity(self):
        op = LiftedOperator(self.tensor)
        x = self.rng.standard_normal(12)
        assert_allclose(eval_f4_alpha(op, x, x, x, x), 4.0 * eval_s3(self.tensor, x) * x.sum(), rtol=1e-12)
        assert_allclose(float(np.dot(lift_contract_vec(op, x, x, x), x)), eval_s4_alpha(op, x), rtol=1e-12)

    def test_constant_shift_on_assignments(self):
        alpha = 5.0
        point = random_assignment(self.rng, self.shape).indicator
        shift = eval_s4_alpha(LiftedOperator(self.tensor, alpha), point) - eval_s4_alpha(LiftedOperator(self.tensor), point)
        assert_allclose(shift, alpha * self.shape.n1 ** 2, rtol=1e-10)
        assert_allclose(eval_s4_alpha(LiftedOperator(self.tensor), point),
                        4.0 * self.shape.n1 * eval_s3(self.tensor, point), rtol=1e-12)

    def test_gradient_matches_central_differences(self):
        op = LiftedOperator(self.tensor, 0.5)
        x = self.rng.standard_normal(12)
        h = 1e-4
        numeric = np.array([(eval_s4_alpha(op, x + h * e) - eval_s4_alpha(op, x - h * e)) / (2 * h) for e in np.eye(12)])
        analytic = gradient_s4_alpha(op, x)
        self.assertLess(np.linalg.norm(numeric - analytic), 1e-5 * (1.0 + np.linalg.norm(analytic)))

    def test_hessian_matches_central_differences(self):
        op = LiftedOperator(self.tensor, 0.7)
        x = self.rng.standard_normal(12)
        h = 1e-4
        basis = np.eye(12)
        numeric = np.empty((12, 12))
        for i, j in itertools.product(range(12), repeat=2):
            di, dj = h * basis[i], h * basis[j]
            numeric[i, j] = (
                eval_s4_alpha(op, x + di + dj) - eval_s4_alpha(op, x + di - dj)
                - eval_s4_alpha(op, x - di + dj) + eval_s4_alpha(op, x - di - dj)
            ) / (4 * h * h)
        analytic = 12.0 * lift_contract_mat(op, x, x)
        assert_allclose(hessian_s4_alpha(op, x), analytic, rtol=1e-12)
        self.assertLess(np.linalg.norm(numeric - analytic), 1e-5 * (1.0 + np.linalg.norm(analytic)))

    def test_hessian_is_psd_at_exact_alpha(self):
        op = LiftedOperator(self.tensor, exact_alpha(self.tensor))
        for _ in range(5):
            eigenvalues = np.linalg.eigvalsh(hessian_s4_alpha(op, self.rng.standard_normal(12)))
            self.assertGreaterEqual(eigenvalues[0], -1e-8 * (1.0 + eigenvalues[-1]))

    def test_negative_alpha_rejected(self):
        with self.assertRaises(InvalidTensorError):
            LiftedOperator(self.tensor, -1.0)


class AlphaTestCase(SimpleTestCase):
    def test_alpha_bound_single_orbit(self):
        tensor = SparseSymmetricTensor3.from_orbits(MatchingShape(3, 3), [(1, 2, 3, 1.0)])
        self.assertAlmostEqual(alpha_bound(tensor), 36.0 * math.sqrt(6.0))
        self.assertEqual(alpha_bound(SparseSymmetricTensor3(MatchingShape(3, 3))), 0.0)

    def test_bound_dominates_exact_alpha(self):
        rng = np.random.default_rng(3)
        for n1, n2 in ((2, 3), (3, 4), (4, 5)):
            tensor = random_tensor(rng, MatchingShape(n1, n2), 15)
            norm = f4_norm_exact(tensor)
            self.assertLessEqual(norm, 4.0 * math.sqrt(n1 * n2) * f3_norm(tensor) * (1 + 1e-12))
            self.assertGreaterEqual(alpha_bound(tensor), exact_alpha(tensor))

    def test_f4_norm_exact_single_orbit(self):
        tensor = SparseSymmetricTensor3.from_orbits(MatchingShape(1, 3), [(1, 2, 3, 1.0)])
        dense = to_dense3(tensor)
        total = 0.0
        for i, j, k, l in itertools.product(range(3), repeat=4):
            entry = dense[i, j, k] + dense[i, j, l] + dense[i, k, l] + dense[j, k, l]
            total += entry * entry
        self.assertAlmostEqual(f4_norm_exact(tensor), math.sqrt(total))
        self.assertEqual(f4_norm_exact(SparseSymmetricTensor3(MatchingShape(1, 3))), 0.0)

    @override_settings(HYPERMATCH={'BRUTE_FORCE_THRESHOLD': 8})
    def test_f4_norm_exact_respects_threshold(self):
        with self.assertRaises(ThresholdExceededError):
            f4_norm_exact(SparseSymmetricTensor3(MatchingShape(3, 3)))

    def test_assignment_indicator_has_norm_n1(self):
        point = AssignmentVector(MatchingShape(3, 5), (4, 0, 2))
        self.assertEqual(float(np.dot(point.indicator, point.indicator)), 3.0)
