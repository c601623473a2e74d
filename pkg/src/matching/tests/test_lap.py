import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from matching.exceptions import (
    DimensionMismatchError,
    InvalidAssignmentError,
    NonFiniteInputError,
)
from matching.solvers.lap import (
    AssignmentVector,
    flatten_profit,
    lap_objective,
    reshape_to_profit,
    solve_lap_max,
)
from matching.solvers.tensor_core import MatchingShape
from matching.utils.selfcheck_helper import brute_force_lap


class AssignmentVectorTestCase(SimpleTestCase):
    def setUp(self):
        self.shape = MatchingShape(2, 3)

    def test_indicator_and_row_map_agree(self):
        point = AssignmentVector(self.shape, (2, 0))
        assert_array_equal(point.indicator, [0, 0, 1, 1, 0, 0])
        self.assertEqual(AssignmentVector.from_indicator(self.shape, point.indicator), point)
        self.assertEqual(point.one_based(), [3, 1])

    def test_rejects_shared_column(self):
        with self.assertRaises(InvalidAssignmentError):
            AssignmentVector(self.shape, (1, 1))

    def test_rejects_wrong_length_and_range(self):
        with self.assertRaises(InvalidAssignmentError):
            AssignmentVector(self.shape, (0,))
        with self.assertRaises(InvalidAssignmentError):
            AssignmentVector(self.shape, (0, 3))

    def test_from_indicator_rejects_points_outside_m(self):
        with self.assertRaises(InvalidAssignmentError):
            AssignmentVector.from_indicator(self.shape, [1, 1, 0, 0, 0, 1])
        with self.assertRaises(InvalidAssignmentError):
            AssignmentVector.from_indicator(self.shape, [0.5, 0, 0, 0, 0, 1])


class ReshapeTestCase(SimpleTestCase):
    def test_reshape_follows_row_major_order(self):
        assert_array_equal(reshape_to_profit([1, 2, 3, 4], MatchingShape(2, 2)), [[1, 2], [3, 4]])
        assert_array_equal(reshape_to_profit(np.zeros(6), MatchingShape(2, 3)), np.zeros((2, 3)))

    def test_reshape_then_flatten_is_identity(self):
        v = np.arange(6.0)
        assert_array_equal(flatten_profit(reshape_to_profit(v, MatchingShape(2, 3))), v)

    def test_length_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            reshape_to_profit(np.zeros(5), MatchingShape(2, 3))


class SolveLapMaxTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_dominant_diagonal(self):
        result = solve_lap_max([[2, 1], [1, 2]])
        self.assertEqual(result.row_map, (0, 1))
        self.assertEqual(lap_objective([[2, 1], [1, 2]], result), 4.0)

    def test_single_row(self):
        result = solve_lap_max([[1, 3]])
        self.assertEqual(result.one_based(), [2])
        self.assertEqual(lap_objective([[1, 3]], result), 3.0)

    def test_matches_exhaustive_optimum(self):
        for _ in range(20):
            profit = self.rng.standard_normal((5, 7))
            self.assertAlmostEqual(lap_objective(profit, solve_lap_max(profit)), brute_force_lap(profit), places=12)
        profit = self.rng.standard_normal((6, 8))
        self.assertAlmostEqual(lap_objective(profit, solve_lap_max(profit)), brute_force_lap(profit), places=12)

    def test_row_shift_keeps_assignment(self):
        profit = self.rng.standard_normal((4, 6))
        shifted = profit + self.rng.standard_normal((4, 1)) * 10
        self.assertEqual(solve_lap_max(profit), solve_lap_max(shifted))

    def test_deterministic(self):
        profit = np.ones((3, 5))
        self.assertEqual(solve_lap_max(profit), solve_lap_max(profit.copy()))

    def test_errors(self):
        with self.assertRaises(InvalidAssignmentError):
            solve_lap_max(np.ones((3, 2)))
        with self.assertRaises(NonFiniteInputError):
            solve_lap_max([[1.0, np.nan]])
        with self.assertRaises(DimensionMismatchError):
            solve_lap_max(np.ones(3))
