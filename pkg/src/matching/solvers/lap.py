"""
Linear assignment over the set M of one-to-one matchings.

M holds the binary n1 x n2 matrices with exactly one 1 per row and at most
one 1 per column. The linear problems max_{x in M} <p, x> are solved globally
by the rectangular Hungarian solver in scipy.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from matching.exceptions import DimensionMismatchError, InvalidAssignmentError, NonFiniteInputError
from matching.solvers.tensor_core import MatchingShape, as_vector


@dataclass(frozen=True)
class AssignmentVector:
    """
    An element of M.

    Attributes:
    - shape (MatchingShape): Problem shape.
    - row_map (tuple): 0-based column matched to each of the n1 rows.
    """

    shape: MatchingShape
    row_map: tuple

    def __post_init__(self):
        row_map = tuple(int(c) for c in np.asarray(self.row_map).reshape(-1))
        if len(row_map) != self.shape.n1:
            raise InvalidAssignmentError(
                f"Expected one column per row ({self.shape.n1}), got {len(row_map)}."
            )
        if any(c < 0 or c >= self.shape.n2 for c in row_map):
            raise InvalidAssignmentError(f"Columns must lie in [0, {self.shape.n2}).")
        if len(set(row_map)) != len(row_map):
            raise InvalidAssignmentError("A column is assigned to more than one row.")
        object.__setattr__(self, 'row_map', row_map)

    @classmethod
    def from_indicator(cls, shape, x):
        """
        Reads an assignment from its 0/1 vector in the row-major ordering.

        Raises:
        - InvalidAssignmentError: If the vector is not binary or breaks a row/column constraint.
        """
        x = as_vector(x, shape.n)
        if not np.all((x == 0.0) | (x == 1.0)):
            raise InvalidAssignmentError("Assignment vectors must be binary.")
        matrix = x.reshape(shape.n1, shape.n2)
        if not np.all(matrix.sum(axis=1) == 1.0):
            raise InvalidAssignmentError("Every row must be assigned exactly once.")
        return cls(shape, tuple(np.argmax(matrix, axis=1).tolist()))

    @classmethod
    def identity(cls, shape):
        return cls(shape, tuple(range(shape.n1)))

    @cached_property
    def indicator(self):
        x = np.zeros(self.shape.n)
        x[np.arange(self.shape.n1) * self.shape.n2 + np.asarray(self.row_map, dtype=np.int64)] = 1.0
        x.setflags(write=False)
        return x

    def one_based(self):
        return [c + 1 for c in self.row_map]


def reshape_to_profit(v, shape):
    """
    Inverse of the row-major linearization: entry (i, j) is v[i * n2 + j].

    Args:
    - v (array-like): Vector of length shape.n.
    - shape (MatchingShape): Problem shape.

    Returns:
    - numpy.ndarray: (n1, n2) profit matrix.
    """
    return as_vector(v, shape.n, 'v').reshape(shape.n1, shape.n2)


def flatten_profit(profit):
    return np.asarray(profit, dtype=np.float64).reshape(-1)


def solve_lap_max(profit):
    """
    Globally optimal x in M for max sum_ij profit_ij X_ij.

    Rectangular problems (n1 < n2) are solved directly, without padding.
    Among equally good assignments the solver's fixed scan order decides, so
    identical input always yields the identical assignment.

    Args:
    - profit (array-like): (n1, n2) matrix of finite reals, n1 <= n2.

    Returns:
    - AssignmentVector: The maximizing assignment.

    Raises:
    - NonFiniteInputError: If profit has NaN or infinite entries.
    - InvalidAssignmentError: If n1 > n2.
    """
    profit = np.asarray(profit, dtype=np.float64)
    if profit.ndim != 2:
        raise DimensionMismatchError(f"Profit must be a matrix, got shape {profit.shape}.")
    n1, n2 = profit.shape
    if n1 > n2:
        raise InvalidAssignmentError(f"Need n1 <= n2, got a {n1}x{n2} profit matrix.")
    if not np.all(np.isfinite(profit)):
        raise NonFiniteInputError("Profit matrix contains non-finite entries.")
    rows, cols = linear_sum_assignment(profit, maximize=True)
    return AssignmentVector(MatchingShape(n1, n2), tuple(cols[np.argsort(rows)].tolist()))


def lap_objective(profit, assignment):
    profit = np.asarray(profit, dtype=np.float64)
    return float(profit[np.arange(assignment.shape.n1), list(assignment.row_map)].sum())
