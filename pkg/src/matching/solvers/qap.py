"""
Module: qap.py

Monotonic-ascent subroutines for the quadratic assignment problem
max_{x in M} <x, A x>, used as the block update of the two-block solver.

Classes:
- QapMatrix: Validated symmetric nonnegative n x n matrix.
- QapResult: Discrete outcome of a subroutine call.
- PowerIterationResult: Continuous outcome of a power-type iteration.
- QapSubroutine: Abstract subroutine; IpfpSubroutine and MaxPoolingSubroutine implement it.
- SubroutineFactory: Builds a subroutine from its method name.

Functions:
- ipfp: Integer projected fixed point iteration with exact line search.
- mpm: Max-pooling power iteration (continuous output).
- psi_with_guard: Runs a subroutine and keeps the incumbent unless the candidate is at least as good.

Dependencies:
- numpy
- .lap: the Hungarian solver used for projection and discretization.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from matching.conf import hypermatch_settings
from matching.exceptions import DimensionMismatchError, InvalidProblemError, NonFiniteInputError
from matching.solvers.lap import AssignmentVector, reshape_to_profit, solve_lap_max
from matching.solvers.tensor_core import as_vector

logger = logging.getLogger(__name__)

QAP_METHODS = ('ipfp', 'mpm')


@dataclass(frozen=True, eq=False)
class QapMatrix:
    """
    Dense QAP matrix over the correspondences of ``shape``.

    Attributes:
    - matrix (numpy.ndarray): Symmetric, nonnegative, finite n x n array.
    - shape (MatchingShape): Problem shape, n = n1 * n2.
    """

    matrix: np.ndarray
    shape: object

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        n = self.shape.n
        if matrix.shape != (n, n):
            raise DimensionMismatchError(f"QAP matrix must be {n}x{n}, got {matrix.shape}.")
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteInputError("QAP matrix contains non-finite entries.")
        scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
        if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-12 * scale:
            raise InvalidProblemError("QAP matrix must be symmetric.")
        if matrix.min(initial=0.0) < -1e-12 * scale:
            raise InvalidProblemError("QAP matrix must be nonnegative.")
        object.__setattr__(self, 'matrix', matrix)


@dataclass
class QapResult:
    """
    Attributes:
    - assignment (AssignmentVector): Returned point of M.
    - objective (float): <x, A x> at the assignment.
    - inner_iterations (int): Iterations spent by the subroutine.
    - traces (list): Continuous objective sequences, one per IPFP run.
    """

    assignment: AssignmentVector
    objective: float
    inner_iterations: int = 0
    traces: list = field(default_factory=list)


@dataclass
class PowerIterationResult:
    vector: np.ndarray
    iterations: int
    converged: bool
    degenerate: bool = False


def qap_objective(matrix, x):
    """<x, A x> for a dense matrix or a QapMatrix."""
    matrix = matrix.matrix if isinstance(matrix, QapMatrix) else np.asarray(matrix, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return float(x @ (matrix @ x))


def _check_start(A, x0):
    if x0.shape != A.shape:
        raise DimensionMismatchError(
            f"Start assignment has shape {x0.shape.n1}x{x0.shape.n2}, matrix expects "
            f"{A.shape.n1}x{A.shape.n2}."
        )


def _ipfp_run(A, x_start, max_iter):
    """
    One IPFP run from a (possibly continuous) start.

    Returns:
    - tuple: (best discrete assignment, its objective, continuous objective trace, iterations).
    """
    M, shape = A.matrix, A.shape
    x = np.array(x_start, dtype=np.float64)
    trace = [qap_objective(M, x)]
    best, best_obj = None, -np.inf
    iterations = 0

    for iterations in range(1, max_iter + 1):
        grad = M @ x
        b = solve_lap_max(reshape_to_profit(grad, shape))
        b_vec = b.indicator
        b_obj = qap_objective(M, b_vec)
        if b_obj > best_obj:
            best, best_obj = b, b_obj

        d = b_vec - x
        slope = float(grad @ d)
        if slope <= 1e-15 * (1.0 + abs(trace[-1])):
            break
        curvature = float(d @ (M @ d))
        step = 1.0 if curvature >= 0 else min(1.0, -slope / curvature)
        x = x + step * d
        trace.append(qap_objective(M, x))

    # Discretize the last continuous iterate both ways.
    for candidate in (solve_lap_max(reshape_to_profit(M @ x, shape)),
                      solve_lap_max(reshape_to_profit(x, shape))):
        obj = qap_objective(M, candidate.indicator)
        if obj > best_obj:
            best, best_obj = candidate, obj
    return best, best_obj, trace, iterations


def ipfp(A, x0, max_iter=None, uniform_restart=True):
    """
    Integer projected fixed point method for max_{x in M} <x, A x>.

    Each iteration projects the gradient direction onto M with the Hungarian
    solver, then maximizes the quadratic exactly along the segment towards the
    projection. The run stops at a fixed point or after ``max_iter`` iterations.
    With ``uniform_restart`` a second run starts from the barycentre
    (every entry 1 / n2), since a discrete start can itself be a fixed point.

    Args:
    - A (QapMatrix): Quadratic term.
    - x0 (AssignmentVector): Incumbent; the result is never worse.
    - max_iter (int): Iterations per run, ``IPFP_MAX_ITER`` by default.
    - uniform_restart (bool): Also run from the barycentre.

    Returns:
    - QapResult: Best discrete point seen, with the continuous traces.
    """
    _check_start(A, x0)
    max_iter = hypermatch_settings.IPFP_MAX_ITER if max_iter is None else int(max_iter)
    shape = A.shape

    best, best_obj = x0, qap_objective(A, x0.indicator)
    starts = [x0.indicator]
    if uniform_restart:
        starts.append(np.full(shape.n, 1.0 / shape.n2))

    total_iterations, traces = 0, []
    for start in starts:
        candidate, obj, trace, iterations = _ipfp_run(A, start, max_iter)
        total_iterations += iterations
        traces.append(trace)
        if obj > best_obj:
            best, best_obj = candidate, obj
    return QapResult(best, best_obj, total_iterations, traces)


def mpm(A, x0, max_iter=None, tol=None):
    """
    Max-pooling power iteration.

    x'_(i,a) = x_(i,a) A_(i,a),(i,a) + sum_{j != i} max_b A_(i,a),(j,b) x_(j,b),
    followed by normalization to unit 2-norm, until ||x' - x|| <= tol.

    Args:
    - A (QapMatrix): Nonnegative affinity matrix.
    - x0 (array-like): Nonnegative, nonzero start vector.
    - max_iter (int): ``MPM_MAX_ITER`` by default.
    - tol (float): ``MPM_TOL`` by default.

    Returns:
    - PowerIterationResult: Continuous iterate. When an update annihilates the
      iterate, the previous iterate (``x0`` itself on the first step) is
      returned with ``degenerate=True``.
    """
    max_iter = hypermatch_settings.MPM_MAX_ITER if max_iter is None else int(max_iter)
    tol = hypermatch_settings.MPM_TOL if tol is None else float(tol)
    shape = A.shape
    n1, n2, n = shape.n1, shape.n2, shape.n
    start = as_vector(x0, n, 'x0')
    if np.any(start < 0):
        raise InvalidProblemError("MPM needs a nonnegative start vector.")
    norm = np.linalg.norm(start)
    if norm == 0:
        raise InvalidProblemError("MPM needs a nonzero start vector.")

    M = A.matrix
    blocks = M.reshape(n, n1, n2)
    own_row = np.repeat(np.arange(n1), n2)
    diagonal = np.diag(M)

    previous, x = start, start / norm
    for iteration in range(1, max_iter + 1):
        pooled = (blocks * x.reshape(1, n1, n2)).max(axis=2)
        pooled[np.arange(n), own_row] = 0.0
        update = x * diagonal + pooled.sum(axis=1)
        norm = np.linalg.norm(update)
        if not norm > 0:
            logger.warning("MPM update vanished at iteration %d; keeping the previous iterate.", iteration)
            return PowerIterationResult(previous, iteration, converged=False, degenerate=True)
        update /= norm
        step = np.linalg.norm(update - x)
        previous, x = x, update
        if step <= tol:
            return PowerIterationResult(x, iteration, converged=True)
    return PowerIterationResult(x, max_iter, converged=False)


class QapSubroutine(ABC):
    """
    Abstract QAP subroutine.

    Implementations return a candidate point of M for ``max <x, A x>`` from the
    incumbent ``x0``; the ascent guard is applied by `psi_with_guard`.
    """

    @abstractmethod
    def run(self, A, x0):
        """
        Args:
        - A (QapMatrix): Quadratic term.
        - x0 (AssignmentVector): Incumbent.

        Returns:
        - QapResult: Candidate.
        """


class IpfpSubroutine(QapSubroutine):
    def __init__(self, max_iter=None, uniform_restart=True):
        self.max_iter = max_iter
        self.uniform_restart = uniform_restart

    def run(self, A, x0):
        return ipfp(A, x0, self.max_iter, self.uniform_restart)


class MaxPoolingSubroutine(QapSubroutine):
    """MPM from the incumbent's indicator, discretized by the Hungarian solver."""

    def __init__(self, max_iter=None, tol=None):
        self.max_iter = max_iter
        self.tol = tol

    def run(self, A, x0):
        _check_start(A, x0)
        result = mpm(A, x0.indicator, self.max_iter, self.tol)
        candidate = solve_lap_max(reshape_to_profit(result.vector, A.shape))
        return QapResult(candidate, qap_objective(A, candidate.indicator), result.iterations)


class SubroutineFactory:
    """
    Builds the QAP subroutine named by ``method``.

    Attributes:
    - method (str): 'ipfp' or 'mpm'.
    - options (dict): Keyword arguments of the subroutine's constructor.
    """

    registry = {
        'ipfp': IpfpSubroutine,
        'mpm': MaxPoolingSubroutine,
    }

    def __init__(self, method, **options):
        if method not in self.registry:
            raise InvalidProblemError(f"Unknown QAP subroutine '{method}', expected one of {QAP_METHODS}.")
        self.method = method
        self.options = options

    def create(self):
        return self.registry[self.method](**self.options)


def psi_with_guard(A, x0, method='ipfp', **options):
    """
    Monotonic-ascent QAP step: the candidate is returned only if
    <z, A z> >= <x0, A x0>, otherwise x0 is returned unchanged.

    Args:
    - A (QapMatrix): Quadratic term.
    - x0 (AssignmentVector): Incumbent.
    - method (str): 'ipfp' or 'mpm'.
    - **options: Passed to the subroutine (max_iter, tol, uniform_restart).

    Returns:
    - QapResult: Never worse than the incumbent.
    """
    _check_start(A, x0)
    incumbent = qap_objective(A, x0.indicator)
    candidate = SubroutineFactory(method, **options).create().run(A, x0)
    if candidate.objective >= incumbent:
        return candidate
    logger.debug("%s candidate %.12g below incumbent %.12g; keeping incumbent.",
                 method, candidate.objective, incumbent)
    return QapResult(x0, incumbent, candidate.inner_iterations, candidate.traces)
