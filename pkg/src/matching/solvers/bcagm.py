"""
Module: bcagm.py

Tensor block-coordinate ascent for third-order hypergraph matching.

The third-order score S3 is lifted to the fourth-order multilinear form
F4_alpha and maximized over copies of the assignment variable:

- ``bcagm``: four blocks (x, y, z, t), each update a linear assignment problem
  solved globally by the Hungarian solver.
- ``bcagm_psi``: two blocks (x, y) of F4_alpha(x, x, y, y), each update a
  quadratic assignment problem handled by a guarded QAP subroutine.

When a sweep no longer increases the multilinear value, the best block is
merged into all blocks if it improves the score. Otherwise the solver moves
to the next alpha phase or terminates. Scores of the merged points increase
strictly, which `check_trace` audits.

Classes:
- SolverConfig: Variant, subroutine, alpha schedule and stopping parameters.
- SolverTrace: Stage scores, merged-point scores, alpha phases and termination reason.
- Solution: Assignment with its scores and trace.

Dependencies:
- numpy
- .tensor_core, .lap, .qap
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from matching.conf import hypermatch_settings
from matching.exceptions import DimensionMismatchError, InvalidProblemError, MonotonicityViolationError
from matching.solvers.lap import AssignmentVector, reshape_to_profit, solve_lap_max
from matching.solvers.qap import QAP_METHODS, PowerIterationResult, QapMatrix, psi_with_guard
from matching.solvers.tensor_core import (
    LiftedOperator,
    alpha_bound,
    contract3_vec,
    eval_f4_alpha,
    eval_s3,
    eval_s4_alpha,
    lift_contract_mat,
    lift_contract_vec,
)

logger = logging.getLogger(__name__)

VARIANTS = ('bcagm', 'bcagm_psi')
ALPHA_SCHEDULES = ('zero_then_bound', 'bound_always', 'zero_only')

# Command-line spelling of the alpha schedules.
ALPHA_MODES = {
    'zero-then-bound': 'zero_then_bound',
    'bound': 'bound_always',
    'zero': 'zero_only',
}

METHOD_VARIANTS = {
    'bcagm': {'variant': 'bcagm'},
    'bcagm_mp': {'variant': 'bcagm_psi', 'subroutine': 'mpm'},
    'bcagm_ipfp': {'variant': 'bcagm_psi', 'subroutine': 'ipfp'},
}

TERMINATED_CONVERGED = 'converged'
TERMINATED_MAX_OUTER = 'max_outer_iters'
TERMINATED_DEGENERATE = 'degenerate'
TERMINATED_MAX_ITER = 'max_iter'


def _setting(name):
    return lambda: getattr(hypermatch_settings, name)


@dataclass(frozen=True)
class SolverConfig:
    """
    Configuration of a block-coordinate ascent run.

    Attributes:
    - variant (str): 'bcagm' (four LAP blocks) or 'bcagm_psi' (two QAP blocks).
    - subroutine (str): 'ipfp' or 'mpm', used by 'bcagm_psi' only.
    - alpha_schedule (str): 'zero_then_bound', 'bound_always' or 'zero_only'.
    - equality_tol_rel (float): Relative tolerance of the stall test.
    - max_outer_iters (int): Safety cap on sweeps.
    - alpha_override (float): Replaces `alpha_bound` as the convexification weight.
    - raw_ones_start (bool): Start all blocks at the all-ones vector instead of a point of M.
    - ipfp_uniform_restart (bool): Let IPFP also run from the barycentre.
    - qap_max_iter (int): Iteration cap of the QAP subroutine (setting default when None).
    - mpm_tol (float): MPM stopping tolerance (setting default when None).
    """

    variant: str = 'bcagm'
    subroutine: str = 'ipfp'
    alpha_schedule: str = 'zero_then_bound'
    equality_tol_rel: float = field(default_factory=_setting('EQUALITY_TOL_REL'))
    max_outer_iters: int = field(default_factory=_setting('MAX_OUTER_ITERS'))
    alpha_override: Optional[float] = None
    raw_ones_start: bool = False
    ipfp_uniform_restart: bool = True
    qap_max_iter: Optional[int] = None
    mpm_tol: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidProblemError(f"Unknown solver variant '{self.variant}', expected one of {VARIANTS}.")
        if self.subroutine not in QAP_METHODS:
            raise InvalidProblemError(f"Unknown subroutine '{self.subroutine}', expected one of {QAP_METHODS}.")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise InvalidProblemError(
                f"Unknown alpha schedule '{self.alpha_schedule}', expected one of {ALPHA_SCHEDULES}."
            )
        if not self.equality_tol_rel > 0:
            raise InvalidProblemError("equality_tol_rel must be positive.")
        if int(self.max_outer_iters) < 1:
            raise InvalidProblemError("max_outer_iters must be at least 1.")
        if self.alpha_override is not None and not float(self.alpha_override) >= 0:
            raise InvalidProblemError("alpha_override must be nonnegative.")
        if self.mpm_tol is not None and not self.mpm_tol > 0:
            raise InvalidProblemError("mpm_tol must be positive.")
        if self.qap_max_iter is not None and int(self.qap_max_iter) < 1:
            raise InvalidProblemError("qap_max_iter must be at least 1.")

    @classmethod
    def from_method(cls, method, **overrides):
        """
        Config for a benchmark method name: 'bcagm', 'bcagm_mp' or 'bcagm_ipfp'.

        Args:
        - method (str): Method name.
        - **overrides: Further SolverConfig fields.

        Returns:
        - SolverConfig
        """
        if method not in METHOD_VARIANTS:
            raise InvalidProblemError(
                f"'{method}' is not a block-ascent method, expected one of {tuple(METHOD_VARIANTS)}."
            )
        return cls(**{**METHOD_VARIANTS[method], **overrides})

    def alpha_phases(self, tensor):
        """Convexification weights of the successive phases for ``tensor``."""
        bound = alpha_bound(tensor) if self.alpha_override is None else float(self.alpha_override)
        if self.alpha_schedule == 'zero_then_bound':
            return [0.0, bound]
        if self.alpha_schedule == 'bound_always':
            return [bound]
        return [0.0]

    def psi_options(self):
        if self.subroutine == 'ipfp':
            return {'max_iter': self.qap_max_iter, 'uniform_restart': self.ipfp_uniform_restart}
        return {'max_iter': self.qap_max_iter, 'tol': self.mpm_tol}


@dataclass
class SolverTrace:
    """
    Attributes:
    - stage_scores (list): Multilinear values after each block update, once every block is in M.
    - u_scores3 (list): S3 of the start, of every merged point and, last, of the returned point.
    - alpha_phases (list): ``{'index', 'alpha'}`` markers; ``index`` is the position in
      ``stage_scores`` where the phase begins.
    - terminated (str): 'converged', 'max_outer_iters', 'degenerate' or 'max_iter'.
    """

    stage_scores: list = field(default_factory=list)
    u_scores3: list = field(default_factory=list)
    alpha_phases: list = field(default_factory=list)
    terminated: str = ''

    def to_dict(self):
        return {
            'stage_scores': list(self.stage_scores),
            'u_scores3': list(self.u_scores3),
            'alpha_phases': [dict(phase) for phase in self.alpha_phases],
            'terminated': self.terminated,
        }


@dataclass
class Solution:
    assignment: AssignmentVector
    score3: float
    score4_alpha: float
    trace: SolverTrace
    outer_iterations: int


def check_trace(trace, tol=None):
    """
    Audits the monotonic ascent of a block-ascent trace.

    Stage scores must not decrease within an alpha phase and merged-point
    scores must increase strictly; the last value, being the returned point,
    may repeat its predecessor. Comparisons allow ``tol * (1 + |previous|)``
    of slack, except the strict part.

    Args:
    - trace (SolverTrace): Trace to audit.
    - tol (float): Relative tolerance, ``EQUALITY_TOL_REL`` by default.

    Raises:
    - MonotonicityViolationError: On the first violation found.
    """
    tol = hypermatch_settings.EQUALITY_TOL_REL if tol is None else tol
    starts = [phase['index'] for phase in trace.alpha_phases] or [0]
    bounds = starts[1:] + [len(trace.stage_scores)]
    for begin, end in zip(starts, bounds):
        segment = trace.stage_scores[begin:end]
        for position, (previous, current) in enumerate(zip(segment, segment[1:]), start=begin + 1):
            if current < previous - tol * (1.0 + abs(previous)):
                raise MonotonicityViolationError(
                    f"Stage score decreased at position {position}: {previous!r} -> {current!r}."
                )

    scores = trace.u_scores3
    for position in range(1, len(scores)):
        previous, current = scores[position - 1], scores[position]
        if position == len(scores) - 1:
            if current < previous - tol * (1.0 + abs(previous)):
                raise MonotonicityViolationError(
                    f"Returned point scores {current!r}, below the last merged point {previous!r}."
                )
        elif not current > previous:
            raise MonotonicityViolationError(
                f"Merged-point score did not increase at merge {position}: {previous!r} -> {current!r}."
            )


def default_start(tensor, alpha=0.0):
    """
    Start point in M: the first block update applied to all-ones blocks.

    Returns:
    - AssignmentVector: LAP maximizer of F4_alpha(1, 1, 1, .).
    """
    ones = np.ones(tensor.shape.n)
    op = LiftedOperator(tensor, alpha)
    return solve_lap_max(reshape_to_profit(lift_contract_vec(op, ones, ones, ones), tensor.shape))


def _check_start(tensor, start):
    if start.shape != tensor.shape:
        raise DimensionMismatchError(
            f"Start assignment is {start.shape.n1}x{start.shape.n2}, tensor is "
            f"{tensor.shape.n1}x{tensor.shape.n2}."
        )


def _four_block_sweep(op, blocks):
    """Steps 1-4: each block becomes the LAP maximizer against the other three."""
    shape = op.shape
    values = []
    for index in range(4):
        others = [block for position, block in enumerate(blocks) if position != index]
        profit = reshape_to_profit(lift_contract_vec(op, *[_vector(b) for b in others]), shape)
        blocks[index] = solve_lap_max(profit)
        if all(isinstance(b, AssignmentVector) for b in blocks):
            values.append(eval_f4_alpha(op, *[b.indicator for b in blocks]))
    return values


def _two_block_sweep(cfg):
    method, options = cfg.subroutine, cfg.psi_options()

    def sweep(op, blocks):
        values = []
        for index, other in ((0, 1), (1, 0)):
            partner = _vector(blocks[other])
            A = QapMatrix(lift_contract_mat(op, partner, partner), op.shape)
            incumbent = blocks[index]
            if not isinstance(incumbent, AssignmentVector):
                incumbent = solve_lap_max(reshape_to_profit(A.matrix @ _vector(incumbent), op.shape))
            blocks[index] = psi_with_guard(A, incumbent, method, **options).assignment
            if all(isinstance(b, AssignmentVector) for b in blocks):
                values.append(_two_block_value(op, blocks))
        return values

    return sweep


def _vector(block):
    return block.indicator if isinstance(block, AssignmentVector) else block


def _four_block_value(op, blocks):
    return eval_f4_alpha(op, *[b.indicator for b in blocks])


def _two_block_value(op, blocks):
    x, y = blocks[0].indicator, blocks[1].indicator
    return eval_f4_alpha(op, x, x, y, y)


def _block_ascent(tensor, cfg, start, num_blocks, sweep, value):
    shape = tensor.shape
    tol = cfg.equality_tol_rel
    alphas = cfg.alpha_phases(tensor)
    phase = 0
    op = LiftedOperator(tensor, alphas[phase])
    trace = SolverTrace(alpha_phases=[{'index': 0, 'alpha': op.alpha}])

    def merged(point):
        return [point] * num_blocks

    if cfg.raw_ones_start:
        u = None
        blocks = merged(np.ones(shape.n))
        previous = None
    else:
        u = start
        blocks = merged(u)
        previous = eval_s4_alpha(op, u.indicator)
        trace.stage_scores.append(previous)
        trace.u_scores3.append(eval_s3(tensor, u.indicator))

    outer = 0
    while True:
        if outer >= cfg.max_outer_iters:
            logger.warning("Block ascent hit max_outer_iters=%d without terminating.", cfg.max_outer_iters)
            trace.terminated = TERMINATED_MAX_OUTER
            candidates = ([u] if u is not None else []) + [b for b in blocks if isinstance(b, AssignmentVector)]
            u = max(candidates, key=lambda point: eval_s3(tensor, point.indicator))
            break
        outer += 1
        trace.stage_scores.extend(sweep(op, blocks))
        current = value(op, blocks)
        if previous is None or current > previous + tol * (1.0 + abs(previous)):
            previous = current
            continue

        block_scores = [eval_s4_alpha(op, b.indicator) for b in blocks]
        best_block = int(np.argmax(block_scores))
        candidate = blocks[best_block]
        if block_scores[best_block] > current + tol * (1.0 + abs(current)):
            u = candidate
            blocks = merged(u)
            previous = block_scores[best_block]
            trace.stage_scores.append(previous)
            trace.u_scores3.append(eval_s3(tensor, u.indicator))
            logger.debug("Merged block %d at sweep %d, S3=%.12g.", best_block, outer, trace.u_scores3[-1])
            continue

        if u is None or eval_s3(tensor, candidate.indicator) > eval_s3(tensor, u.indicator):
            u = candidate
        if phase + 1 < len(alphas):
            phase += 1
            op = op.with_alpha(alphas[phase])
            logger.info("Stalled at sweep %d; switching alpha to %.6g.", outer, op.alpha)
            trace.alpha_phases.append({'index': len(trace.stage_scores), 'alpha': op.alpha})
            blocks = merged(u)
            previous = eval_s4_alpha(op, u.indicator)
            trace.stage_scores.append(previous)
            continue
        trace.terminated = TERMINATED_CONVERGED
        break

    score3 = eval_s3(tensor, u.indicator)
    trace.u_scores3.append(score3)
    return Solution(u, score3, eval_s4_alpha(op, u.indicator), trace, outer)


def bcagm_solve(tensor, cfg=None, start=None):
    """
    Four-block ascent: every block update is a global LAP solve.

    Args:
    - tensor (SparseSymmetricTensor3): Affinities.
    - cfg (SolverConfig): Defaults to ``SolverConfig()``.
    - start (AssignmentVector): Defaults to `default_start`.

    Returns:
    - Solution: Last merged point, with its trace.
    """
    cfg = cfg or SolverConfig()
    start = default_start(tensor) if start is None else start
    _check_start(tensor, start)
    return _block_ascent(tensor, cfg, start, 4, _four_block_sweep, _four_block_value)


def bcagm_psi_solve(tensor, cfg=None, start=None):
    """
    Two-block ascent on F4_alpha(x, x, y, y): every block update is a QAP
    max <x, A x> with A = F4_alpha(y, y, ., .), solved by the configured
    subroutine behind the ascent guard.
    """
    cfg = cfg or SolverConfig(variant='bcagm_psi')
    start = default_start(tensor) if start is None else start
    _check_start(tensor, start)
    return _block_ascent(tensor, cfg, start, 2, _two_block_sweep(cfg), _two_block_value)


def solve(tensor, cfg=None, start=None):
    """Runs the variant named by ``cfg.variant``."""
    cfg = cfg or SolverConfig()
    if cfg.variant == 'bcagm_psi':
        return bcagm_psi_solve(tensor, cfg, start)
    return bcagm_solve(tensor, cfg, start)


def hopm_iterate(tensor, max_iter=None, tol=None):
    """
    Third-order power iteration v <- F3(v, v, .) / ||F3(v, v, .)|| from the
    normalized all-ones vector.

    Returns:
    - PowerIterationResult: ``degenerate`` is set when an update vanishes; the
      previous iterate is returned in that case.
    """
    max_iter = hypermatch_settings.HOPM_MAX_ITER if max_iter is None else int(max_iter)
    tol = hypermatch_settings.HOPM_TOL if tol is None else float(tol)
    n = tensor.shape.n
    v = np.full(n, 1.0 / np.sqrt(n))
    for iteration in range(1, max_iter + 1):
        update = contract3_vec(tensor, v, v)
        norm = np.linalg.norm(update)
        if not norm > 0:
            logger.warning("HOPM update vanished at iteration %d.", iteration)
            return PowerIterationResult(v, iteration, converged=False, degenerate=True)
        update /= norm
        step = np.linalg.norm(update - v)
        v = update
        if step <= tol:
            return PowerIterationResult(v, iteration, converged=True)
    return PowerIterationResult(v, max_iter, converged=False)


def hopm_baseline(tensor, max_iter=None, tol=None):
    """
    Higher-order power method baseline, discretized by the Hungarian solver.

    No ascent guarantee; the trace only carries the final score and how the
    iteration ended. A degenerate iteration discretizes the all-ones vector.
    """
    result = hopm_iterate(tensor, max_iter, tol)
    vector = np.ones(tensor.shape.n) if result.degenerate else result.vector
    assignment = solve_lap_max(reshape_to_profit(vector, tensor.shape))
    score3 = eval_s3(tensor, assignment.indicator)
    if result.degenerate:
        terminated = TERMINATED_DEGENERATE
    else:
        terminated = TERMINATED_CONVERGED if result.converged else TERMINATED_MAX_ITER
    trace = SolverTrace(u_scores3=[score3], terminated=terminated)
    score4 = eval_s4_alpha(LiftedOperator(tensor, 0.0), assignment.indicator)
    return Solution(assignment, score3, score4, trace, result.iterations)
