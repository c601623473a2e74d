"""
Module: experiment_helper.py

Synthetic benchmark grids: experiment description, per-trial execution,
grid fan-out over a thread pool or Celery workers, and CSV/summary output.

Classes:
- ExperimentSpec: Grid axes, trials, seeds, methods and affinity settings.
- ResultRecord: One method's outcome on one trial.
- GridRunCommand: Runs every (grid point, trial) and canonicalizes the records.

Dependencies:
- numpy
- pandas (record tables, CSV, summaries)
- celery (optional executor, through matching.tasks)
"""

import hashlib
import itertools
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd

from matching.conf import hypermatch_settings
from matching.exceptions import InvalidProblemError, MonotonicityViolationError
from matching.solvers.bcagm import (
    ALPHA_SCHEDULES,
    METHOD_VARIANTS,
    TERMINATED_CONVERGED,
    TERMINATED_DEGENERATE,
    TERMINATED_MAX_ITER,
    SolverConfig,
    SolverTrace,
    check_trace,
    hopm_baseline,
    solve,
)
from matching.solvers.lap import reshape_to_profit, solve_lap_max
from matching.solvers.qap import ipfp, mpm
from matching.solvers.tensor_core import LiftedOperator, eval_s3, eval_s4_alpha
from matching.utils.affinity_helper import AffinityParams, SamplingConfig, build_matrix2, build_tensor
from matching.utils.synthetic_data_helper import GridPoint, accuracy, gen_instance

logger = logging.getLogger(__name__)

METHODS = ('bcagm', 'bcagm_mp', 'bcagm_ipfp', 'hopm', 'ipfp2', 'mpm2')
SECOND_ORDER_METHODS = ('ipfp2', 'mpm2')
EXECUTORS = ('local', 'celery')

CSV_COLUMNS = [
    'method', 'trial', 'n_in', 'n_out', 'sigma', 'scale',
    'accuracy', 'score3', 'iterations', 'wall_time_ms', 'status',
]
FLOAT_FORMAT = '%.9g'
STATUS_OK = 'ok'

PRESETS = {
    'outliers': {'n_in': '10', 'n_out': '0:200:10', 'sigma': '0.01', 'scale': '1', 'trials': 100},
    'outliers-scaled': {'n_in': '10', 'n_out': '0:200:10', 'sigma': '0.03', 'scale': '1.5', 'trials': 100},
    'deformation': {'n_in': '20', 'n_out': '0', 'sigma': '0:0.4:0.05', 'scale': '1', 'trials': 100},
    'outliers-noiseless': {'n_in': '10', 'n_out': '0:200:10', 'sigma': '0', 'scale': '1', 'trials': 100},
    'outliers-slight': {'n_in': '10', 'n_out': '0:200:10', 'sigma': '0.01', 'scale': '1.01', 'trials': 100},
    'outliers-large-scale': {'n_in': '10', 'n_out': '0:200:10', 'sigma': '0.01', 'scale': '1.1', 'trials': 100},
    'deformation-30': {'n_in': '30', 'n_out': '0', 'sigma': '0:0.4:0.05', 'scale': '1', 'trials': 100},
    'deformation-40': {'n_in': '40', 'n_out': '0', 'sigma': '0:0.4:0.05', 'scale': '1', 'trials': 100},
}


def parse_range(text, cast=float):
    """
    Expands a grid axis.

    ``"a:b:step"`` is the inclusive range a, a + step, ..., b; ``"a,b,c"`` is
    an explicit list; a single value is a one-point axis.

    Args:
    - text (str | number | list): Axis description.
    - cast (type): int or float.

    Returns:
    - tuple: Axis values.

    Raises:
    - InvalidProblemError: On a malformed range.
    """
    if isinstance(text, (list, tuple)):
        return tuple(cast(value) for value in text)
    text = str(text).strip()
    try:
        if ':' in text:
            start, stop, step = (float(part) for part in text.split(':'))
            if not step > 0 or stop < start:
                raise InvalidProblemError(f"Range '{text}' needs step > 0 and stop >= start.")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + i * step, 12) for i in range(count)]
        else:
            values = [float(part) for part in text.split(',')]
    except InvalidProblemError:
        raise
    except ValueError as exc:
        raise InvalidProblemError(f"Malformed range '{text}'.") from exc
    if cast is int:
        if any(value != int(value) for value in values):
            raise InvalidProblemError(f"Range '{text}' must contain integers.")
        return tuple(int(value) for value in values)
    return tuple(cast(value) for value in values)


@dataclass(frozen=True)
class ExperimentSpec:
    """
    A synthetic benchmark: the product of the four grid axes, times trials, times methods.

    Attributes:
    - n_in, n_out, sigma, scale (tuple): Grid axes.
    - trials (int): Repetitions per grid point.
    - seed_base (int): Combined with each grid point and trial into the trial seed.
    - methods (tuple): Subset of METHODS, in output order.
    - sampling (SamplingConfig): Triangle sampling; its seed is replaced per trial.
    - affinity (AffinityParams): gamma and sigma_s.
    - alpha_schedule (str): Schedule of the block-ascent methods.
    """

    n_in: tuple = (10,)
    n_out: tuple = (0,)
    sigma: tuple = (0.0,)
    scale: tuple = (1.0,)
    trials: int = 1
    seed_base: int = 0
    methods: tuple = ('bcagm',)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    affinity: AffinityParams = field(default_factory=AffinityParams)
    alpha_schedule: str = 'zero_then_bound'

    def __post_init__(self):
        for axis in ('n_in', 'n_out', 'sigma', 'scale'):
            values = tuple(getattr(self, axis))
            if not values:
                raise InvalidProblemError(f"Grid axis '{axis}' is empty.")
            object.__setattr__(self, axis, values)
        object.__setattr__(self, 'methods', tuple(self.methods))
        unknown = [method for method in self.methods if method not in METHODS]
        if unknown:
            raise InvalidProblemError(f"Unknown methods {unknown}, expected a subset of {METHODS}.")
        if int(self.trials) < 1:
            raise InvalidProblemError("trials must be at least 1.")
        if int(self.seed_base) < 0:
            raise InvalidProblemError("seed_base must be nonnegative.")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise InvalidProblemError(f"Unknown alpha schedule '{self.alpha_schedule}'.")
        # Validates every grid point up front.
        self.grid_points()

    @classmethod
    def from_axes(cls, n_in, n_out='0', sigma='0', scale='1', **options):
        """Builds a spec from range strings such as ``'0:200:10'``."""
        return cls(
            n_in=parse_range(n_in, int),
            n_out=parse_range(n_out, int),
            sigma=parse_range(sigma),
            scale=parse_range(scale),
            **options,
        )

    @classmethod
    def from_preset(cls, name, **overrides):
        if name not in PRESETS:
            raise InvalidProblemError(f"Unknown preset '{name}', expected one of {sorted(PRESETS)}.")
        return cls.from_axes(**{**PRESETS[name], **overrides})

    def grid_points(self):
        return [
            GridPoint(n_in, n_out, sigma, scale)
            for n_in, n_out, sigma, scale in itertools.product(self.n_in, self.n_out, self.sigma, self.scale)
        ]

    def to_payload(self):
        """JSON-compatible form, used to ship the spec to Celery workers."""
        payload = asdict(self)
        for axis in ('n_in', 'n_out', 'sigma', 'scale', 'methods'):
            payload[axis] = list(payload[axis])
        return payload

    @classmethod
    def from_payload(cls, payload):
        payload = dict(payload)
        payload['sampling'] = SamplingConfig(**payload['sampling'])
        payload['affinity'] = AffinityParams(**payload['affinity'])
        return cls(**payload)


@dataclass
class ResultRecord:
    method: str
    trial: int
    n_in: int
    n_out: int
    sigma: float
    scale: float
    accuracy: float
    score3: float
    iterations: int
    wall_time_ms: float
    status: str = STATUS_OK
    point_index: int = 0

    def to_row(self):
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    def to_payload(self):
        return asdict(self)


def trial_seed(seed_base, point, trial):
    """
    Seed of one trial: ``seed_base`` XOR a SHA-256 digest of (n_in, n_out, trial).

    sigma and scale are left out, so grid points differing only in them draw
    the same instances up to deformation and scaling.
    """
    digest = hashlib.sha256(f'{point.n_in}:{point.n_out}:{trial}'.encode()).digest()
    return int(seed_base) ^ int.from_bytes(digest[:8], 'big')


@dataclass
class MethodOutcome:
    """
    Attributes:
    - assignment (AssignmentVector): Returned matching.
    - iterations (int): Outer sweeps, or inner iterations for the baselines.
    - trace (SolverTrace): Full trace for block ascent, final score only otherwise.
    - score4_alpha (float): Lifted score at the final alpha (alpha = 0 for baselines).
    """

    assignment: object
    iterations: int
    trace: SolverTrace
    score4_alpha: float


def _baseline_outcome(tensor, assignment, iterations, terminated):
    score3 = eval_s3(tensor, assignment.indicator)
    score4 = eval_s4_alpha(LiftedOperator(tensor, 0.0), assignment.indicator)
    return MethodOutcome(assignment, int(iterations), SolverTrace(u_scores3=[score3], terminated=terminated), score4)


def run_method(method, tensor, matrix=None, alpha_schedule='zero_then_bound', max_outer_iters=None):
    """
    Runs one benchmark method.

    Block-ascent traces are audited with `check_trace`; a violation propagates
    as MonotonicityViolationError.

    Args:
    - method (str): One of METHODS.
    - tensor (SparseSymmetricTensor3): Third-order affinities.
    - matrix (QapMatrix): Second-order affinities, needed by 'ipfp2' and 'mpm2'.
    - alpha_schedule (str): Schedule of the block-ascent methods.
    - max_outer_iters (int): Sweep cap of the block-ascent methods.

    Returns:
    - MethodOutcome
    """
    if method in METHOD_VARIANTS:
        options = {'alpha_schedule': alpha_schedule}
        if max_outer_iters is not None:
            options['max_outer_iters'] = max_outer_iters
        cfg = SolverConfig.from_method(method, **options)
        solution = solve(tensor, cfg)
        check_trace(solution.trace, cfg.equality_tol_rel)
        return MethodOutcome(solution.assignment, solution.outer_iterations, solution.trace, solution.score4_alpha)
    if method == 'hopm':
        solution = hopm_baseline(tensor)
        return MethodOutcome(solution.assignment, solution.outer_iterations, solution.trace, solution.score4_alpha)
    if method not in SECOND_ORDER_METHODS:
        raise InvalidProblemError(f"Unknown method '{method}', expected one of {METHODS}.")
    if matrix is None:
        raise InvalidProblemError(f"Method '{method}' needs the second-order affinity matrix.")

    ones = np.ones(matrix.shape.n)
    if method == 'ipfp2':
        start = solve_lap_max(reshape_to_profit(matrix.matrix @ ones, matrix.shape))
        result = ipfp(matrix, start)
        return _baseline_outcome(tensor, result.assignment, result.inner_iterations, TERMINATED_CONVERGED)
    result = mpm(matrix, ones)
    if result.degenerate:
        terminated = TERMINATED_DEGENERATE
    else:
        terminated = TERMINATED_CONVERGED if result.converged else TERMINATED_MAX_ITER
    assignment = solve_lap_max(reshape_to_profit(result.vector, matrix.shape))
    return _baseline_outcome(tensor, assignment, result.iterations, terminated)


def _failure(method, trial, point, point_index, exc):
    return ResultRecord(
        method, trial, point.n_in, point.n_out, point.sigma, point.scale,
        accuracy=0.0, score3=0.0, iterations=0, wall_time_ms=0.0,
        status=f'error:{type(exc).__name__}', point_index=point_index,
    )


def run_trial(spec, point_index, trial, deterministic=False):
    """
    Runs every method of ``spec`` on one generated instance.

    The tensor is built once and shared by all methods; the second-order
    baselines build the distance matrix instead and are scored on the tensor.
    A method that fails yields a record whose status names the exception;
    a monotonicity violation is re-raised.

    Args:
    - spec (ExperimentSpec): Experiment.
    - point_index (int): Index into ``spec.grid_points()``.
    - trial (int): Trial number.
    - deterministic (bool): Write 0 as wall time.

    Returns:
    - list: ResultRecord per method, in ``spec.methods`` order.
    """
    point = spec.grid_points()[point_index]
    seed = trial_seed(spec.seed_base, point, trial)
    logger.info("Trial %d at n_in=%d n_out=%d sigma=%g scale=%g (seed %d).",
                trial, point.n_in, point.n_out, point.sigma, point.scale, seed)

    try:
        instance = gen_instance(point, seed)
        tensor = build_tensor(instance.template, instance.scene, replace(spec.sampling, seed=seed), spec.affinity)
    except Exception as exc:
        logger.error("Trial %d at grid point %d could not be built: %s", trial, point_index, exc)
        return [_failure(method, trial, point, point_index, exc) for method in spec.methods]

    matrix = None
    records = []
    for method in spec.methods:
        started = time.perf_counter()
        try:
            if method in SECOND_ORDER_METHODS and matrix is None:
                matrix = build_matrix2(instance.template, instance.scene, spec.affinity)
            outcome = run_method(method, tensor, matrix, spec.alpha_schedule)
        except MonotonicityViolationError:
            raise
        except Exception as exc:
            logger.error("%s failed on trial %d at grid point %d: %s", method, trial, point_index, exc)
            records.append(_failure(method, trial, point, point_index, exc))
            continue
        elapsed = 0.0 if deterministic else (time.perf_counter() - started) * 1000.0
        records.append(ResultRecord(
            method, trial, point.n_in, point.n_out, point.sigma, point.scale,
            accuracy=accuracy(outcome.assignment, instance.ground_truth),
            score3=eval_s3(tensor, outcome.assignment.indicator),
            iterations=outcome.iterations,
            wall_time_ms=elapsed,
            point_index=point_index,
        ))
    return records


def resolve_threads(threads=None):
    """Worker count: the argument, else ``THREADS``; 0 means one per CPU."""
    threads = hypermatch_settings.THREADS if threads is None else int(threads)
    if threads < 0:
        raise InvalidProblemError("threads must be nonnegative.")
    return threads or os.cpu_count() or 1


class GridRunCommand:
    """
    Runs an experiment grid.

    Attributes:
    - spec (ExperimentSpec): Experiment.
    - executor (str): 'local' (in-process threads) or 'celery' (one task per trial).
    - threads (int): Local workers; 0 means one per CPU.
    - deterministic (bool): Sequential execution and zero wall times.
    """

    def __init__(self, spec, executor='local', threads=None, deterministic=False):
        if executor not in EXECUTORS:
            raise InvalidProblemError(f"Unknown executor '{executor}', expected one of {EXECUTORS}.")
        self.spec = spec
        self.executor = executor
        self.threads = resolve_threads(threads)
        self.deterministic = deterministic

    def execute(self):
        """
        Runs every trial and returns the records sorted by (grid point, trial, method).

        Returns:
        - list: ResultRecord objects.
        """
        if not self.spec.methods:
            return []
        keys = self._trial_keys()
        if self.executor == 'celery':
            batches = self._run_on_celery(keys)
        else:
            batches = self._run_locally(keys)
        return self._canonical_order(itertools.chain.from_iterable(batches))

    def _trial_keys(self):
        return [
            (point_index, trial)
            for point_index in range(len(self.spec.grid_points()))
            for trial in range(self.spec.trials)
        ]

    def _run_locally(self, keys):
        if self.deterministic or self.threads == 1:
            return [run_trial(self.spec, p, t, self.deterministic) for p, t in keys]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(lambda key: run_trial(self.spec, *key, self.deterministic), keys))

    def _run_on_celery(self, keys):
        from matching.tasks import run_trial_task

        payload = self.spec.to_payload()
        pending = [run_trial_task.delay(payload, p, t, self.deterministic) for p, t in keys]
        return [[ResultRecord(**record) for record in result.get()] for result in pending]

    def _canonical_order(self, records):
        rank = {method: position for position, method in enumerate(self.spec.methods)}
        return sorted(records, key=lambda r: (r.point_index, r.trial, rank[r.method]))


def run_grid(spec, executor='local', threads=None, deterministic=False):
    """Runs ``spec`` and returns its records in canonical order."""
    return GridRunCommand(spec, executor, threads, deterministic).execute()


def records_to_frame(records):
    return pd.DataFrame([record.to_row() for record in records], columns=CSV_COLUMNS)


def write_csv(records, path_or_buf):
    """
    Writes the benchmark CSV: fixed header, 9 significant digits, LF line ends.

    Returns the CSV text when ``path_or_buf`` is None.
    """
    return records_to_frame(records).to_csv(path_or_buf, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def summarize(records):
    """
    Trial averages per (method, grid point).

    Failed trials are counted in ``errors`` and left out of the means.

    Returns:
    - pandas.DataFrame: method, n_in, n_out, sigma, scale, trials, errors,
      mean_accuracy, mean_score3, mean_wall_time_ms.
    """
    frame = records_to_frame(records)
    ok = frame['status'] == STATUS_OK
    frame = frame.assign(
        error=~ok,
        accuracy=frame['accuracy'].where(ok),
        score3=frame['score3'].where(ok),
        wall_time_ms=frame['wall_time_ms'].where(ok),
    )
    return (
        frame.groupby(['method', 'n_in', 'n_out', 'sigma', 'scale'], sort=False)
        .agg(
            trials=('trial', 'count'),
            errors=('error', 'sum'),
            mean_accuracy=('accuracy', 'mean'),
            mean_score3=('score3', 'mean'),
            mean_wall_time_ms=('wall_time_ms', 'mean'),
        )
        .reset_index()
    )
