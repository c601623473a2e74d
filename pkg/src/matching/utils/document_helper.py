"""
Problem and result documents of the ``match`` command.

Both are JSON objects with ``format_version: 1``. Indices in documents are
1-based. The schema lives in ``matching.serializer``; this module turns a
validated document into a `MatchingProblem`, solves it and renders the result.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from matching.exceptions import DocumentParseError, InvalidProblemError
from matching.serializer import FORMAT_VERSION, ProblemSerializer, ResultDocumentSerializer
from matching.solvers.bcagm import ALPHA_MODES
from matching.utils.affinity_helper import AffinityParams, SamplingConfig, build_matrix2, build_tensor
from matching.utils.experiment_helper import SECOND_ORDER_METHODS, run_method
from matching.utils.synthetic_data_helper import GroundTruth, accuracy

logger = logging.getLogger(__name__)


@dataclass
class MatchingProblem:
    template: np.ndarray
    scene: np.ndarray
    ground_truth: Optional[GroundTruth] = None
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    affinity: AffinityParams = field(default_factory=AffinityParams)
    method: str = 'bcagm'
    alpha_schedule: str = 'zero_then_bound'
    max_outer_iters: Optional[int] = None


def format_errors(errors, path=''):
    """
    Flattens DRF validation errors into ``field.path: message`` lines.

    Args:
    - errors (dict | list): ``serializer.errors``.
    - path (str): Prefix of the current level.

    Returns:
    - list: One string per error.
    """
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            if key == 'non_field_errors':
                name = path
            elif isinstance(key, int):
                name = f'{path}[{key}]'
            else:
                name = f'{path}.{key}' if path else str(key)
            lines.extend(format_errors(value, name))
        return lines
    if isinstance(errors, list):
        if all(isinstance(item, str) for item in errors):
            return [f'{path or "document"}: {message}' for message in errors]
        lines = []
        for index, item in enumerate(errors):
            if item:
                lines.extend(format_errors(item, f'{path}[{index}]'))
        return lines
    return [f'{path or "document"}: {errors}']


def parse_problem(data):
    """
    Validates a decoded problem document.

    Raises:
    - DocumentParseError: If the document does not follow the schema.
    - InvalidProblemError: If the point sets cannot be matched as given.
    """
    serializer = ProblemSerializer(data=data)
    if not serializer.is_valid():
        raise DocumentParseError('; '.join(format_errors(serializer.errors)))
    document = serializer.validated_data

    template = np.asarray(document['template'], dtype=np.float64)
    scene = np.asarray(document['scene'], dtype=np.float64)
    n1, n2 = template.shape[0], scene.shape[0]
    if n1 > n2:
        raise InvalidProblemError(f"template has {n1} points but scene only {n2}; need |P| <= |Q|.")
    if n1 < 3:
        raise InvalidProblemError(f"template needs at least 3 points, got {n1}.")

    ground_truth = None
    if document.get('ground_truth'):
        targets = [index - 1 for index in document['ground_truth']]
        if len(targets) > n1 or max(targets) >= n2:
            raise InvalidProblemError("ground_truth does not fit the template and scene sizes.")
        ground_truth = GroundTruth(tuple(targets))

    solver = document.get('solver', {})
    return MatchingProblem(
        template=template,
        scene=scene,
        ground_truth=ground_truth,
        sampling=SamplingConfig(**document.get('sampling', {})),
        affinity=AffinityParams(**document.get('affinity', {})),
        method=solver.get('method', 'bcagm'),
        alpha_schedule=ALPHA_MODES[solver.get('alpha_mode', 'zero-then-bound')],
        max_outer_iters=solver.get('max_outer_iters'),
    )


def load_problem(path):
    """
    Reads and validates a problem document from ``path``.

    Raises:
    - DocumentParseError: If the file cannot be read or is not valid JSON.
    """
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise DocumentParseError(f"Cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DocumentParseError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DocumentParseError("document: expected a JSON object.")
    return parse_problem(data)


def solve_problem(problem, threads=1):
    """
    Builds the affinities of ``problem`` and runs its method.

    Args:
    - problem (MatchingProblem): Validated problem.
    - threads (int): Workers of the tensor construction.

    Returns:
    - dict: Result document, ready for `render_result`.
    """
    tensor = build_tensor(problem.template, problem.scene, problem.sampling, problem.affinity, threads)
    logger.info("Built tensor with %d orbits for a %dx%d problem.",
                tensor.num_orbits, tensor.shape.n1, tensor.shape.n2)
    matrix = None
    if problem.method in SECOND_ORDER_METHODS:
        matrix = build_matrix2(problem.template, problem.scene, problem.affinity)
    outcome = run_method(problem.method, tensor, matrix, problem.alpha_schedule, problem.max_outer_iters)

    result = {
        'format_version': FORMAT_VERSION,
        'method': problem.method,
        'n1': tensor.shape.n1,
        'n2': tensor.shape.n2,
        'assignment': outcome.assignment.one_based(),
        'score3': outcome.trace.u_scores3[-1],
        'score4_alpha': outcome.score4_alpha,
        'iterations': outcome.iterations,
        'trace': outcome.trace.to_dict(),
    }
    if problem.ground_truth is not None:
        result['accuracy'] = accuracy(outcome.assignment, problem.ground_truth)
    return result


def render_result(result):
    """Result document as JSON text, newline terminated."""
    return json.dumps(ResultDocumentSerializer(result).data, indent=2) + '\n'
