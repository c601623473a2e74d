"""
Module: selfcheck_helper.py

Fast invariant suite behind ``manage.py selfcheck``, and the brute-force
oracles it shares with the tests.

Classes:
- SelfCheckFailure: Raised by a group whose invariant does not hold.
- GroupResult: Outcome of one group.
- SelfCheckSuite: Runs the groups in a fixed order.

Functions:
- random_tensor, random_qap_matrix: Seeded random instances.
- dense_f4: Materialized F4_alpha (n <= BRUTE_FORCE_THRESHOLD).
- all_assignments, brute_force_lap, brute_force_qap: Exhaustive optima over M.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from matching.solvers.bcagm import SolverConfig, check_trace, solve
from matching.solvers.lap import AssignmentVector, lap_objective, solve_lap_max
from matching.solvers.qap import QapMatrix, psi_with_guard, qap_objective
from matching.solvers.tensor_core import (
    LiftedOperator,
    MatchingShape,
    SparseSymmetricTensor3,
    contract3_mat,
    contract3_vec,
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
from matching.utils.affinity_helper import sample_triples

logger = logging.getLogger(__name__)


class SelfCheckFailure(AssertionError):
    pass


@dataclass
class GroupResult:
    name: str
    passed: bool
    reason: str = ''

    def report_line(self):
        return f'PASS {self.name}' if self.passed else f'FAIL {self.name}: {self.reason}'


def random_tensor(rng, shape, orbits):
    """Tensor with ``orbits`` distinct random triples and U(0, 1) values."""
    triples = sample_triples(rng, shape.n, orbits)
    return SparseSymmetricTensor3(shape, triples, rng.random(triples.shape[0]))


def random_qap_matrix(rng, shape):
    raw = rng.random((shape.n, shape.n))
    return QapMatrix(raw + raw.T, shape)


def random_assignment(rng, shape):
    return AssignmentVector(shape, tuple(rng.permutation(shape.n2)[:shape.n1].tolist()))


def dense_f4(tensor, alpha=0.0):
    """
    Materialized F4_alpha_ijkl = F3_ijk + F3_ijl + F3_ikl + F3_jkl + alpha * G4_ijkl.

    Raises:
    - ThresholdExceededError: Above ``BRUTE_FORCE_THRESHOLD``.
    """
    dense = to_dense3(tensor)
    lifted = dense[:, :, :, None] + dense[:, :, None, :] + dense[:, None, :, :] + dense[None, :, :, :]
    if alpha:
        eye = np.eye(tensor.shape.n)
        g4 = (
            np.einsum('ij,kl->ijkl', eye, eye)
            + np.einsum('ik,jl->ijkl', eye, eye)
            + np.einsum('il,jk->ijkl', eye, eye)
        ) / 3.0
        lifted = lifted + alpha * g4
    return lifted


def all_assignments(shape):
    return [AssignmentVector(shape, cols) for cols in itertools.permutations(range(shape.n2), shape.n1)]


def brute_force_lap(profit):
    """Optimal value of max <profit, X> over M by enumerating every injection."""
    profit = np.asarray(profit, dtype=np.float64)
    n1, n2 = profit.shape
    cols = np.array(list(itertools.permutations(range(n2), n1)), dtype=np.int64)
    return float(profit[np.arange(n1), cols].sum(axis=1).max())


def brute_force_qap(A):
    return max(qap_objective(A, x.indicator) for x in all_assignments(A.shape))


def _close(a, b, rel):
    return abs(a - b) <= rel * (1.0 + max(abs(a), abs(b)))


def _expect(condition, message):
    if not condition:
        raise SelfCheckFailure(message)


class SelfCheckSuite:
    """
    The invariant groups, run in a fixed order with fixed seeds.

    Attributes:
    - seed (int): Base seed of every group.
    - force_failure (bool): Marks the first group failed; used to test the exit path.
    """

    GROUPS = (
        'multilinear-identities',
        'implicit-lift',
        'convexification',
        'lemma2-inequalities',
        'theorem1-equivalence',
        'lap-optimality',
        'psi-contract',
        'monotonic-ascent',
    )

    def __init__(self, seed=0, force_failure=False):
        self.seed = seed
        self.force_failure = force_failure

    def run(self):
        """
        Runs every group.

        Returns:
        - list: GroupResult per group, in GROUPS order.
        """
        results = []
        for position, name in enumerate(self.GROUPS):
            if self.force_failure and position == 0:
                results.append(GroupResult(name, False, 'forced failure'))
                continue
            check = getattr(self, '_check_' + name.replace('-', '_'))
            try:
                check(np.random.default_rng(self.seed + position))
            except Exception as exc:
                logger.debug("Self-check group %s failed.", name, exc_info=True)
                results.append(GroupResult(name, False, str(exc) or type(exc).__name__))
            else:
                results.append(GroupResult(name, True))
        return results

    def _check_multilinear_identities(self, rng):
        shape = MatchingShape(3, 4)
        for _ in range(20):
            tensor = random_tensor(rng, shape, 15)
            dense = to_dense3(tensor)
            x, y = rng.standard_normal(shape.n), rng.standard_normal(shape.n)

            _expect(_close(eval_s3(tensor, x), float(np.einsum('ijk,i,j,k->', dense, x, x, x)), 1e-10),
                    "S3 disagrees with the dense contraction")
            _expect(np.allclose(contract3_vec(tensor, x, y), np.einsum('ijk,i,j->k', dense, x, y),
                                rtol=1e-10, atol=1e-12), "F3(x, y, .) disagrees with the dense contraction")
            _expect(np.allclose(contract3_mat(tensor, x), np.einsum('ijk,i->jk', dense, x),
                                rtol=1e-10, atol=1e-12), "F3(x, ., .) disagrees with the dense contraction")
            _expect(_close(eval_g4(x, x, x, x), float(np.dot(x, x)) ** 2, 1e-12), "G4(x, x, x, x) != ||x||^4")

            op = LiftedOperator(tensor)
            _expect(_close(eval_f4_alpha(op, x, x, x, x), 4.0 * eval_s3(tensor, x) * x.sum(), 1e-10),
                    "lifting identity S4(x) = 4 S3(x) sum(x) fails")
            point = random_assignment(rng, shape).indicator
            _expect(_close(eval_s4_alpha(op, point), 4.0 * shape.n1 * eval_s3(tensor, point), 1e-10),
                    "S4 != 4 n1 S3 on M")

            h = 1e-4
            op = LiftedOperator(tensor, 0.5)
            numeric = np.array([
                (eval_s4_alpha(op, x + h * e) - eval_s4_alpha(op, x - h * e)) / (2 * h) for e in np.eye(shape.n)
            ])
            analytic = gradient_s4_alpha(op, x)
            _expect(np.linalg.norm(numeric - analytic) <= 1e-5 * (1.0 + np.linalg.norm(analytic)),
                    "gradient disagrees with central differences")

            value, mirrored = lemma1_witness(tensor, x, y)
            _expect(value == 0 or min(value, mirrored) < 0, "no negative-curvature witness for S3")

    def _check_implicit_lift(self, rng):
        shape = MatchingShape(3, 4)
        for _ in range(10):
            tensor = random_tensor(rng, shape, 20)
            alpha = float(rng.random())
            op = LiftedOperator(tensor, alpha)
            dense = dense_f4(tensor, alpha)
            x, y, z, t = (rng.standard_normal(shape.n) for _ in range(4))

            _expect(np.allclose(lift_contract_vec(op, x, y, z), np.einsum('ijkl,i,j,k->l', dense, x, y, z),
                                rtol=1e-10, atol=1e-10), "F4(x, y, z, .) disagrees with the dense lift")
            _expect(np.allclose(lift_contract_mat(op, x, y), np.einsum('ijkl,i,j->kl', dense, x, y),
                                rtol=1e-10, atol=1e-10), "F4(x, y, ., .) disagrees with the dense lift")
            reference = float(np.einsum('ijkl,i,j,k,l->', dense, x, y, z, t))
            _expect(_close(eval_f4_alpha(op, x, y, z, t), reference, 1e-10),
                    "F4(x, y, z, t) disagrees with the dense lift")
            for perm in itertools.permutations((x, y, z, t)):
                _expect(_close(eval_f4_alpha(op, *perm), reference, 1e-10), "F4 is not symmetric")

    def _check_convexification(self, rng):
        shape = MatchingShape(3, 4)
        for _ in range(5):
            tensor = random_tensor(rng, shape, 20)
            _expect(f4_norm_exact(tensor) <= 4.0 * math.sqrt(shape.n) * f3_norm(tensor) * (1 + 1e-12),
                    "||F4|| exceeds 4 sqrt(n) ||F3||")
            alpha = exact_alpha(tensor)
            op = LiftedOperator(tensor, alpha)
            for _ in range(5):
                eigenvalues = np.linalg.eigvalsh(hessian_s4_alpha(op, rng.standard_normal(shape.n)))
                _expect(eigenvalues[0] >= -1e-8 * (1.0 + eigenvalues[-1]),
                        f"Hessian not PSD at exact alpha (min eigenvalue {eigenvalues[0]:.3e})")
            point = random_assignment(rng, shape).indicator
            shift = eval_s4_alpha(op, point) - eval_s4_alpha(op.with_alpha(0.0), point)
            _expect(_close(shift, alpha * shape.n1 ** 2, 1e-10), "S4_alpha - S4 != alpha n1^2 on M")

    def _check_lemma2_inequalities(self, rng):
        shape = MatchingShape(3, 4)
        for _ in range(5):
            tensor = random_tensor(rng, shape, 20)
            op = LiftedOperator(tensor, exact_alpha(tensor))
            for _ in range(200):
                vectors = [rng.standard_normal(shape.n) for _ in range(4)]
                scores = [eval_s4_alpha(op, v) for v in vectors]
                scale = max(abs(s) for s in scores)
                x, y, z, t = vectors
                _expect(eval_f4_alpha(op, x, x, y, y) <= max(scores[0], scores[1]) + 1e-9 * (1.0 + scale),
                        "F4(x, x, y, y) exceeds max(S4(x), S4(y))")
                _expect(eval_f4_alpha(op, x, y, z, t) <= max(scores) + 1e-9 * (1.0 + scale),
                        "F4(x, y, z, t) exceeds the largest S4 of its arguments")

    def _check_theorem1_equivalence(self, rng):
        shape = MatchingShape(3, 3)
        points = [a.indicator for a in all_assignments(shape)]
        for _ in range(5):
            tensor = random_tensor(rng, shape, 15)
            op = LiftedOperator(tensor, exact_alpha(tensor))
            single = max(eval_s4_alpha(op, x) for x in points)
            multi = max(eval_f4_alpha(op, *blocks) for blocks in itertools.product(points, repeat=4))
            _expect(_close(single, multi, 1e-10), f"max S4_alpha {single!r} != max F4_alpha {multi!r} over M")

    def _check_lap_optimality(self, rng):
        for _ in range(50):
            profit = rng.standard_normal((5, 7))
            found = lap_objective(profit, solve_lap_max(profit))
            _expect(_close(found, brute_force_lap(profit), 1e-12), "Hungarian solution is not optimal")

    def _check_psi_contract(self, rng):
        shape = MatchingShape(3, 5)
        for _ in range(50):
            A = random_qap_matrix(rng, shape)
            incumbent = random_assignment(rng, shape)
            before = qap_objective(A, incumbent.indicator)
            optimum = brute_force_qap(A)
            for method in ('ipfp', 'mpm'):
                result = psi_with_guard(A, incumbent, method)
                _expect(result.objective >= before, f"{method} lowered the QAP objective")
                _expect(result.objective <= optimum * (1 + 1e-12), f"{method} exceeds the QAP optimum")

    def _check_monotonic_ascent(self, rng):
        shape = MatchingShape(5, 8)
        for _ in range(10):
            tensor = random_tensor(rng, shape, 50)
            for method in ('bcagm', 'bcagm_ipfp', 'bcagm_mp'):
                cfg = SolverConfig.from_method(method)
                solution = solve(tensor, cfg)
                check_trace(solution.trace, cfg.equality_tol_rel)
                _expect(solution.trace.terminated == 'converged', f"{method} did not terminate")
                _expect(_close(solution.score3, eval_s3(tensor, solution.assignment.indicator), 1e-10),
                        f"{method} reports a stale score")
