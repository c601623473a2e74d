"""
Module: tensor_core.py

Storage of the symmetric third-order affinity tensor and every contraction the
solvers need, including the implicit fourth-order lifting

    F4_ijkl = F3_ijk + F3_ijl + F3_ikl + F3_jkl

and its convexified form F4_alpha = F4 + alpha * G4. The fourth-order tensor is
never materialized on the solver path; `f4_norm_exact` and `to_dense3` are
test oracles limited by ``BRUTE_FORCE_THRESHOLD``.

Classes:
- MatchingShape: (n1, n2) with the row-major linearization of V x V'.
- SparseSymmetricTensor3: canonical-orbit storage of F3.
- LiftedOperator: F3 together with the convexification weight alpha.

Dependencies:
- numpy
- scipy.sparse (duplicate-summing assembly of dense contractions)

Indices are 0-based internally. `SparseSymmetricTensor3.from_orbits` and
`SparseSymmetricTensor3.orbits` speak the 1-based convention of the documents.
"""

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix

from matching.conf import hypermatch_settings
from matching.exceptions import (
    DimensionMismatchError,
    InvalidProblemError,
    InvalidTensorError,
    NonFiniteInputError,
    ThresholdExceededError,
)


@dataclass(frozen=True)
class MatchingShape:
    """
    Sizes of the two point sets and the linear ordering of correspondences.

    Correspondence (i, j) (0-based) has linear index ``i * n2 + j``.

    Attributes:
    - n1 (int): Number of template points (rows).
    - n2 (int): Number of scene points (columns), n2 >= n1.
    """

    n1: int
    n2: int

    def __post_init__(self):
        if int(self.n1) < 1 or int(self.n2) < int(self.n1):
            raise InvalidProblemError(
                f"Matching shape requires 1 <= n1 <= n2, got n1={self.n1}, n2={self.n2}."
            )
        object.__setattr__(self, 'n1', int(self.n1))
        object.__setattr__(self, 'n2', int(self.n2))

    @property
    def n(self):
        return self.n1 * self.n2

    def linear_index(self, i, j):
        return i * self.n2 + j

    def pair(self, index):
        return divmod(int(index), self.n2)


class SparseSymmetricTensor3:
    """
    Symmetric third-order tensor stored as one representative per orbit.

    Every stored triple is strictly increasing; the five other permutations
    are implied. Construction canonicalizes: triples are sorted, triples with
    a repeated index are rejected and duplicate triples are summed. Instances
    are immutable.

    Attributes:
    - shape (MatchingShape): Shape of the matching problem, n = n1 * n2.
    - indices (numpy.ndarray): (m, 3) int64 array of canonical triples, lexicographically sorted.
    - values (numpy.ndarray): (m,) float64 array of nonnegative weights.
    """

    __slots__ = ('shape', 'indices', 'values')

    def __init__(self, shape, indices=(), values=()):
        n = shape.n
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        val = np.asarray(values, dtype=np.float64).reshape(-1)
        if idx.shape[0] != val.shape[0]:
            raise InvalidTensorError(
                f"Got {idx.shape[0]} index triples but {val.shape[0]} values."
            )
        if not np.all(np.isfinite(val)):
            raise InvalidTensorError("Tensor values must be finite.")
        if np.any(val < 0):
            raise InvalidTensorError("Tensor values must be nonnegative.")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InvalidTensorError(f"Tensor indices must lie in [0, {n}).")

        idx = np.sort(idx, axis=1)
        if np.any((idx[:, 0] == idx[:, 1]) | (idx[:, 1] == idx[:, 2])):
            raise InvalidTensorError(
                "Entries with a repeated index (i=j, i=k or j=k) are not supported."
            )

        if idx.shape[0]:
            idx, inverse = np.unique(idx, axis=0, return_inverse=True)
            val = np.bincount(inverse.reshape(-1), weights=val, minlength=idx.shape[0])

        idx = np.ascontiguousarray(idx)
        val = np.ascontiguousarray(val, dtype=np.float64)
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, 'shape', shape)
        object.__setattr__(self, 'indices', idx)
        object.__setattr__(self, 'values', val)

    def __setattr__(self, name, value):
        raise AttributeError('SparseSymmetricTensor3 is immutable')

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f'SparseSymmetricTensor3(n1={self.shape.n1}, n2={self.shape.n2}, orbits={len(self)})'

    @classmethod
    def from_orbits(cls, shape, orbits):
        """
        Builds a tensor from 1-based ``(i, j, k, v)`` tuples in any index order.
        """
        orbits = list(orbits)
        if not orbits:
            return cls(shape)
        indices = [(i - 1, j - 1, k - 1) for i, j, k, _ in orbits]
        values = [v for *_, v in orbits]
        return cls(shape, indices, values)

    @classmethod
    def from_entries(cls, shape, indices, values):
        """Canonicalizing ingest of 0-based triples; same rules as the constructor."""
        return cls(shape, indices, values)

    @property
    def num_orbits(self):
        return len(self)

    def orbits(self):
        """Yields the stored orbits as 1-based ``(i, j, k, v)`` tuples."""
        for (i, j, k), v in zip(self.indices.tolist(), self.values.tolist()):
            yield i + 1, j + 1, k + 1, v


@dataclass(frozen=True)
class LiftedOperator:
    """
    The lifted, convexified form F4_alpha = F4 + alpha * G4 of a third-order tensor.

    Attributes:
    - tensor (SparseSymmetricTensor3): The third-order affinities.
    - alpha (float): Convexification weight, alpha >= 0.
    """

    tensor: SparseSymmetricTensor3
    alpha: float = 0.0

    def __post_init__(self):
        alpha = float(self.alpha)
        if not math.isfinite(alpha) or alpha < 0:
            raise InvalidTensorError(f"alpha must be finite and nonnegative, got {self.alpha}.")
        object.__setattr__(self, 'alpha', alpha)

    @property
    def shape(self):
        return self.tensor.shape

    def with_alpha(self, alpha):
        return replace(self, alpha=alpha)


def as_vector(x, n, name='x'):
    """
    Validates and converts ``x`` to a float64 vector of length ``n``.

    Raises:
    - DimensionMismatchError: If ``x`` is not one-dimensional of length ``n``.
    - NonFiniteInputError: If ``x`` has NaN or infinite entries.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DimensionMismatchError(f"{name} must be a vector of length {n}, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains non-finite entries.")
    return arr


def check_materialization(n, threshold=None):
    threshold = hypermatch_settings.MATERIALIZATION_THRESHOLD if threshold is None else threshold
    if n > threshold:
        raise ThresholdExceededError(
            f"Refusing to materialize a {n}x{n} matrix (threshold {threshold})."
        )


# Third order.

def eval_s3(tensor, x):
    """
    Matching score S3(x) = sum_ijk F3_ijk x_i x_j x_k over the full tensor.

    Args:
    - tensor (SparseSymmetricTensor3): Affinity tensor.
    - x (array-like): Vector of length n.

    Returns:
    - float: 6 * sum over orbits of v * x_i * x_j * x_k.
    """
    x = as_vector(x, tensor.shape.n)
    i, j, k = tensor.indices.T
    return 6.0 * float(np.dot(tensor.values, x[i] * x[j] * x[k]))


def contract3_vec(tensor, x, y):
    """
    Vector F3(x, y, .): l -> sum_ij F3_ijl x_i y_j over the full tensor.

    Each orbit (i, j, k, v) contributes v * (x_a y_b + x_b y_a) to coordinate
    c for every choice of c in {i, j, k}, {a, b} being the remaining pair.
    """
    n = tensor.shape.n
    x = as_vector(x, n, 'x')
    y = as_vector(y, n, 'y')
    i, j, k = tensor.indices.T
    v = tensor.values
    rows = np.concatenate([k, j, i])
    weights = np.concatenate([
        v * (x[i] * y[j] + x[j] * y[i]),
        v * (x[i] * y[k] + x[k] * y[i]),
        v * (x[j] * y[k] + x[k] * y[j]),
    ])
    return np.bincount(rows, weights=weights, minlength=n).astype(np.float64, copy=False)


def eval_f3(tensor, x, y, z):
    """Trilinear form F3(x, y, z)."""
    z = as_vector(z, tensor.shape.n, 'z')
    return float(np.dot(contract3_vec(tensor, x, y), z))


def contract3_mat(tensor, x, threshold=None):
    """
    Dense symmetric matrix F3(x, ., .): (k, l) -> sum_i F3_ikl x_i.

    The Hessian of S3 at x is six times this matrix.

    Raises:
    - ThresholdExceededError: If n is above ``MATERIALIZATION_THRESHOLD``.
    """
    n = tensor.shape.n
    x = as_vector(x, n)
    check_materialization(n, threshold)
    i, j, k = tensor.indices.T
    v = tensor.values
    rows = np.concatenate([j, k, i, k, i, j])
    cols = np.concatenate([k, j, k, i, j, i])
    vi, vj, vk = v * x[i], v * x[j], v * x[k]
    weights = np.concatenate([vi, vi, vj, vj, vk, vk])
    return coo_matrix((weights, (rows, cols)), shape=(n, n)).toarray()


def f3_norm(tensor):
    """Frobenius norm of the full symmetric tensor: sqrt(6 * sum v^2)."""
    return math.sqrt(6.0 * float(np.dot(tensor.values, tensor.values)))


def lemma1_witness(tensor, x, y):
    """
    Returns ``(F3(x, y, y), F3(-x, y, y))``.

    Whenever the first value is nonzero one of the two is negative, which is a
    direction of negative curvature of S3: S3 is never convex unless it is zero.
    """
    value = eval_f3(tensor, x, y, y)
    return value, eval_f3(tensor, -np.asarray(x, dtype=np.float64), y, y)


def to_dense3(tensor, threshold=None):
    """Dense n x n x n copy of F3 (oracle only)."""
    n = tensor.shape.n
    threshold = hypermatch_settings.BRUTE_FORCE_THRESHOLD if threshold is None else threshold
    if n > threshold:
        raise ThresholdExceededError(f"Dense third-order oracle limited to n <= {threshold}, got n={n}.")
    dense = np.zeros((n, n, n))
    for perm in itertools.permutations(range(3)):
        cols = tensor.indices[:, perm]
        np.add.at(dense, (cols[:, 0], cols[:, 1], cols[:, 2]), tensor.values)
    return dense


# Fourth order (implicit).

def eval_g4(x, y, z, t):
    """
    Multilinear form of ||x||^4:
    (<x,y><z,t> + <x,z><y,t> + <x,t><y,z>) / 3.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0] if x.ndim == 1 else -1
    x = as_vector(x, n, 'x')
    y, z, t = as_vector(y, n, 'y'), as_vector(z, n, 'z'), as_vector(t, n, 't')
    return (np.dot(x, y) * np.dot(z, t) + np.dot(x, z) * np.dot(y, t) + np.dot(x, t) * np.dot(y, z)) / 3.0


def lift_contract_vec(op, x, y, z):
    """
    Vector F4_alpha(x, y, z, .) computed from third-order contractions.

    F4(x,y,z,.) = F3(x,y,z) 1 + (sum z) F3(x,y,.) + (sum y) F3(x,z,.) + (sum x) F3(y,z,.)
    plus alpha * (<x,y> z + <x,z> y + <y,z> x) / 3.

    Args:
    - op (LiftedOperator): Tensor and alpha.
    - x, y, z (array-like): Vectors of length n.

    Returns:
    - numpy.ndarray: Vector of length n.
    """
    tensor = op.tensor
    n = tensor.shape.n
    x, y, z = as_vector(x, n, 'x'), as_vector(y, n, 'y'), as_vector(z, n, 'z')
    c_xy = contract3_vec(tensor, x, y)
    c_xz = contract3_vec(tensor, x, z)
    c_yz = contract3_vec(tensor, y, z)
    out = np.full(n, float(np.dot(c_xy, z)))
    out += z.sum() * c_xy + y.sum() * c_xz + x.sum() * c_yz
    if op.alpha:
        out += op.alpha * (np.dot(x, y) * z + np.dot(x, z) * y + np.dot(y, z) * x) / 3.0
    return out


def lift_contract_mat(op, x, y, threshold=None):
    """
    Dense matrix F4_alpha(x, y, ., .).

    c 1^T + 1 c^T + (sum y) F3(x,.,.) + (sum x) F3(y,.,.)
    + alpha * (<x,y> I + x y^T + y x^T) / 3, where c = F3(x, y, .).
    Symmetric by construction.

    Raises:
    - ThresholdExceededError: If n is above ``MATERIALIZATION_THRESHOLD``.
    """
    tensor = op.tensor
    n = tensor.shape.n
    x, y = as_vector(x, n, 'x'), as_vector(y, n, 'y')
    check_materialization(n, threshold)
    c = contract3_vec(tensor, x, y)
    ones = np.ones(n)
    mat = np.outer(c, ones) + np.outer(ones, c)
    f3_x = contract3_mat(tensor, x, threshold)
    if np.array_equal(x, y):
        mat += (y.sum() + x.sum()) * f3_x
    else:
        mat += y.sum() * f3_x + x.sum() * contract3_mat(tensor, y, threshold)
    if op.alpha:
        xy = np.outer(x, y)
        mat += op.alpha * (np.dot(x, y) * np.eye(n) + xy + xy.T) / 3.0
    return mat


def eval_f4_alpha(op, x, y, z, t):
    """
    Multilinear form F4_alpha(x, y, z, t); symmetric in its four arguments.

    F4(x,y,z,t) = F3(x,y,z) sum t + F3(x,y,t) sum z + F3(x,z,t) sum y + F3(y,z,t) sum x.
    """
    tensor = op.tensor
    n = tensor.shape.n
    x, y = as_vector(x, n, 'x'), as_vector(y, n, 'y')
    z, t = as_vector(z, n, 'z'), as_vector(t, n, 't')
    c_xy = contract3_vec(tensor, x, y)
    c_zt = contract3_vec(tensor, z, t)
    value = (
        np.dot(c_xy, z) * t.sum()
        + np.dot(c_xy, t) * z.sum()
        + np.dot(c_zt, x) * y.sum()
        + np.dot(c_zt, y) * x.sum()
    )
    if op.alpha:
        value += op.alpha * eval_g4(x, y, z, t)
    return float(value)


def eval_s4_alpha(op, x):
    """S4_alpha(x) = 4 S3(x) (sum x) + alpha ||x||^4."""
    x = as_vector(x, op.tensor.shape.n)
    sq = float(np.dot(x, x))
    return 4.0 * eval_s3(op.tensor, x) * float(x.sum()) + op.alpha * sq * sq


def gradient_s4_alpha(op, x):
    return 4.0 * lift_contract_vec(op, x, x, x)


def hessian_s4_alpha(op, x, threshold=None):
    return 12.0 * lift_contract_mat(op, x, x, threshold)


# Convexification weight.

def alpha_bound(tensor):
    """
    Convexification weight 3 * 4 * sqrt(n) * ||F3||.

    Each of the four shifted copies in the lifting is constant along one mode
    and has norm sqrt(n) ||F3||, so ||F4|| <= 4 sqrt(n) ||F3|| and the returned
    value is at least 3 ||F4||.
    """
    return 12.0 * math.sqrt(tensor.shape.n) * f3_norm(tensor)


def f4_norm_exact(tensor, threshold=None):
    """
    Frobenius norm of the materialized lifted tensor (oracle, O(n^4) memory).

    Raises:
    - ThresholdExceededError: If n is above ``BRUTE_FORCE_THRESHOLD``.
    """
    dense = to_dense3(tensor, threshold)
    lifted = (
        dense[:, :, :, None]
        + dense[:, :, None, :]
        + dense[:, None, :, :]
        + dense[None, :, :, :]
    )
    return math.sqrt(float(np.sum(lifted * lifted)))


def exact_alpha(tensor, threshold=None):
    """Smallest weight covered by the convexification result: 3 ||F4||."""
    return 3.0 * f4_norm_exact(tensor, threshold)
