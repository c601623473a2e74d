"""
Module: affinity_helper.py

Affinities between two 2-D point sets.

The third-order tensor compares triangles: every sampled template triangle
is paired with its nearest scene triangles in the space of interior-angle
sines, and each pair contributes exp(-gamma * ||f_P - f_Q||^2) to the
correspondence triple it aligns. The second-order matrix compares pairwise
distances and feeds the standalone QAP baselines.

Classes:
- SamplingConfig: Triangle sampling and nearest-neighbour parameters.
- AffinityParams: gamma and sigma_s.

Functions:
- triangle_feature / triangle_features: Sines of the interior angles.
- sample_triples: Distinct unordered index triples.
- build_tensor: Third-order affinity tensor.
- build_matrix2: Second-order distance affinity as a QapMatrix.

Dependencies:
- numpy
- scipy.spatial (KD-tree nearest neighbours, pairwise distances)
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from matching.conf import hypermatch_settings
from matching.exceptions import DegenerateTriangleError, InvalidProblemError, NonFiniteInputError
from matching.solvers.qap import QapMatrix
from matching.solvers.tensor_core import MatchingShape, SparseSymmetricTensor3, check_materialization

logger = logging.getLogger(__name__)

# Vertex orderings of a scene triangle; feature m follows vertex m.
ORDERINGS = tuple(itertools.permutations(range(3)))


@dataclass(frozen=True)
class SamplingConfig:
    """
    Attributes:
    - triples_per_point (int): t; t * n1 template triples are sampled.
    - knn (int): Scene triangles kept per template triangle.
    - min_side (float): Shortest admissible triangle side.
    - seed (int): Seed of the sampling generator.
    """

    triples_per_point: int = 50
    knn: int = 300
    min_side: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if int(self.triples_per_point) < 1:
            raise InvalidProblemError("triples_per_point must be at least 1.")
        if int(self.knn) < 1:
            raise InvalidProblemError("knn must be at least 1.")
        if not self.min_side > 0:
            raise InvalidProblemError("min_side must be positive.")


@dataclass(frozen=True)
class AffinityParams:
    """
    Attributes:
    - gamma (float): Feature-distance weight; inverse mean retained squared distance when None.
    - sigma_s (float): Distance-gap scale of the second-order affinity.
    """

    gamma: Optional[float] = None
    sigma_s: float = 0.5

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise InvalidProblemError("gamma must be positive when given.")
        if not self.sigma_s > 0:
            raise InvalidProblemError("sigma_s must be positive.")


def as_point_set(points, name='points'):
    """
    Converts ``points`` to an (m, 2) float array.

    Raises:
    - InvalidProblemError: If the array is not (m, 2) with m >= 1.
    - NonFiniteInputError: If a coordinate is NaN or infinite.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise InvalidProblemError(f"{name} must be a non-empty list of 2-D points, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains non-finite coordinates.")
    return arr


def triangle_features(points, triples, min_side=1e-9):
    """
    Vectorized `triangle_feature`.

    Args:
    - points (numpy.ndarray): (m, 2) coordinates.
    - triples (numpy.ndarray): (k, 3) vertex indices.
    - min_side (float): Shortest admissible side.

    Returns:
    - tuple: ((k, 3) sines of the angles at each vertex, (k,) validity mask).
      Rows flagged invalid are collinear or have a side below ``min_side``;
      their features are zero.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    a, b, c = points[triples[:, 0]], points[triples[:, 1]], points[triples[:, 2]]
    side_a = np.linalg.norm(b - c, axis=1)
    side_b = np.linalg.norm(a - c, axis=1)
    side_c = np.linalg.norm(a - b, axis=1)
    u, v = b - a, c - a
    cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    longest = np.maximum(np.maximum(side_a, side_b), side_c)
    valid = (np.minimum(np.minimum(side_a, side_b), side_c) >= min_side) & (cross > 1e-12 * longest * longest)

    features = np.zeros((triples.shape[0], 3))
    if np.any(valid):
        sa, sb, sc, area2 = side_a[valid], side_b[valid], side_c[valid], cross[valid]
        features[valid] = np.column_stack([area2 / (sb * sc), area2 / (sa * sc), area2 / (sa * sb)])
    return np.minimum(features, 1.0), valid


def triangle_feature(points, triple, min_side=1e-9):
    """
    Sines of the interior angles of a triangle, in vertex order.

    Args:
    - points (array-like): Point set.
    - triple (tuple): Three distinct vertex indices.
    - min_side (float): Shortest admissible side.

    Returns:
    - numpy.ndarray: (sin theta_1, sin theta_2, sin theta_3).

    Raises:
    - DegenerateTriangleError: If the triangle is collinear or a side is below ``min_side``.
    """
    points = as_point_set(points)
    triple = tuple(int(i) for i in triple)
    if len(set(triple)) != 3 or min(triple) < 0 or max(triple) >= points.shape[0]:
        raise InvalidProblemError(f"Triangle vertices must be three distinct valid indices, got {triple}.")
    features, valid = triangle_features(points, [triple], min_side)
    if not valid[0]:
        raise DegenerateTriangleError(f"Triangle {triple} is degenerate.")
    return features[0]


def sample_triples(rng, n, size, cap=None):
    """
    Distinct unordered triples of ``range(n)``, each sorted, lexicographically ordered.

    All C(n, 3) triples are returned when ``size`` reaches that count. Below
    ``cap`` combinations the draw is a choice without replacement from the
    enumeration; above it, triples are drawn at random and deduplicated.

    Args:
    - rng (numpy.random.Generator): Seeded generator.
    - n (int): Number of points.
    - size (int): Number of triples wanted.
    - cap (int): Largest enumeration, ``Q_TRIPLE_CAP`` by default.

    Returns:
    - numpy.ndarray: (min(size, C(n, 3)), 3) int64 array.
    """
    cap = hypermatch_settings.Q_TRIPLE_CAP if cap is None else int(cap)
    total = math.comb(n, 3)
    if total == 0 or size <= 0:
        return np.empty((0, 3), dtype=np.int64)

    if total <= max(cap, size):
        combos = np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64)
        if size >= total:
            return combos
        return combos[np.sort(rng.choice(total, size=size, replace=False))]

    drawn = np.empty((0, 3), dtype=np.int64)
    while drawn.shape[0] < size:
        batch = np.sort(rng.integers(0, n, size=(2 * (size - drawn.shape[0]) + 16, 3)), axis=1)
        batch = batch[(batch[:, 0] != batch[:, 1]) & (batch[:, 1] != batch[:, 2])]
        drawn = np.concatenate([drawn, batch])
        _, first = np.unique(drawn, axis=0, return_index=True)
        drawn = drawn[np.sort(first)]
    drawn = drawn[:size]
    return drawn[np.lexsort(drawn.T[::-1])]


def nearest_features(queries, pool, k, threads=1):
    """
    Exact k nearest pool rows of every query row (squared Euclidean).

    The search runs on a KD-tree over ``pool``; ``threads`` is handed to the
    query as its worker count and does not change the result.

    Returns:
    - tuple: ((m, k) pool indices, (m, k) squared distances), each row sorted
      by distance, ties by pool index.
    """
    m, size = queries.shape[0], pool.shape[0]
    k = min(int(k), size)
    if m == 0 or k == 0:
        return np.empty((m, k), dtype=np.int64), np.empty((m, k))
    _, found = cKDTree(pool).query(queries, k=k, workers=max(1, int(threads)))
    found = np.asarray(found, dtype=np.int64).reshape(m, k)
    # Recomputed from coordinates so equal distances compare equal.
    sq_distances = ((queries[:, None, :] - pool[found]) ** 2).sum(axis=2)
    order = np.lexsort((found, sq_distances), axis=-1)
    return np.take_along_axis(found, order, axis=1), np.take_along_axis(sq_distances, order, axis=1)


def _check_pair(P, Q):
    P, Q = as_point_set(P, 'template'), as_point_set(Q, 'scene')
    if P.shape[0] > Q.shape[0]:
        raise InvalidProblemError(
            f"Template has {P.shape[0]} points but the scene only {Q.shape[0]}; need |P| <= |Q|."
        )
    return P, Q


def build_tensor(P, Q, sampling=None, params=None, threads=1):
    """
    Third-order affinity tensor between template P and scene Q.

    t * n1 template triangles are sampled (degenerate ones dropped). Scene
    triangles are all non-degenerate combinations, or a seeded sample of
    ``Q_TRIPLE_CAP`` of them, each taken in its six vertex orderings. For every
    template triangle the ``knn`` nearest ordered scene triangles in feature
    space are kept and vertex m of one is matched to vertex m of the other.

    Args:
    - P (array-like): (n1, 2) template points, n1 >= 3.
    - Q (array-like): (n2, 2) scene points, n2 >= n1.
    - sampling (SamplingConfig): Sampling parameters.
    - params (AffinityParams): gamma (sigma_s is unused here).
    - threads (int): Workers of the nearest-neighbour query.

    Returns:
    - SparseSymmetricTensor3: Values in (0, 1].

    Raises:
    - InvalidProblemError: If n1 > n2 or n1 < 3.
    """
    sampling = sampling or SamplingConfig()
    params = params or AffinityParams()
    P, Q = _check_pair(P, Q)
    n1, n2 = P.shape[0], Q.shape[0]
    if n1 < 3:
        raise InvalidProblemError(f"The template needs at least 3 points, got {n1}.")
    shape = MatchingShape(n1, n2)
    rng = np.random.default_rng(sampling.seed)

    template = sample_triples(rng, n1, sampling.triples_per_point * n1)
    template_features, valid = triangle_features(P, template, sampling.min_side)
    if not np.all(valid):
        logger.debug("Skipped %d degenerate template triangles.", int((~valid).sum()))
    template, template_features = template[valid], template_features[valid]

    cap = hypermatch_settings.Q_TRIPLE_CAP
    scene = sample_triples(rng, n2, cap, cap)
    scene_features, valid = triangle_features(Q, scene, sampling.min_side)
    if not np.all(valid):
        logger.debug("Skipped %d degenerate scene triangles.", int((~valid).sum()))
    scene, scene_features = scene[valid], scene_features[valid]

    if template.shape[0] == 0 or scene.shape[0] == 0:
        logger.warning("No non-degenerate triangles to compare; the tensor is empty.")
        return SparseSymmetricTensor3(shape)

    ordered = np.concatenate([scene[:, list(order)] for order in ORDERINGS])
    ordered_features = np.concatenate([scene_features[:, list(order)] for order in ORDERINGS])

    nearest, sq_distances = nearest_features(template_features, ordered_features, sampling.knn, threads)
    gamma = params.gamma
    if gamma is None:
        mean = float(sq_distances.mean())
        gamma = 1.0 / mean if mean > 0 else 1.0
    values = np.exp(-gamma * sq_distances).reshape(-1)

    linear = (template[:, None, :] * n2 + ordered[nearest]).reshape(-1, 3)
    distinct = (linear[:, 0] != linear[:, 1]) & (linear[:, 0] != linear[:, 2]) & (linear[:, 1] != linear[:, 2])
    # exp underflows to 0 for far features; stored values stay positive.
    keep = distinct & (values > 0)
    return SparseSymmetricTensor3(shape, linear[keep], values[keep])


def distance_affinity(P, Q, sigma_s):
    """
    Dense second-order affinity exp(-(d^P_{i1 i2} - d^Q_{j1 j2})^2 / sigma_s^2)
    between correspondences (i1, j1) and (i2, j2); zero when i1 = i2 or j1 = j2.

    Returns:
    - numpy.ndarray: (n, n) array in the row-major correspondence order.
    """
    P, Q = _check_pair(P, Q)
    n1, n2 = P.shape[0], Q.shape[0]
    check_materialization(n1 * n2)
    d_p, d_q = cdist(P, P), cdist(Q, Q)
    gap = d_p[:, None, :, None] - d_q[None, :, None, :]
    affinity = np.exp(-(gap * gap) / (sigma_s * sigma_s))
    affinity[np.arange(n1), :, np.arange(n1), :] = 0.0
    affinity[:, np.arange(n2), :, np.arange(n2)] = 0.0
    return affinity.reshape(n1 * n2, n1 * n2)


def build_matrix2(P, Q, params=None):
    """Second-order distance affinity wrapped as a QapMatrix."""
    params = params or AffinityParams()
    P, Q = _check_pair(P, Q)
    shape = MatchingShape(P.shape[0], Q.shape[0])
    return QapMatrix(distance_affinity(P, Q, params.sigma_s), shape)
