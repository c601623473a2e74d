"""
Synthetic point-set matching instances and the accuracy metric.

A template of inliers is drawn from N(0, 1) in the plane. The scene is the
template plus Gaussian deformation noise, followed by outliers from N(0, 1);
the whole scene is then scaled and shuffled.
"""

from dataclasses import dataclass

import numpy as np

from matching.exceptions import DimensionMismatchError, InvalidProblemError


@dataclass(frozen=True, order=True)
class GridPoint:
    """
    One setting of the synthetic protocol.

    Attributes:
    - n_in (int): Inliers, also the template size.
    - n_out (int): Outliers added to the scene.
    - sigma (float): Standard deviation of the deformation noise.
    - scale (float): Factor applied to every scene coordinate.
    """

    n_in: int
    n_out: int = 0
    sigma: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if int(self.n_in) < 3:
            raise InvalidProblemError(f"n_in must be at least 3 for triangles to exist, got {self.n_in}.")
        if int(self.n_out) < 0:
            raise InvalidProblemError(f"n_out must be nonnegative, got {self.n_out}.")
        if not self.sigma >= 0:
            raise InvalidProblemError(f"sigma must be nonnegative, got {self.sigma}.")
        if not self.scale > 0:
            raise InvalidProblemError(f"scale must be positive, got {self.scale}.")
        object.__setattr__(self, 'n_in', int(self.n_in))
        object.__setattr__(self, 'n_out', int(self.n_out))
        object.__setattr__(self, 'sigma', float(self.sigma))
        object.__setattr__(self, 'scale', float(self.scale))


@dataclass(frozen=True)
class GroundTruth:
    """
    Attributes:
    - targets (tuple): 0-based scene index of each inlier, in template order.
    """

    targets: tuple

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        if len(set(targets)) != len(targets):
            raise InvalidProblemError("Ground truth must be injective.")
        if any(t < 0 for t in targets):
            raise InvalidProblemError("Ground truth indices must be nonnegative.")
        object.__setattr__(self, 'targets', targets)

    def __len__(self):
        return len(self.targets)

    def one_based(self):
        return [t + 1 for t in self.targets]


@dataclass
class SyntheticInstance:
    template: np.ndarray
    scene: np.ndarray
    ground_truth: GroundTruth


def gen_instance(point, seed):
    """
    Draws one instance of the protocol.

    The draws happen in a fixed order (inliers, noise, outliers, shuffle) and
    noise is always drawn, so instances that differ only in sigma or scale
    share every underlying random number.

    Args:
    - point (GridPoint): Protocol setting.
    - seed (int): Seed of the instance generator.

    Returns:
    - SyntheticInstance: Template, scene and ground truth.
    """
    rng = np.random.default_rng(seed)
    template = rng.standard_normal((point.n_in, 2))
    noise = point.sigma * rng.standard_normal((point.n_in, 2))
    outliers = rng.standard_normal((point.n_out, 2))
    scene = np.vstack([template + noise, outliers]) * point.scale

    order = rng.permutation(point.n_in + point.n_out)
    position = np.argsort(order)
    return SyntheticInstance(template, scene[order], GroundTruth(tuple(position[:point.n_in].tolist())))


def accuracy(assignment, ground_truth):
    """
    Fraction of inliers matched to their true scene point.

    Args:
    - assignment (AssignmentVector): Template-to-scene assignment.
    - ground_truth (GroundTruth): True scene index of each inlier.

    Returns:
    - float: Correct matches divided by the number of inliers.

    Raises:
    - DimensionMismatchError: If the ground truth does not fit the assignment's shape.
    """
    n1, n2 = assignment.shape.n1, assignment.shape.n2
    if len(ground_truth) == 0 or len(ground_truth) > n1 or max(ground_truth.targets) >= n2:
        raise DimensionMismatchError(
            f"Ground truth for {len(ground_truth)} inliers does not fit a {n1}x{n2} assignment."
        )
    correct = sum(1 for row, target in enumerate(ground_truth.targets) if assignment.row_map[row] == target)
    return correct / len(ground_truth)
