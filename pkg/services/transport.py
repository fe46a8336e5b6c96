"""Exact squared W2 distance between equal-size uniform empirical distributions."""

import itertools
import logging
from typing import Union

import numpy as np
from numpy.typing import ArrayLike
from pydantic import ValidationError
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from core.errors import InputError
from core.models import CouplingPlan, PointCloud

logger = logging.getLogger(__name__)

CloudLike = Union[PointCloud, ArrayLike]

# N! permutations are enumerated by the brute-force oracle
MAX_BRUTEFORCE_SIZE = 8


def _points(cloud: CloudLike) -> np.ndarray:
    """Validated (N, d) coordinates of a cloud."""
    if isinstance(cloud, PointCloud):
        return cloud.points
    try:
        return PointCloud(points=cloud).points
    except ValidationError as exc:
        raise InputError(f"invalid point cloud: {exc.errors()[0]['msg']}") from exc


def _paired(a: CloudLike, b: CloudLike) -> tuple[np.ndarray, np.ndarray]:
    first, second = _points(a), _points(b)
    if first.shape[0] != second.shape[0]:
        raise InputError(
            f"clouds must have equal size, got {first.shape[0]} and {second.shape[0]}"
        )
    if first.shape[1] != second.shape[1]:
        raise InputError(
            f"clouds must share a dimension, got {first.shape[1]} and {second.shape[1]}"
        )
    return first, second


def squared_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """C[i, j] = ||a_i - b_j||^2."""
    return cdist(a, b, metric="sqeuclidean")


def w2sq_1d_sorted(a: CloudLike, b: CloudLike) -> float:
    """Squared W2 between two 1D clouds via order statistics.

    Args:
        a: First cloud, d = 1
        b: Second cloud, d = 1, same size as ``a``

    Returns:
        (1/N) * sum over i of (a_(i) - b_(i))^2
    """
    first, second = _paired(a, b)
    if first.shape[1] != 1:
        raise InputError(f"sorted W2 needs d = 1, got d = {first.shape[1]}")
    diff = np.sort(first[:, 0]) - np.sort(second[:, 0])
    return float(np.mean(diff * diff))


def w2sq_assignment(a: CloudLike, b: CloudLike) -> CouplingPlan:
    """Squared W2 and an optimal permutation via linear assignment.

    Uniform weights on equal-size clouds reduce the earth mover problem to a
    linear assignment, solved exactly by a shortest-augmenting-path method.

    Args:
        a: First cloud
        b: Second cloud of the same size and dimension

    Returns:
        CouplingPlan whose ``assignment[i]`` is the partner of ``a[i]`` in ``b``
    """
    first, second = _paired(a, b)
    cost = squared_cost_matrix(first, second)
    rows, cols = linear_sum_assignment(cost)
    return CouplingPlan(assignment=cols[np.argsort(rows)], cost=float(cost[rows, cols].mean()))


def w2sq_bruteforce(a: CloudLike, b: CloudLike) -> float:
    """Exact squared W2 by enumerating every permutation (N <= 8)."""
    first, second = _paired(a, b)
    size = first.shape[0]
    if size > MAX_BRUTEFORCE_SIZE:
        raise InputError(
            f"brute force is limited to {MAX_BRUTEFORCE_SIZE} points, got {size}"
        )
    cost = squared_cost_matrix(first, second)
    rows = np.arange(size)
    best = min(cost[rows, list(perm)].sum() for perm in itertools.permutations(range(size)))
    return float(best / size)


def solve_coupling(truth: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Optimal permutation for raw (N, d) arrays, skipping validation.

    Used on hot paths where the clouds come from already validated data.
    For d = 1 the monotone (sorted) pairing is optimal and much cheaper.
    """
    if truth.shape[1] == 1:
        assignment = np.empty(truth.shape[0], dtype=np.int64)
        assignment[np.argsort(truth[:, 0], kind="stable")] = np.argsort(
            preds[:, 0], kind="stable"
        )
        return assignment
    rows, cols = linear_sum_assignment(squared_cost_matrix(truth, preds))
    return cols[np.argsort(rows)]
