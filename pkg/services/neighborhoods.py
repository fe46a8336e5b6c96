"""Input norms and δ-ball neighborhoods of the training inputs."""

import logging
import warnings
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg
from scipy.spatial.distance import cdist

from core.errors import InputError
from core.models import InputNorm, NeighborhoodIndex, NormKind

logger = logging.getLogger(__name__)

# Ridge added to the normal equations when the Cholesky solve fails or is ill-conditioned
RIDGE = 1e-10

# Anchors processed per distance block
ANCHOR_BLOCK = 512


def fit_hetero_norm(inputs: ArrayLike, outputs: ArrayLike) -> InputNorm:
    """
    Fit the heterogeneous norm weights by ordinary least squares.

    Regresses y on x with an intercept; the slopes become the weights c_i
    and the intercept is discarded.

    Args:
        inputs: (N, n) inputs
        outputs: (N,) scalar outputs

    Returns:
        Heterogeneous InputNorm with c = OLS slopes
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(outputs, dtype=np.float64).reshape(-1)
    samples, dim = x.shape
    if samples != y.shape[0]:
        raise InputError(f"{samples} inputs but {y.shape[0]} outputs")
    if samples < dim + 2:
        raise InputError(f"OLS needs at least {dim + 2} samples, got {samples}")

    design = np.hstack([np.ones((samples, 1)), x])
    rank = np.linalg.matrix_rank(design)
    if rank < dim + 1:
        raise InputError(f"design matrix is rank deficient (rank {rank} < {dim + 1})")

    gram = design.T @ design
    rhs = design.T @ y
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            coef = linalg.solve(gram, rhs, assume_a="pos")
    except (linalg.LinAlgError, linalg.LinAlgWarning):
        logger.warning("Normal equations are near-singular; retrying with a ridge")
        coef = linalg.solve(gram + RIDGE * np.eye(dim + 1), rhs, assume_a="pos")

    if not np.all(np.isfinite(coef)):
        raise InputError("OLS produced non-finite coefficients")

    logger.debug(f"Heterogeneous norm weights: {coef[1:]}")
    return InputNorm(kind=NormKind.HETEROGENEOUS, weights=tuple(float(c) for c in coef[1:]))


def scale_inputs(x: np.ndarray, norm: InputNorm) -> np.ndarray:
    """Coordinates under which the norm becomes the plain l2 norm."""
    if norm.kind == NormKind.HOMOGENEOUS:
        return x
    weights = np.asarray(norm.weights, dtype=np.float64)
    if x.shape[-1] != weights.shape[0]:
        raise InputError(
            f"input has dimension {x.shape[-1]}, norm expects {weights.shape[0]}"
        )
    return x * weights


def input_norm(x: ArrayLike, norm: InputNorm) -> float:
    """|x|_x under the homogeneous or heterogeneous norm."""
    vector = np.asarray(x, dtype=np.float64).reshape(-1)
    return float(np.linalg.norm(scale_inputs(vector, norm)))


def build_index(
    inputs: ArrayLike,
    norm: InputNorm,
    delta: float,
    anchors: Optional[ArrayLike] = None,
) -> NeighborhoodIndex:
    """
    Collect, for every anchor, the samples within distance δ of it.

    Args:
        inputs: (N, n) inputs the neighborhoods are drawn from
        norm: Norm applied to x_j - x_i
        delta: Radius δ > 0 (may be infinite)
        anchors: Indices of the anchor samples (defaults to all samples)

    Returns:
        NeighborhoodIndex with members[i] = {j : |x_j - x_anchor_i|_x <= δ}
    """
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] == 0:
        raise InputError("cannot build neighborhoods over an empty input set")

    anchor_ids = (
        np.arange(x.shape[0]) if anchors is None else np.asarray(anchors, dtype=np.int64)
    )
    if anchor_ids.size == 0:
        raise InputError("at least one anchor is required")
    if anchor_ids.min() < 0 or anchor_ids.max() >= x.shape[0]:
        raise InputError("anchor index out of range")

    scaled = scale_inputs(x, norm)
    members: list[np.ndarray] = []
    for start in range(0, anchor_ids.size, ANCHOR_BLOCK):
        block = anchor_ids[start : start + ANCHOR_BLOCK]
        distances = cdist(scaled[block], scaled)
        members.extend(np.flatnonzero(row <= delta) for row in distances)

    index = NeighborhoodIndex(
        delta=delta,
        norm=norm,
        anchors=anchor_ids,
        members=tuple(members),
        size=x.shape[0],
    )
    counts = index.counts
    logger.info(
        f"Built neighborhoods: {anchor_ids.size} anchors, delta={delta}, "
        f"N(x, delta) min/median/max = {counts.min()}/{int(np.median(counts))}/{counts.max()}"
    )
    return index


def group_anchors(index: NeighborhoodIndex) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Group anchors that share an identical member list.

    Returns:
        List of (members, anchor positions) pairs, in order of first appearance
    """
    groups: dict[bytes, tuple[np.ndarray, list[int]]] = {}
    for position, members in enumerate(index.members):
        key = members.tobytes()
        if key not in groups:
            groups[key] = (members, [])
        groups[key][1].append(position)
    return [(members, np.asarray(positions)) for members, positions in groups.values()]
