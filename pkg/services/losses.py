"""Training objectives comparing ground-truth outputs with model predictions.

Every loss takes truth and predictions indexed identically (prediction i is
made at input x_i) and returns a LossReport whose ``value`` is a torch scalar
that can be differentiated w.r.t. the predictions. Local kinds average a
statistic over the δ-neighborhoods of a NeighborhoodIndex with weight 1/N per
anchor; global kinds take it over the full set.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from core.errors import InputError
from core.models import LossFamily, LossKind, Locality, NeighborhoodIndex

from .autodiff import DTYPE
from .neighborhoods import group_anchors
from .transport import solve_coupling

logger = logging.getLogger(__name__)

# Gaussian kernel ladder: bandwidths beta * 2^(k - 2), k = 0..4
KERNEL_MULTIPLIER = 2.0
KERNEL_COUNT = 5


class NeighborhoodCoupling:
    """Optimal pairing inside one neighborhood, shared by the anchors that own it."""

    def __init__(self, members: np.ndarray, anchors: np.ndarray, assignment: np.ndarray):
        self.members = members
        self.anchors = anchors
        self.assignment = assignment


class LossReport:
    """Value of a loss plus the pieces it was assembled from."""

    def __init__(
        self,
        value: torch.Tensor,
        contributions: Optional[np.ndarray] = None,
        couplings: Optional[list[NeighborhoodCoupling]] = None,
        clamped: int = 0,
    ):
        self.value = value
        self.contributions = contributions
        self.couplings = couplings
        self.clamped = clamped

    @property
    def item(self) -> float:
        return float(self.value.detach())


def _tensors(truth, preds) -> tuple[torch.Tensor, torch.Tensor]:
    truth = torch.as_tensor(truth, dtype=DTYPE)
    preds = torch.as_tensor(preds, dtype=DTYPE)
    if truth.ndim == 1:
        truth = truth.unsqueeze(-1)
    if preds.ndim == 1:
        preds = preds.unsqueeze(-1)
    if truth.shape != preds.shape:
        raise InputError(
            f"truth and predictions differ in shape: {tuple(truth.shape)} vs {tuple(preds.shape)}"
        )
    return truth.detach(), preds


def _check_index(index: NeighborhoodIndex, size: int) -> None:
    if index.size != size:
        raise InputError(f"index was built over {index.size} samples, got {size}")


def _w2_from_couplings(
    truth: torch.Tensor,
    preds: torch.Tensor,
    couplings: Sequence[NeighborhoodCoupling],
    anchor_count: int,
) -> tuple[torch.Tensor, np.ndarray]:
    """Sum of squared distances along fixed couplings, weighted per anchor."""
    truth_ids, pred_ids, weights = [], [], []
    contributions = np.zeros(anchor_count)
    for coupling in couplings:
        count = coupling.members.size
        truth_ids.append(coupling.members)
        pred_ids.append(coupling.members[coupling.assignment])
        weights.append(np.full(count, coupling.anchors.size / (anchor_count * count)))

    truth_idx = torch.from_numpy(np.concatenate(truth_ids))
    pred_idx = torch.from_numpy(np.concatenate(pred_ids))
    weight = torch.from_numpy(np.concatenate(weights))
    squared = ((truth[truth_idx] - preds[pred_idx]) ** 2).sum(dim=-1)
    value = (weight * squared).sum()

    detached = squared.detach().numpy()
    start = 0
    for coupling in couplings:
        stop = start + coupling.members.size
        contributions[coupling.anchors] = detached[start:stop].mean()
        start = stop
    return value, contributions


def local_w2_loss(
    truth,
    preds,
    index: NeighborhoodIndex,
    couplings: Optional[Sequence[NeighborhoodCoupling]] = None,
) -> LossReport:
    """
    Local squared W2 loss: the mean over anchors of the squared W2 distance
    between truth and predictions restricted to each anchor's neighborhood.

    Args:
        truth: (N, d) ground-truth outputs
        preds: (N, d) predictions at the same inputs
        index: Neighborhoods over those inputs
        couplings: Frozen couplings from an earlier report; recomputed when None

    Returns:
        LossReport with per-anchor contributions and the couplings used
    """
    truth, preds = _tensors(truth, preds)
    _check_index(index, truth.shape[0])
    if couplings is None:
        detached = preds.detach().numpy()
        target = truth.numpy()
        couplings = [
            NeighborhoodCoupling(members, anchors, solve_coupling(target[members], detached[members]))
            for members, anchors in group_anchors(index)
        ]
    value, contributions = _w2_from_couplings(truth, preds, couplings, len(index.anchors))
    return LossReport(value, contributions=contributions, couplings=list(couplings))


def global_w2_loss(
    truth, preds, couplings: Optional[Sequence[NeighborhoodCoupling]] = None
) -> LossReport:
    """Squared W2 between the full truth and prediction clouds, ignoring inputs."""
    truth, preds = _tensors(truth, preds)
    members = np.arange(truth.shape[0])
    if couplings is None:
        assignment = solve_coupling(truth.numpy(), preds.detach().numpy())
        couplings = [NeighborhoodCoupling(members, np.zeros(1, dtype=np.int64), assignment)]
    value, _ = _w2_from_couplings(truth, preds, couplings, 1)
    return LossReport(value, couplings=list(couplings))


def _mse(truth: torch.Tensor, preds: torch.Tensor) -> torch.Tensor:
    return ((truth - preds) ** 2).sum(dim=-1).mean()


def _mean2var(truth: torch.Tensor, preds: torch.Tensor) -> torch.Tensor:
    # Var is the summed (not averaged) squared deviation from the mean
    var_truth = ((truth - truth.mean(dim=0)) ** 2).sum()
    var_preds = ((preds - preds.mean(dim=0)) ** 2).sum()
    return _mse(truth, preds) + (var_truth - var_preds).abs()


def _mmd(truth: torch.Tensor, preds: torch.Tensor) -> torch.Tensor:
    """Biased MMD with a five-kernel Gaussian ladder around the mean pairwise distance."""
    count = truth.shape[0]
    pooled = torch.cat([truth, preds], dim=0)
    sq = (pooled**2).sum(dim=-1)
    d2 = (sq[:, None] + sq[None, :] - 2.0 * pooled @ pooled.T).clamp_min(0.0)
    pairs = pooled.shape[0] * (pooled.shape[0] - 1)
    beta = (d2.sum() / pairs).clamp_min(1e-12)
    kernel = sum(
        torch.exp(-d2 / (beta * KERNEL_MULTIPLIER ** (k - KERNEL_COUNT // 2)))
        for k in range(KERNEL_COUNT)
    )
    k_tt = kernel[:count, :count].mean()
    k_pp = kernel[count:, count:].mean()
    k_tp = kernel[:count, count:].mean()
    return k_tt - 2.0 * k_tp + k_pp


STATISTICS: dict[LossFamily, Callable[[torch.Tensor, torch.Tensor], torch.Tensor]] = {
    LossFamily.MSE: _mse,
    LossFamily.MEAN2VAR: _mean2var,
    LossFamily.MMD: _mmd,
}


def _clamp(value: torch.Tensor) -> tuple[torch.Tensor, int]:
    if float(value.detach()) < 0.0:
        return value.clamp_min(0.0), 1
    return value, 0


def baseline_loss(
    kind: LossKind, truth, preds, index: Optional[NeighborhoodIndex] = None
) -> LossReport:
    """
    MMD, MSE or mean^2+var loss, over neighborhoods or over the full set.

    Args:
        kind: Family in {mmd, mse, mean2var} and its locality
        truth: (N, d) ground-truth outputs
        preds: (N, d) predictions at the same inputs
        index: Neighborhoods, required for local kinds

    Returns:
        LossReport; MMD values that dip below zero by rounding are clamped
        and counted in ``clamped``
    """
    if kind.family not in STATISTICS:
        raise InputError(f"{kind.label} is not a baseline loss")
    statistic = STATISTICS[kind.family]
    truth, preds = _tensors(truth, preds)

    if kind.locality == Locality.GLOBAL:
        value = statistic(truth, preds)
        clamped = 0
        if kind.family == LossFamily.MMD:
            value, clamped = _clamp(value)
        return LossReport(value, clamped=clamped)

    if index is None:
        raise InputError(f"{kind.label} needs a neighborhood index")
    _check_index(index, truth.shape[0])

    anchor_count = len(index.anchors)
    contributions = np.zeros(anchor_count)
    terms = []
    clamped = 0
    for members, anchors in group_anchors(index):
        ids = torch.from_numpy(members)
        term = statistic(truth[ids], preds[ids])
        if kind.family == LossFamily.MMD:
            term, was_clamped = _clamp(term)
            clamped += was_clamped * anchors.size
        contributions[anchors] = float(term.detach())
        terms.append(term * (anchors.size / anchor_count))

    if clamped:
        logger.debug(f"{kind.label}: clamped {clamped} slightly negative anchor terms")
    return LossReport(torch.stack(terms).sum(), contributions=contributions, clamped=clamped)


def evaluate_loss(
    kind: LossKind,
    truth,
    preds,
    index: Optional[NeighborhoodIndex] = None,
    couplings: Optional[Sequence[NeighborhoodCoupling]] = None,
) -> LossReport:
    """Dispatch on the loss kind."""
    if kind.family == LossFamily.W2:
        if kind.locality == Locality.LOCAL:
            if index is None:
                raise InputError("local-w2 needs a neighborhood index")
            return local_w2_loss(truth, preds, index, couplings)
        return global_w2_loss(truth, preds, couplings)
    return baseline_loss(kind, truth, preds, index)
