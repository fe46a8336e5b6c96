"""Evaluation metrics: relative moment errors, parameter recovery, conditional
moments inside δ0-balls and the estimator error bound."""

import logging
import math
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from core.errors import InputError
from core.models import (
    AnchorMoments,
    BoundInputs,
    InputNorm,
    MomentErrorReport,
    NeighborhoodIndex,
    SampleSet,
)

from .neighborhoods import scale_inputs
from .stochastic_models import LinearGaussianParams

logger = logging.getLogger(__name__)

# Evaluates a map at paired inputs (x_a, x_b), one shared latent draw per row
PairedMap = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _relative(numerator: float, denominator: float, label: str) -> float:
    if denominator == 0.0:
        raise InputError(f"relative {label} error is undefined: zero denominator")
    return float(numerator / denominator)


def mean_sd_error(
    truth_means: ArrayLike,
    truth_sds: ArrayLike,
    pred_means: ArrayLike,
    pred_sds: ArrayLike,
) -> MomentErrorReport:
    """
    Relative errors in the mean and in the standard deviation.

    Args:
        truth_means: E[y] per anchor
        truth_sds: SD[y] per anchor
        pred_means: E[y_hat] per anchor, aligned with truth
        pred_sds: SD[y_hat] per anchor

    Returns:
        MomentErrorReport with sum|E[y] - E[y_hat]| / sum|E[y]| and the SD analogue
    """
    tm, ts, pm, ps = (
        np.asarray(a, dtype=np.float64).reshape(-1)
        for a in (truth_means, truth_sds, pred_means, pred_sds)
    )
    if not (tm.shape == ts.shape == pm.shape == ps.shape):
        raise InputError("truth and prediction moments are not aligned")

    return MomentErrorReport(
        mean_error=_relative(np.abs(tm - pm).sum(), np.abs(tm).sum(), "mean"),
        sd_error=_relative(np.abs(ts - ps).sum(), np.abs(ts).sum(), "SD"),
        truth_means=tm.tolist(),
        pred_means=pm.tolist(),
        truth_sds=ts.tolist(),
        pred_sds=ps.tolist(),
    )


def compare_moments(truth: AnchorMoments, pred: AnchorMoments) -> MomentErrorReport:
    """mean_sd_error over the anchors both sides kept."""
    if not np.array_equal(truth.anchors, pred.anchors):
        raise InputError("truth and prediction moments were taken at different anchors")
    return mean_sd_error(truth.means, truth.sds, pred.means, pred.sds)


def param_error(truth: LinearGaussianParams, est: LinearGaussianParams) -> tuple[float, float]:
    """
    Average relative errors of the linear-Gaussian coefficients.

    Returns:
        (sum|b - b_hat| / sum|b|, sum||sigma| - |sigma_hat|| / sum|sigma|)
    """
    if truth.spec.input_dim != est.spec.input_dim:
        raise InputError(
            f"parameter dimensions differ: {truth.spec.input_dim} vs {est.spec.input_dim}"
        )
    b, b_hat = truth.means.detach().numpy(), est.means.detach().numpy()
    s, s_hat = np.abs(truth.spreads.detach().numpy()), np.abs(est.spreads.detach().numpy())
    error_b = _relative(np.abs(b - b_hat).sum(), np.abs(b).sum(), "coefficient")
    error_sigma = _relative(np.abs(s - s_hat).sum(), s.sum(), "spread")
    return error_b, error_sigma


def sample_moments(draws: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population SD along the last axis of a (P, R) array of draws."""
    values = np.asarray(draws, dtype=np.float64)
    return values.mean(axis=-1), values.std(axis=-1)


def conditional_moments(outputs: ArrayLike, index: NeighborhoodIndex, min_count: int = 5) -> AnchorMoments:
    """
    Empirical mean and SD of scalar outputs inside every anchor's δ0-ball.

    Args:
        outputs: (N,) or (N, 1) outputs over the indexed samples
        index: Neighborhoods with radius δ0
        min_count: Anchors with fewer members are excluded

    Returns:
        AnchorMoments for the qualifying anchors; ``excluded`` lists the rest
    """
    if min_count < 1:
        raise InputError(f"min_count must be >= 1, got {min_count}")
    values = np.asarray(outputs, dtype=np.float64)
    if values.ndim == 2 and values.shape[1] == 1:
        values = values[:, 0]
    if values.ndim != 1:
        raise InputError(f"conditional moments need scalar outputs, got shape {values.shape}")
    if values.shape[0] != index.size:
        raise InputError(f"index was built over {index.size} samples, got {values.shape[0]}")

    counts = index.counts
    keep = counts >= min_count
    if not keep.any():
        raise InputError(f"no anchor has at least {min_count} neighbors within delta={index.delta}")
    if not keep.all():
        excluded = int((~keep).sum())
        logger.info(f"Excluded {excluded} of {keep.size} anchors with fewer than {min_count} neighbors")

    kept = np.flatnonzero(keep)
    means = np.array([values[index.members[i]].mean() for i in kept])
    sds = np.array([values[index.members[i]].std() for i in kept])
    return AnchorMoments(
        anchors=index.anchors[kept],
        means=means,
        sds=sds,
        counts=counts[kept],
        excluded=index.anchors[~keep],
    )


def rate_factor(count: float, dim: int) -> float:
    """h(N, d) = 2 N^(-1/4) log(1 + N)^(1/2) for d <= 4, else 2 N^(-1/d)."""
    if dim <= 4:
        return 2.0 * count ** (-0.25) * math.sqrt(math.log1p(count))
    return 2.0 * count ** (-1.0 / dim)


def theorem1_bound(inputs: BoundInputs) -> float:
    """
    Upper bound on the expected gap between the local W2 loss and its target.

    Returns:
        4M / sqrt(N) + 8 C M mean_x h(N(x, δ), n) + 8 sqrt(M) L δ
    """
    mean_h = float(np.mean([rate_factor(c, inputs.n) for c in inputs.counts]))
    sample_term = 4.0 * inputs.M / math.sqrt(inputs.N)
    local_term = 8.0 * inputs.C * inputs.M * mean_h
    smoothing_term = 8.0 * math.sqrt(inputs.M) * inputs.L * inputs.delta
    return sample_term + local_term + smoothing_term


def estimate_lipschitz(
    fn: PairedMap,
    inputs: ArrayLike,
    norm: InputNorm,
    rng: np.random.Generator,
    pairs: int = 1000,
) -> float:
    """
    Largest finite-difference slope |f(x_a) - f(x_b)| / |x_a - x_b|_x over
    random pairs of observed inputs, with the latent draw shared within a pair.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] < 2:
        raise InputError("at least two inputs are needed to estimate a slope")

    first = rng.integers(0, x.shape[0], size=pairs)
    second = rng.integers(0, x.shape[0], size=pairs)
    distance = np.linalg.norm(scale_inputs(x[first] - x[second], norm), axis=-1)
    usable = distance > 0
    if not usable.any():
        raise InputError("all sampled input pairs coincide")

    kept = int(usable.sum())
    y_a, y_b = fn(x[first[usable]], x[second[usable]])
    gap = np.linalg.norm(
        np.asarray(y_a).reshape(kept, -1) - np.asarray(y_b).reshape(kept, -1), axis=-1
    )
    slope = float(np.max(gap / distance[usable]))
    logger.debug(f"Estimated Lipschitz constant {slope:.4g} from {kept} pairs")
    return slope


def estimate_bound_inputs(
    data: SampleSet,
    preds: ArrayLike,
    index: NeighborhoodIndex,
    lipschitz: float,
    C: float = 1.0,
) -> BoundInputs:
    """Fill BoundInputs from observed data: M is the largest squared output norm on either side."""
    y_hat = np.asarray(preds, dtype=np.float64).reshape(len(data), -1)
    M = max(
        float(np.max(np.sum(data.outputs**2, axis=1))),
        float(np.max(np.sum(y_hat**2, axis=1))),
    )
    return BoundInputs(
        M=M,
        L=lipschitz,
        C=C,
        N=len(data),
        delta=index.delta,
        counts=index.counts.tolist(),
        n=data.input_dim,
    )
