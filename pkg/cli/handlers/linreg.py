"""Linear-Gaussian recovery: three inputs, Gaussian coefficients."""

import logging
from typing import TYPE_CHECKING, Callable

import numpy as np
import torch

from core.models import (
    ExperimentOutcome,
    GroundTruthSpec,
    InputNorm,
    LinregConfig,
    NormKind,
    SeedResult,
)
from services.datasets import RandomStreams, draws_at, sample_ground_truth
from services.metrics import (
    estimate_bound_inputs,
    estimate_lipschitz,
    param_error,
    sample_moments,
    theorem1_bound,
)
from services.neighborhoods import build_index, fit_hetero_norm
from services.optim import train
from services.stochastic_models import LinearGaussianModel, LinearGaussianParams, LinearSpec

from ..report import summarize_seeds

if TYPE_CHECKING:
    from cli.app import ExperimentApp

logger = logging.getLogger(__name__)

# Probe line x = (x0, x0, x0)
PROBE_POINTS = -0.3 + 0.1 * np.arange(10, dtype=np.float64)


def _truth_pairs(spec: GroundTruthSpec, rng: np.random.Generator) -> Callable:
    means, sds = np.asarray(spec.coef_means), np.asarray(spec.coef_sds)

    def evaluate(x_a: np.ndarray, x_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        coef = means + sds * rng.standard_normal((x_a.shape[0], means.size))
        return (coef[:, 1:] * x_a).sum(axis=1) + coef[:, 0], (coef[:, 1:] * x_b).sum(axis=1) + coef[:, 0]

    return evaluate


def _model_pairs(model: LinearGaussianModel, vector, generator: torch.Generator) -> Callable:
    def evaluate(x_a: np.ndarray, x_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        noise = model.sample_noise(x_a.shape[0], generator)
        with torch.no_grad():
            y_a = model.predict(vector, torch.from_numpy(x_a), noise)
            y_b = model.predict(vector, torch.from_numpy(x_b), noise)
        return y_a.numpy(), y_b.numpy()

    return evaluate


def linreg_seed(config: LinregConfig, seed: int) -> SeedResult:
    """Sample, train and evaluate one repeat."""
    streams = RandomStreams(seed)
    truth_spec = GroundTruthSpec.linear_default()
    data = sample_ground_truth(truth_spec, None, streams.data, count=config.n)

    if config.norm == NormKind.HETEROGENEOUS:
        norm = fit_hetero_norm(data.inputs, data.outputs)
    else:
        norm = InputNorm()
    index = build_index(data.inputs, norm, config.delta)
    model = LinearGaussianModel(LinearSpec(input_dim=data.input_dim))
    result = train(model, data, index, config.train_config(seed), generator=streams.train)

    truth = LinearGaussianParams.from_values(truth_spec.coef_means, truth_spec.coef_sds)
    error_b, error_sigma = param_error(truth, LinearGaussianParams(model.spec, result.params))

    evaluation = streams.torch_stream(streams.evaluation)
    probe = np.repeat(PROBE_POINTS[:, None], data.input_dim, axis=1)
    truth_mean, truth_sd = sample_moments(draws_at(truth_spec, probe, config.probe_draws, streams.evaluation))
    pred_mean, pred_sd = sample_moments(model.draws_at(result.params, probe, config.probe_draws, evaluation))

    rng, pairs = streams.evaluation, config.lipschitz_pairs
    lipschitz = max(
        estimate_lipschitz(_truth_pairs(truth_spec, rng), data.inputs, norm, rng, pairs),
        estimate_lipschitz(_model_pairs(model, result.params, evaluation), data.inputs, norm, rng, pairs),
    )
    preds = model.sample_outputs(result.params, data.inputs, evaluation)
    bound_inputs = estimate_bound_inputs(data, preds, index, lipschitz)

    logger.info(f"linreg seed {seed}: error_b={error_b:.4f} error_sigma={error_sigma:.4f}")
    return SeedResult(
        seed=seed,
        metrics={
            "error_b": error_b,
            "error_sigma": error_sigma,
            "initial_loss": result.trace[0] if result.trace else None,
            "final_loss": result.final_loss,
            "bound": theorem1_bound(bound_inputs),
            "bound_M": bound_inputs.M,
            "bound_L": bound_inputs.L,
            "mean_neighbors": float(index.counts.mean()),
        },
        curves={
            "probe": {
                "x0": PROBE_POINTS.tolist(),
                "truth_mean": truth_mean.tolist(),
                "truth_sd": truth_sd.tolist(),
                "pred_mean": pred_mean.tolist(),
                "pred_sd": pred_sd.tolist(),
            }
        },
        checkpoint=result.params.entries(),
        loss_trace=result.trace,
    )


def run_linreg(app: "ExperimentApp", config: LinregConfig) -> ExperimentOutcome:
    results = app.map_seeds(linreg_seed, config)
    traces = {}
    for result in results:
        traces.update(app.record(result))
    return ExperimentOutcome(
        metrics=summarize_seeds(results),
        traces=traces,
        notes=[
            f"input norm: {config.norm.value}",
            "bound uses M and L estimated from samples, C = 1",
        ],
    )


def setup_linreg_handler(app: "ExperimentApp") -> dict:
    """Register the linreg experiment."""
    return {"linreg": (LinregConfig, run_linreg)}
