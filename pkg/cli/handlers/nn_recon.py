"""Weight-uncertain MLP reconstruction of the nonlinear exponential model."""

import logging
from typing import TYPE_CHECKING

from core.models import (
    ExperimentOutcome,
    InputNorm,
    LossFamily,
    LossKind,
    Locality,
    NnReconConfig,
    SeedResult,
)
from services.datasets import RandomStreams, draws_at, sample_ground_truth
from services.metrics import mean_sd_error, sample_moments
from services.neighborhoods import build_index
from services.optim import train
from services.stochastic_models import MlpSpec, StochasticMlp

from ..report import summarize_seeds

if TYPE_CHECKING:
    from cli.app import ExperimentApp

logger = logging.getLogger(__name__)

DETERMINISTIC_LOSS = LossKind(family=LossFamily.MSE, locality=Locality.GLOBAL)


def nn_recon_seed(config: NnReconConfig, seed: int) -> SeedResult:
    """
    Train on U(-a, a) inputs and score mean/SD recovery on the fixed test grid.

    Test moments come from ``config.test_draws`` truth draws and as many model
    draws at each grid point.
    """
    streams = RandomStreams(seed)
    truth_spec = config.truth()
    data = sample_ground_truth(truth_spec, None, streams.data, count=config.n)
    index = build_index(data.inputs, InputNorm(), config.delta)

    model = StochasticMlp(MlpSpec.build(1, 1, config.width, config.depth, resnet=config.resnet))
    result = train(model, data, index, config.train_config(seed), generator=streams.train)

    points = config.test_points
    truth_mean, truth_sd = sample_moments(draws_at(truth_spec, points, config.test_draws, streams.evaluation))
    evaluation = streams.torch_stream(streams.evaluation)
    pred_mean, pred_sd = sample_moments(model.draws_at(result.params, points, config.test_draws, evaluation))
    errors = mean_sd_error(truth_mean, truth_sd, pred_mean, pred_sd)

    metrics = {
        "mean_error": errors.mean_error,
        "sd_error": errors.sd_error,
        "initial_loss": result.trace[0] if result.trace else None,
        "final_loss": result.final_loss,
    }
    curves = {
        "test-moments": {
            "x": points.tolist(),
            "truth_mean": truth_mean.tolist(),
            "truth_sd": truth_sd.tolist(),
            "pred_mean": pred_mean.tolist(),
            "pred_sd": pred_sd.tolist(),
        }
    }

    if config.deterministic:
        plain = StochasticMlp(
            MlpSpec.build(1, 1, config.width, config.depth, resnet=config.resnet, stochastic=False)
        )
        plain_config = config.train_config(seed, loss=DETERMINISTIC_LOSS)
        baseline = train(plain, data, index, plain_config, generator=streams.train)
        det_draws = plain.draws_at(baseline.params, points, config.test_draws, evaluation)
        det_mean, det_sd = sample_moments(det_draws)
        det_errors = mean_sd_error(truth_mean, truth_sd, det_mean, det_sd)
        metrics["det_mean_error"] = det_errors.mean_error
        metrics["det_sd_error"] = det_errors.sd_error
        curves["test-moments"]["det_mean"] = det_mean.tolist()

    logger.info(
        f"nn-recon seed {seed} ({config.loss}): "
        f"mean_error={errors.mean_error:.4f} sd_error={errors.sd_error:.4f}"
    )
    return SeedResult(
        seed=seed,
        metrics=metrics,
        curves=curves,
        checkpoint=result.params.entries(),
        loss_trace=result.trace,
    )


def run_nn_recon(app: "ExperimentApp", config: NnReconConfig) -> ExperimentOutcome:
    results = app.map_seeds(nn_recon_seed, config)
    traces = {}
    for result in results:
        traces.update(app.record(result))
    notes = [f"test grid x = -0.5 + 0.1 i, i = 0..10, {config.test_draws} draws per point"]
    if config.deterministic:
        notes.append("deterministic baseline: same network without spreads, trained with global-mse")
    return ExperimentOutcome(metrics=summarize_seeds(results), traces=traces, notes=notes)


def setup_nn_recon_handler(app: "ExperimentApp") -> dict:
    """Register the nn-recon experiment."""
    return {"nn-recon": (NnReconConfig, run_nn_recon)}
