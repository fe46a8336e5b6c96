"""Loss comparison on the nonlinear exponential model."""

import logging
from typing import TYPE_CHECKING

from core.models import BenchLossConfig, ExperimentOutcome, NnReconConfig

from .nn_recon import nn_recon_seed
from .sweeps import point_config, run_points

if TYPE_CHECKING:
    from cli.app import ExperimentApp

logger = logging.getLogger(__name__)


def run_bench_loss(app: "ExperimentApp", config: BenchLossConfig) -> ExperimentOutcome:
    """Train the same network once per loss kind, with identical data and seeds."""
    points = [(label, point_config(config, NnReconConfig, loss=label)) for label in config.values]
    summaries, traces = run_points(app, "bench-loss", nn_recon_seed, points, ["mean_error", "sd_error"])

    ranking = sorted(
        (s for s in summaries if s["median"].get("sd_error") is not None),
        key=lambda s: s["median"]["sd_error"],
    )
    if ranking:
        logger.info(f"bench-loss: lowest median sd_error with {ranking[0]['value']}")
    return ExperimentOutcome(
        metrics={"points": summaries, "ranking_by_sd_error": [s["value"] for s in ranking]},
        traces=traces,
    )


def setup_bench_loss_handler(app: "ExperimentApp") -> dict:
    """Register the bench-loss experiment."""
    return {"bench-loss": (BenchLossConfig, run_bench_loss)}
