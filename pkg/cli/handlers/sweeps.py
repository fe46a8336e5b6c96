"""Parameter sweeps: neighborhood size, sample size, architecture and data spread."""

import logging
from typing import TYPE_CHECKING, Any, Callable, Sequence

import numpy as np

from core.models import (
    Architecture,
    ArchSweepConfig,
    DeltaSweepConfig,
    ExperimentConfig,
    ExperimentOutcome,
    LinregConfig,
    NnReconConfig,
    SizeSweepConfig,
    SpreadSweepConfig,
)

from ..report import summarize_seeds
from .linreg import linreg_seed
from .nn_recon import nn_recon_seed

if TYPE_CHECKING:
    from cli.app import ExperimentApp, SeedRunner

logger = logging.getLogger(__name__)

SWEEP_FIELDS = {"values", "half_widths"}


def point_config(
    config: ExperimentConfig, target: type[ExperimentConfig], **update: Any
) -> ExperimentConfig:
    """The single-run config of one sweep point."""
    values = config.model_dump(exclude=SWEEP_FIELDS)
    values.update(update)
    return target.model_validate(values)


def run_points(
    app: "ExperimentApp",
    name: str,
    runner: "SeedRunner",
    points: Sequence[tuple[Any, ExperimentConfig]],
    columns: Sequence[str],
) -> tuple[list[dict[str, Any]], dict[str, str]]:
    """
    Run every sweep point over all seeds and write the sweep curve.

    Args:
        app: Running application
        name: Sweep name, used for the curve file and side-file prefixes
        runner: Per-seed function
        points: (label, config) per sweep point
        columns: Metrics whose medians form the curve

    Returns:
        (per-point summaries, trace paths)
    """
    summaries = []
    traces = {}
    for label, point in points:
        logger.info(f"{name}: point {label}")
        results = app.map_seeds(runner, point)
        for result in results:
            traces.update(app.record(result, prefix=f"{name}-{label}-"))
        summaries.append({"value": label, **summarize_seeds(results)})

    curve: dict[str, list] = {"value": [s["value"] for s in summaries]}
    for column in columns:
        medians = [s["median"].get(column) for s in summaries]
        curve[column] = [np.nan if m is None else m for m in medians]
    traces[name] = app.storage.write_curve(name, curve)
    return summaries, traces


def run_sweep_delta(app: "ExperimentApp", config: DeltaSweepConfig) -> ExperimentOutcome:
    points = [(delta, point_config(config, LinregConfig, delta=delta)) for delta in config.values]
    summaries, traces = run_points(app, "sweep-delta", linreg_seed, points, ["error_b", "error_sigma"])
    return ExperimentOutcome(metrics={"points": summaries}, traces=traces)


def run_sweep_n(app: "ExperimentApp", config: SizeSweepConfig) -> ExperimentOutcome:
    points = [(n, point_config(config, LinregConfig, n=n)) for n in config.values]
    summaries, traces = run_points(app, "sweep-n", linreg_seed, points, ["error_b", "error_sigma"])
    return ExperimentOutcome(metrics={"points": summaries}, traces=traces)


def run_sweep_arch(app: "ExperimentApp", config: ArchSweepConfig) -> ExperimentOutcome:
    points = []
    for label in config.values:
        arch = Architecture.parse(label)
        shape = dict(width=arch.width, depth=arch.depth, resnet=arch.resnet)
        points.append((label, point_config(config, NnReconConfig, **shape)))
    summaries, traces = run_points(app, "sweep-arch", nn_recon_seed, points, ["mean_error", "sd_error"])
    return ExperimentOutcome(
        metrics={"points": summaries},
        traces=traces,
        notes=["architecture label <width>x<depth>-<resnet|ff>"],
    )


def run_sweep_spread(app: "ExperimentApp", config: SpreadSweepConfig) -> ExperimentOutcome:
    """Latent SD sweep, then a training-input width sweep with unit latent SD."""
    by_sd = [(sd, point_config(config, NnReconConfig, latent_sd=sd)) for sd in config.values]
    by_width = [
        (a, point_config(config, NnReconConfig, latent_sd=1.0, x_half_width=a)) for a in config.half_widths
    ]
    metrics: dict[str, Any] = {}
    traces: dict[str, str] = {}
    for name, points in (("sweep-latent-sd", by_sd), ("sweep-input-width", by_width)):
        if not points:
            continue
        summaries, point_traces = run_points(app, name, nn_recon_seed, points, ["mean_error", "sd_error"])
        metrics[name] = summaries
        traces.update(point_traces)
    return ExperimentOutcome(
        metrics=metrics,
        traces=traces,
        notes=["test grid stays x = -0.5 + 0.1 i for every input width"],
    )


def setup_sweep_handlers(app: "ExperimentApp") -> dict[str, tuple[type, Callable]]:
    """Register the sweep experiments."""
    return {
        "sweep-delta": (DeltaSweepConfig, run_sweep_delta),
        "sweep-n": (SizeSweepConfig, run_sweep_n),
        "sweep-arch": (ArchSweepConfig, run_sweep_arch),
        "sweep-spread": (SpreadSweepConfig, run_sweep_spread),
    }
