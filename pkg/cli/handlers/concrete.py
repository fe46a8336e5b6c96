"""Tabular reconstruction: six mixture inputs, compressive strength output."""

import logging
from typing import TYPE_CHECKING

from core.errors import InputError
from core.models import (
    ConcreteConfig,
    ExperimentOutcome,
    InputNorm,
    NormKind,
    SeedResult,
)
from services.datasets import (
    CONCRETE_INPUTS,
    CONCRETE_OUTPUT,
    RandomStreams,
    load_csv,
    split_and_standardize,
)
from services.metrics import compare_moments, conditional_moments
from services.neighborhoods import build_index, fit_hetero_norm
from services.optim import train
from services.stochastic_models import MlpSpec, StochasticMlp

from ..report import summarize_seeds
from .nn_recon import DETERMINISTIC_LOSS

if TYPE_CHECKING:
    from cli.app import ExperimentApp

logger = logging.getLogger(__name__)


def concrete_seed(config: ConcreteConfig, seed: int) -> SeedResult:
    """
    Train on the leading rows and compare conditional moments on the rest.

    Truth and prediction moments are taken inside the same δ0-balls of the
    test inputs, so both sides keep the same anchors.
    """
    streams = RandomStreams(seed)
    data = load_csv(config.data, CONCRETE_INPUTS, CONCRETE_OUTPUT)
    train_set, test_set, _ = split_and_standardize(data, config.train_fraction)

    if config.norm == NormKind.HETEROGENEOUS:
        norm = fit_hetero_norm(train_set.inputs, train_set.outputs)
    else:
        norm = InputNorm()
    index = build_index(train_set.inputs, norm, config.delta)
    spec = MlpSpec.build(len(CONCRETE_INPUTS), 1, config.width, config.depth, resnet=config.resnet)
    model = StochasticMlp(spec)
    result = train(model, train_set, index, config.train_config(seed), generator=streams.train)

    test_index = build_index(test_set.inputs, norm, config.delta0)
    truth = conditional_moments(test_set.outputs, test_index, config.min_count)
    evaluation = streams.torch_stream(streams.evaluation)
    preds = model.sample_outputs(result.params, test_set.inputs, evaluation)
    pred = conditional_moments(preds, test_index, config.min_count)
    errors = compare_moments(truth, pred)

    metrics = {
        "mean_error": errors.mean_error,
        "sd_error": errors.sd_error,
        "anchors": float(truth.anchors.size),
        "excluded_anchors": float(truth.excluded.size),
        "initial_loss": result.trace[0] if result.trace else None,
        "final_loss": result.final_loss,
    }
    if config.deterministic:
        plain = StochasticMlp(spec.model_copy(update={"stochastic": False}))
        plain_config = config.train_config(seed, loss=DETERMINISTIC_LOSS)
        baseline = train(plain, train_set, index, plain_config, generator=streams.train)
        det = conditional_moments(
            plain.sample_outputs(baseline.params, test_set.inputs, evaluation), test_index, config.min_count
        )
        det_errors = compare_moments(truth, det)
        metrics["det_mean_error"] = det_errors.mean_error
        metrics["det_sd_error"] = det_errors.sd_error

    logger.info(f"concrete seed {seed}: mean_error={errors.mean_error:.4f} sd_error={errors.sd_error:.4f}")
    return SeedResult(
        seed=seed,
        metrics=metrics,
        curves={
            "anchors": {
                "anchor": truth.anchors.tolist(),
                "count": truth.counts.tolist(),
                "truth_mean": truth.means.tolist(),
                "truth_sd": truth.sds.tolist(),
                "pred_mean": pred.means.tolist(),
                "pred_sd": pred.sds.tolist(),
            }
        },
        checkpoint=result.params.entries(),
        loss_trace=result.trace,
    )


def run_concrete(app: "ExperimentApp", config: ConcreteConfig) -> ExperimentOutcome:
    if config.data is None:
        raise InputError("concrete needs --data <csv path>")
    path = app.settings.resolve_data_path(config.data)
    if not path.is_file():
        raise InputError(f"dataset file not found: {path}")
    config = config.model_copy(update={"data": path})

    results = app.map_seeds(concrete_seed, config)
    traces = {}
    for result in results:
        traces.update(app.record(result))
    return ExperimentOutcome(
        metrics=summarize_seeds(results),
        traces=traces,
        notes=[
            f"inputs standardized with training statistics; first {config.train_fraction:.4g} of rows train",
            f"conditional moments over delta0={config.delta0} balls with at least {config.min_count} members",
        ],
    )


def setup_concrete_handler(app: "ExperimentApp") -> dict:
    """Register the concrete experiment."""
    return {"concrete": (ConcreteConfig, run_concrete)}
