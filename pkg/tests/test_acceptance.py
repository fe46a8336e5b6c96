"""Full-size runs; select with ``pytest -m slow``."""

import numpy as np
import pytest

from cli.app import ExperimentApp
from cli.handlers.linreg import linreg_seed
from cli.handlers.ode import ode_seed
from config.settings import Settings
from core.models import BenchLossConfig, DeltaSweepConfig, LinregConfig, OdeRunConfig, SizeSweepConfig

pytestmark = pytest.mark.slow

SEEDS = range(5)


@pytest.fixture
def app(tmp_path):
    return ExperimentApp(Settings(out_dir=tmp_path), out_dir=tmp_path / "run")


def per_seed(point, metric):
    return {row["seed"]: row[metric] for row in point["per_seed"]}


def seeds_where(condition, *points):
    return sum(bool(condition(*(p[seed] for p in points))) for seed in SEEDS)


def test_linreg_recovers_coefficients_over_five_seeds():
    config = LinregConfig(n=1000, delta=0.1, epochs=1000, lr=0.02, weight_decay=0.005)
    results = [linreg_seed(config, seed) for seed in SEEDS]
    assert np.median([r.metrics["error_b"] for r in results]) <= 0.05
    assert np.median([r.metrics["error_sigma"] for r in results]) <= 0.25


def test_delta_sweep_has_errors_at_both_ends(app):
    report = app.run("sweep-delta", DeltaSweepConfig(values=[0.025, 0.1, 0.4], repeats=5))
    small, middle, large = report.metrics["points"]
    assert [small["value"], middle["value"], large["value"]] == [0.025, 0.1, 0.4]

    sigma = [per_seed(point, "error_sigma") for point in (small, middle)]
    assert seeds_where(lambda narrow, mid: narrow > mid, *sigma) >= 4
    coefs = [per_seed(point, "error_b") for point in (large, middle)]
    assert seeds_where(lambda wide, mid: wide > mid, *coefs) >= 4


def test_size_sweep_shrinks_the_spread_error(app):
    report = app.run("sweep-n", SizeSweepConfig(values=[250, 4000], repeats=5))
    few, many = (per_seed(point, "error_sigma") for point in report.metrics["points"])
    assert seeds_where(lambda f, m: m <= f, few, many) >= 4


def test_local_w2_beats_mse_losses_on_spread(app):
    config = BenchLossConfig(
        values=["local-w2", "local-mse", "global-mse"],
        n=1000,
        width=50,
        depth=2,
        resnet=True,
        epochs=500,
        repeats=5,
    )
    report = app.run("bench-loss", config)
    w2, local_mse, global_mse = (per_seed(point, "sd_error") for point in report.metrics["points"])
    assert seeds_where(lambda w, lm, gm: w < lm and w < gm, w2, local_mse, global_mse) >= 4


def test_ode_errors_stay_small_at_every_time():
    results = [ode_seed(OdeRunConfig(), seed) for seed in range(3)]
    assert np.median([r.metrics["error_in_yhat"] for r in results]) < 0.15

    slices = np.median([r.curves["slices"]["y_error"] for r in results], axis=0)
    assert np.max(slices) < 0.15
