import json

import numpy as np
import pytest
from pydantic import ValidationError

from cli.app import ExperimentApp
from cli.parser import EXPERIMENTS, config_overrides, parse_args
from cli.report import format_checks, summarize_seeds
from config.settings import Settings
from core.errors import InputError
from core.models import CheckResult, LinregConfig, NnReconConfig, NormKind, SeedResult
from core.storage import CONFIG_FILE, read_config_file, read_report
from main import main
from services.datasets import CONCRETE_INPUTS, CONCRETE_OUTPUT


def overrides(*argv):
    args = parse_args(list(argv))
    app = ExperimentApp(Settings())
    return config_overrides(args, app.config_class(args.command))


@pytest.fixture
def app(tmp_path):
    return ExperimentApp(Settings(out_dir=tmp_path), out_dir=tmp_path / "run")


def comparable(report):
    return json.dumps(report.metrics, sort_keys=True)


# -- argument parsing ---------------------------------------------------------


@pytest.mark.parametrize("alias", ["homo", "Homogeneous", "HETE", "hetero", "heterogeneous"])
def test_norm_aliases(alias):
    assert overrides("linreg", "--norm", alias)["norm"] in ("homo", "hete")


def test_only_given_flags_override():
    assert overrides("linreg", "--n", "50", "--delta", "0.2") == {"n": 50, "delta": 0.2}
    assert overrides("ode") == {}


def test_loss_flags_combine():
    assert overrides("nn-recon", "--loss", "mmd", "--global")["loss"] == "global-mmd"
    assert overrides("nn-recon", "--global")["loss"] == "global-w2"
    assert overrides("nn-recon", "--loss", "global-mse")["loss"] == "global-mse"
    assert overrides("nn-recon", "--loss", "global-mse", "--local")["loss"] == "local-mse"
    with pytest.raises(InputError):
        overrides("nn-recon", "--loss", "huber")


def test_parser_errors_raise_input_error():
    with pytest.raises(InputError):
        parse_args(["linreg", "--local", "--global"])
    with pytest.raises(InputError):
        parse_args(["linreg", "--bogus"])
    with pytest.raises(InputError):
        parse_args(["linreg", "--norm", "l1"])
    with pytest.raises(InputError):
        parse_args(["verify", "everything"])


def test_every_experiment_has_a_handler(app):
    assert app.experiments == sorted(EXPERIMENTS)


# -- config resolution --------------------------------------------------------


def test_resolve_config_precedence(app, tmp_path):
    path = tmp_path / "config.toml"
    path.write_text('experiment = "linreg"\nn = 300\ndelta = 0.3\nnorm = "homo"\n')
    config = app.resolve_config("linreg", {"delta": 0.05}, path)
    assert isinstance(config, LinregConfig)
    assert (config.n, config.delta, config.norm) == (300, 0.05, NormKind.HOMOGENEOUS)
    assert config.epochs == 1000
    assert config.seed == 0


def test_resolve_config_validation(app):
    with pytest.raises(ValidationError):
        app.resolve_config("linreg", {"delta": 0.0})
    with pytest.raises(ValidationError):
        app.resolve_config("linreg", {"widht": 3})
    with pytest.raises(ValidationError):
        app.resolve_config("linreg", {"loss": "local-huber"})
    with pytest.raises(InputError):
        app.resolve_config("nope")


def test_sweep_values_are_coerced(app):
    config = app.resolve_config("sweep-delta", overrides("sweep-delta", "--values", "0.1, 0.2"))
    assert config.values == [0.1, 0.2]
    with pytest.raises(ValidationError):
        app.resolve_config("sweep-delta", {"values": ["0.1", "-1"]})
    with pytest.raises(ValidationError):
        app.resolve_config("sweep-arch", {"values": ["50x4-cnn"]})


def test_nn_recon_test_grid():
    assert np.allclose(NnReconConfig().test_points, np.linspace(-0.5, 0.5, 11))


# -- reports ------------------------------------------------------------------


def test_summarize_seeds_medians():
    results = [
        SeedResult(seed=0, metrics={"error": 1.0, "bound": None}),
        SeedResult(seed=1, metrics={"error": 3.0, "bound": 2.0}),
        SeedResult(seed=2, metrics={"error": 2.0, "bound": None}),
    ]
    summary = summarize_seeds(results)
    assert summary["median"] == {"bound": 2.0, "error": 2.0}
    assert [row["seed"] for row in summary["per_seed"]] == [0, 1, 2]


def test_format_checks_tally():
    results = [CheckResult(suite="bounds", name=name, passed=name == "a") for name in ("a", "b")]
    text = format_checks(results)
    assert "[FAIL] bounds/b" in text
    assert text.endswith("1 passed, 1 failed")


# -- end to end ---------------------------------------------------------------

TINY_LINREG = ["--n", "40", "--epochs", "2", "--repeats", "1"]


def test_linreg_run_writes_a_report(tmp_path):
    out = tmp_path / "linreg"
    assert main(["linreg", *TINY_LINREG, "--out", str(out)]) == 0
    report = read_report(out)
    assert report.experiment == "linreg"
    assert report.seeds == [0]
    assert set(report.metrics["median"]) >= {"error_b", "error_sigma", "bound", "final_loss"}
    assert (out / CONFIG_FILE).is_file()
    assert (out / report.traces["seed-0/loss"]).is_file()
    assert (out / report.traces["seed-0/params"]).is_file()

    assert main(["linreg", *TINY_LINREG, "--out", str(out)]) == 1
    assert main(["linreg", *TINY_LINREG, "--out", str(out), "--force"]) == 0


def test_invalid_values_exit_with_one(tmp_path):
    assert main(["linreg", *TINY_LINREG, "--delta", "0", "--out", str(tmp_path / "a")]) == 1
    assert main(["linreg", "--n", "many", "--out", str(tmp_path / "b")]) == 1
    assert not (tmp_path / "a" / "report.json").exists()


def test_runs_are_reproducible(tmp_path):
    assert main(["linreg", *TINY_LINREG, "--seed", "4", "--out", str(tmp_path / "first")]) == 0
    assert main(["linreg", *TINY_LINREG, "--seed", "4", "--out", str(tmp_path / "second")]) == 0
    assert comparable(read_report(tmp_path / "first")) == comparable(read_report(tmp_path / "second"))


def test_resolved_config_replays_the_run(tmp_path):
    first = tmp_path / "first"
    assert main(["linreg", *TINY_LINREG, "--norm", "homo", "--out", str(first)]) == 0
    resolved = read_config_file(first / CONFIG_FILE)
    assert resolved["experiment"] == "linreg"
    assert resolved["norm"] == "homo"

    again = tmp_path / "again"
    assert main(["linreg", "--config", str(first / CONFIG_FILE), "--out", str(again)]) == 0
    assert comparable(read_report(first)) == comparable(read_report(again))


def test_nn_recon_tiny_run(tmp_path):
    argv = ["nn-recon", "--n", "30", "--epochs", "2", "--width", "4", "--depth", "2", "--repeats", "1"]
    assert main([*argv, "--deterministic", "--out", str(tmp_path)]) == 0
    median = read_report(tmp_path).metrics["median"]
    assert {"mean_error", "sd_error", "det_mean_error", "det_sd_error"} <= set(median)


def test_concrete_tiny_run(tmp_path, rng):
    header = ",".join(CONCRETE_INPUTS + [CONCRETE_OUTPUT])
    rows = [",".join(f"{v:.6f}" for v in row) for row in rng.uniform(1.0, 100.0, size=(30, 7))]
    csv = tmp_path / "concrete.csv"
    csv.write_text(header + "\n" + "\n".join(rows) + "\n")

    out = tmp_path / "run"
    argv = ["concrete", "--data", str(csv), "--epochs", "2", "--width", "4", "--depth", "1", "--repeats", "1"]
    assert main([*argv, "--norm", "homo", "--delta", "50", "--delta0", "1000", "--out", str(out)]) == 0
    median = read_report(out).metrics["median"]
    assert median["anchors"] == 10.0
    assert median["excluded_anchors"] == 0.0

    assert main(["concrete", "--out", str(tmp_path / "missing")]) == 1


def test_ode_tiny_run(tmp_path):
    argv = ["ode", "--m", "4", "--trajectories", "4", "--epochs", "2", "--width", "4", "--depth", "1"]
    argv += ["--g-budget", "5", "--delta", "1", "--delta0", "1", "--repeats", "1", "--out", str(tmp_path)]
    assert main(argv) == 0
    report = read_report(tmp_path)
    assert report.metrics["median"]["error_in_yhat"] >= 0.0
    assert (tmp_path / report.traces["seed-0/test-truth"]).is_file()


def test_sweep_delta_tiny_run(tmp_path):
    argv = ["sweep-delta", "--values", "0.5,1.0", *TINY_LINREG, "--out", str(tmp_path)]
    assert main(argv) == 0
    report = read_report(tmp_path)
    assert [point["value"] for point in report.metrics["points"]] == [0.5, 1.0]
    assert (tmp_path / report.traces["sweep-delta"]).is_file()


def test_verify_bounds_from_the_command_line():
    assert main(["verify", "bounds"]) == 0
