"""Command-line surface: one subcommand per experiment plus ``verify``."""

import argparse
from pathlib import Path
from typing import Any, Optional, Sequence

from core.errors import InputError
from core.models import ExperimentConfig, LossFamily, LossKind, Locality

from .handlers.verify import SUITES

EXPERIMENTS = (
    "linreg",
    "nn-recon",
    "concrete",
    "ode",
    "sweep-delta",
    "sweep-n",
    "sweep-arch",
    "sweep-spread",
    "bench-loss",
)

NORM_ALIASES = {
    "homo": "homo",
    "homogeneous": "homo",
    "hete": "hete",
    "hetero": "hete",
    "heterogeneous": "hete",
}

# Flag destinations that map one-to-one onto config fields
FIELD_FLAGS = (
    "n",
    "delta",
    "delta0",
    "norm",
    "epochs",
    "lr",
    "weight_decay",
    "seed",
    "repeats",
    "data",
    "width",
    "depth",
    "resnet",
    "deterministic",
    "a",
    "sigma_u",
    "m",
    "trajectories",
    "g_budget",
    "values",
    "half_widths",
    "log_every",
)


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises InputError instead of exiting, so the caller picks the exit code."""

    def error(self, message: str) -> None:
        raise InputError(f"{self.prog}: {message}")


def _norm(value: str) -> str:
    try:
        return NORM_ALIASES[value.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"norm must be homo or hete, got {value!r}") from None


def _csv_list(value: str) -> list[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma separated list")
    return items


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    quiet = argparse.SUPPRESS
    data = parser.add_argument_group("data")
    data.add_argument("--n", type=int, default=quiet, help="number of training samples")
    data.add_argument("--data", type=Path, default=quiet, help="CSV dataset path")
    data.add_argument("--a", type=float, default=quiet, help="SD of the ODE initial condition")
    data.add_argument("--sigma-u", dest="sigma_u", type=float, default=quiet, help="ODE latent half-width")
    data.add_argument("--m", type=int, default=quiet, help="ODE time steps")
    data.add_argument("--trajectories", type=int, default=quiet, help="ODE trajectories per set")

    loss = parser.add_argument_group("loss")
    loss.add_argument("--loss", default=quiet, help="w2, mmd, mse, mean2var or a full label like global-w2")
    where = loss.add_mutually_exclusive_group()
    where.add_argument("--local", dest="locality", action="store_const", const="local", default=quiet)
    where.add_argument("--global", dest="locality", action="store_const", const="global", default=quiet)
    loss.add_argument("--delta", type=float, default=quiet, help="neighborhood radius")
    loss.add_argument("--delta0", type=float, default=quiet, help="evaluation neighborhood radius")
    loss.add_argument("--norm", type=_norm, default=quiet, help="input norm: homo or hete")

    training = parser.add_argument_group("training")
    training.add_argument("--epochs", type=int, default=quiet)
    training.add_argument("--lr", type=float, default=quiet)
    training.add_argument("--weight-decay", dest="weight_decay", type=float, default=quiet)
    training.add_argument("--seed", type=int, default=quiet)
    training.add_argument("--repeats", type=int, default=quiet)
    training.add_argument("--log-every", dest="log_every", type=int, default=quiet)

    network = parser.add_argument_group("network")
    network.add_argument("--width", type=int, default=quiet)
    network.add_argument("--depth", type=int, default=quiet)
    network.add_argument("--resnet", action=argparse.BooleanOptionalAction, default=quiet)
    network.add_argument(
        "--deterministic", action="store_true", default=quiet, help="also train a spread-free baseline"
    )
    network.add_argument("--g-budget", dest="g_budget", type=int, default=quiet, help="draws per g_hat point")

    sweep = parser.add_argument_group("sweeps")
    sweep.add_argument("--values", type=_csv_list, default=quiet, help="comma separated sweep values")
    sweep.add_argument(
        "--half-widths", dest="half_widths", type=_csv_list, default=quiet, help="sweep-spread input widths"
    )

    output = parser.add_argument_group("output")
    output.add_argument("--out", type=Path, default=None, help="run directory")
    output.add_argument("--force", action="store_true", help="overwrite an existing report")
    output.add_argument("--config", type=Path, default=None, help="TOML file of config values")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="w2recon",
        description="Local squared W2 reconstruction of models with latent random parameters",
    )
    parser.add_argument("--log-level", dest="log_level", default=None, help="override W2RECON_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    for name in EXPERIMENTS:
        _add_experiment_flags(commands.add_parser(name, help=f"run the {name} experiment"))

    verify = commands.add_parser("verify", help="run the self-check suites")
    verify.add_argument("suite", choices=SUITES + ("all",))
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def config_overrides(args: argparse.Namespace, config_class: type[ExperimentConfig]) -> dict[str, Any]:
    """
    Field values given explicitly on the command line.

    ``--loss`` and ``--local``/``--global`` combine into one loss label; a
    missing half falls back to the config default.
    """
    given = vars(args)
    overrides = {name: given[name] for name in FIELD_FLAGS if name in given}

    if "loss" in given or "locality" in given:
        default = LossKind.parse(config_class.model_fields["loss"].default)
        family = given.get("loss", default.family.value)
        if "-" in family:
            locality, _, family = family.partition("-")
            locality = given.get("locality", locality)
        else:
            locality = given.get("locality", default.locality.value)
        try:
            overrides["loss"] = LossKind(family=LossFamily(family), locality=Locality(locality)).label
        except ValueError:
            raise InputError(f"unknown loss {family!r}; choose from w2, mmd, mse, mean2var") from None
    return overrides
