"""Run directory persistence: reports, CSV curves, checkpoints and resolved config."""

import json
import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from .errors import InputError, ReconError, ReportExistsError
from .models import ExperimentReport, Trajectory

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CONFIG_FILE = "config.resolved.toml"
TRACES_DIR = "traces"
PARAMS_DIR = "params"


def format_float(value: float) -> str:
    """17 significant digits, enough to read back the same double."""
    return f"{float(value):.17g}"


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return json.dumps(str(value))


def format_toml(config: Mapping[str, Any]) -> str:
    """Render a config dict as TOML: scalars first, then one table per nested dict.

    None values are left out.
    """
    lines = []
    tables = []
    for key in sorted(config):
        value = config[key]
        if value is None:
            continue
        if isinstance(value, Mapping):
            tables.append((key, value))
        else:
            lines.append(f"{key} = {_toml_value(value)}")
    for name, table in tables:
        lines.append("")
        lines.append(f"[{name}]")
        for key in sorted(table):
            lines.append(f"{key} = {_toml_value(table[key])}")
    return "\n".join(lines) + "\n"


def read_config_file(path: Union[str, Path]) -> dict[str, Any]:
    """Parse a TOML config file written by hand or by a previous run."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"{path}: {exc}") from exc


def read_report(path: Union[str, Path]) -> ExperimentReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    return ExperimentReport.model_validate_json(path.read_text(encoding="utf-8"))


def read_checkpoint(path: Union[str, Path]) -> list[tuple[str, float]]:
    """(entry name, value) pairs from a key = value checkpoint file."""
    entries = []
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}: line {number} is not 'name = value'")
        try:
            entries.append((name.strip(), float(value)))
        except ValueError:
            raise InputError(f"{path}: line {number}: bad value {value.strip()!r}") from None
    return entries


class RunStorage:
    """Files of one experiment run under a single output directory."""

    def __init__(self, out_dir: Path, force: bool = False):
        """
        Initialize storage.

        Args:
            out_dir: Run directory (created on prepare)
            force: Allow overwriting an existing report
        """
        self.out_dir = Path(out_dir)
        self.force = force

    @property
    def report_path(self) -> Path:
        return self.out_dir / REPORT_FILE

    def prepare(self) -> None:
        """Create the run directory, refusing to reuse a non-empty one unless forced."""
        if not self.force:
            if self.report_path.exists():
                raise ReportExistsError(f"{self.report_path} exists; pass --force to overwrite")
            if self.out_dir.is_dir() and any(self.out_dir.iterdir()):
                raise ReportExistsError(f"{self.out_dir} is not empty; pass --force to reuse it")
        try:
            (self.out_dir / TRACES_DIR).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ReconError(f"cannot create {self.out_dir}: {exc}") from exc

    def _write_text(self, path: Path, text: str) -> Path:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise ReconError(f"cannot write {path}: {exc}") from exc
        return path

    def _write_frame(self, relative: str, frame: pd.DataFrame) -> None:
        text = frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")
        self._write_text(self.out_dir / relative, text)

    def write_curve(self, name: str, columns: Mapping[str, Sequence[Any]]) -> str:
        """
        Write a CSV curve under traces/.

        Args:
            name: File stem
            columns: Column name to values, all of equal length

        Returns:
            Path of the file relative to the run directory
        """
        relative = f"{TRACES_DIR}/{name}.csv"
        frame = pd.DataFrame({key: list(values) for key, values in columns.items()})
        self._write_frame(relative, frame)
        return relative

    def write_loss_trace(self, name: str, trace: Sequence[float]) -> str:
        return self.write_curve(name, {"epoch": range(len(trace)), "loss": trace})

    def write_trajectories(self, name: str, trajectories: Iterable[Trajectory]) -> str:
        """Trajectory dump with columns traj_id, t, y1..y4."""
        rows = []
        for traj_id, trajectory in enumerate(trajectories):
            for t, state in zip(trajectory.times, trajectory.states):
                rows.append([traj_id, t, *state])
        width = len(rows[0]) - 2 if rows else 4
        frame = pd.DataFrame(rows, columns=["traj_id", "t"] + [f"y{i + 1}" for i in range(width)])
        relative = f"{TRACES_DIR}/{name}.csv"
        self._write_frame(relative, frame)
        return relative

    def write_checkpoint(self, name: str, entries: Iterable[tuple[str, float]]) -> str:
        """Parameters as ``name = value`` lines with round-trip precision, under params/."""
        relative = f"{PARAMS_DIR}/{name}.txt"
        text = "".join(f"{entry} = {format_float(value)}\n" for entry, value in entries)
        self._write_text(self.out_dir / relative, text)
        return relative

    def write_resolved_config(self, config: Mapping[str, Any]) -> Path:
        return self._write_text(self.out_dir / CONFIG_FILE, format_toml(config))

    def write_report(self, report: ExperimentReport) -> Path:
        """report.json with sorted keys."""
        body = json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2, allow_nan=False)
        path = self._write_text(self.report_path, body + "\n")
        logger.info(f"Report written to {path}")
        return path
