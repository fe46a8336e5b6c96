"""Report aggregation, emission and console summaries."""

import logging
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from core.models import CheckResult, ExperimentReport, SeedResult
from core.storage import RunStorage

logger = logging.getLogger(__name__)

# Metrics shown per sweep point
_HEADLINE = {"error_b", "error_sigma", "mean_error", "sd_error", "error_in_yhat", "error_in_ghat"}


def _median(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return float(np.median(present))


def summarize_seeds(results: Sequence[SeedResult]) -> dict[str, Any]:
    """
    Per-seed metric rows plus their medians.

    Args:
        results: Repeats sorted by seed

    Returns:
        {"per_seed": [{"seed": s, ...}], "median": {...}}
    """
    names = sorted({name for result in results for name in result.metrics})
    return {
        "per_seed": [{"seed": result.seed, **result.metrics} for result in results],
        "median": {name: _median([r.metrics.get(name) for r in results]) for name in names},
    }


def emit_report(storage: RunStorage, report: ExperimentReport) -> Path:
    """
    Write config.resolved.toml and report.json into the run directory.

    Args:
        storage: Prepared run storage
        report: Finished report

    Returns:
        Path of report.json
    """
    storage.write_resolved_config({"experiment": report.experiment, **report.config})
    return storage.write_report(report)


def format_summary(report: ExperimentReport, path: Optional[Path] = None) -> str:
    """Short human readable summary of a finished run."""
    lines = [f"{report.experiment}: seeds {report.seeds}"]

    median = report.metrics.get("median")
    if isinstance(median, dict):
        for name, value in median.items():
            lines.append(f"  {name:<22} {_fmt(value)}")

    for point in report.metrics.get("points", []):
        point_median = point.get("median", {})
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in point_median.items() if k in _HEADLINE)
        lines.append(f"  {point['value']!s:<14} {shown}")

    for note in report.notes:
        lines.append(f"  note: {note}")
    lines.append(f"  wall clock {report.wall_clock_seconds:.1f}s")
    if path is not None:
        lines.append(f"  report: {path}")
    return "\n".join(lines)


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_checks(results: Sequence[CheckResult]) -> str:
    """One PASS/FAIL line per check and a closing tally."""
    lines = []
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        detail = f"  ({result.detail})" if result.detail else ""
        lines.append(f"[{status}] {result.suite}/{result.name}{detail}")
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed} passed, {failed} failed")
    return "\n".join(lines)
