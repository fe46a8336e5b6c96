"""Experiment application that ties settings, handlers, workers and storage together."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import torch

from config.settings import Settings
from core import __version__
from core.errors import InputError
from core.models import ExperimentConfig, ExperimentOutcome, ExperimentReport, SeedResult
from core.storage import RunStorage, read_config_file

from .handlers.bench_loss import setup_bench_loss_handler
from .handlers.concrete import setup_concrete_handler
from .handlers.linreg import setup_linreg_handler
from .handlers.nn_recon import setup_nn_recon_handler
from .handlers.ode import setup_ode_handler
from .handlers.sweeps import setup_sweep_handlers
from .report import emit_report

logger = logging.getLogger(__name__)

# Runs one repeat; must be a module-level function so a process pool can pickle it
SeedRunner = Callable[[Any, int], SeedResult]
Handler = tuple[type[ExperimentConfig], Callable[["ExperimentApp", Any], ExperimentOutcome]]


def _init_worker(threads: int) -> None:
    torch.set_num_threads(threads)


class ExperimentApp:
    """Runs named experiments and writes their reports."""

    def __init__(self, settings: Settings, out_dir: Optional[Path] = None, force: bool = False):
        """
        Initialize the experiment application.

        Args:
            settings: Application settings
            out_dir: Run directory; defaults to ``settings.out_dir / <experiment>``
            force: Overwrite an existing report
        """
        self.settings = settings
        self.out_dir = out_dir
        self.force = force
        self.storage: Optional[RunStorage] = None
        self._handlers: dict[str, Handler] = {}
        self._setup_handlers()

    def _setup_handlers(self) -> None:
        """Register every experiment handler."""
        for register in (
            setup_linreg_handler,
            setup_nn_recon_handler,
            setup_concrete_handler,
            setup_ode_handler,
            setup_sweep_handlers,
            setup_bench_loss_handler,
        ):
            self._handlers.update(register(self))
        logger.debug(f"Registered experiments: {', '.join(self.experiments)}")

    @property
    def experiments(self) -> list[str]:
        return sorted(self._handlers)

    def config_class(self, name: str) -> type[ExperimentConfig]:
        if name not in self._handlers:
            raise InputError(f"unknown experiment {name!r}; choose from {', '.join(self.experiments)}")
        return self._handlers[name][0]

    def resolve_config(
        self,
        name: str,
        overrides: Optional[dict[str, Any]] = None,
        config_file: Optional[Path] = None,
    ) -> ExperimentConfig:
        """
        Merge defaults, an optional TOML file and explicit flags (flags win).

        Args:
            name: Experiment name
            overrides: Field values given on the command line
            config_file: TOML file of field values

        Returns:
            Validated config; raises pydantic.ValidationError on bad values
        """
        config_class = self.config_class(name)
        values: dict[str, Any] = {}
        if config_file is not None:
            values.update(read_config_file(config_file))
            stored = values.pop("experiment", name)
            if stored != name:
                logger.warning(f"{config_file} was written for {stored!r}, applying it to {name!r}")
        values.update(overrides or {})
        values.setdefault("seed", self.settings.default_seed)
        return config_class.model_validate(values)

    def map_seeds(
        self, runner: SeedRunner, config: ExperimentConfig, seeds: Optional[Sequence[int]] = None
    ) -> list[SeedResult]:
        """
        Run ``runner(config, seed)`` for every seed, in a process pool when
        more than one worker is configured.

        Returns:
            Results sorted by seed
        """
        seeds = list(config.seeds if seeds is None else seeds)
        job = partial(runner, config)
        workers = min(self.settings.workers, len(seeds))
        if workers > 1:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(self.settings.torch_threads,),
            ) as pool:
                results = list(pool.map(job, seeds))
        else:
            results = [job(seed) for seed in seeds]
        return sorted(results, key=lambda result: result.seed)

    def record(self, result: SeedResult, prefix: str = "") -> dict[str, str]:
        """
        Write the side files of one repeat.

        Args:
            result: Repeat outcome
            prefix: Distinguishes sweep points, e.g. ``delta-0.1-``

        Returns:
            Trace name to path relative to the run directory
        """
        if self.storage is None:
            raise InputError("no run in progress")
        tag = f"{prefix}seed-{result.seed}"
        traces = {}
        if result.loss_trace:
            traces[f"{tag}/loss"] = self.storage.write_loss_trace(f"{tag}-loss", result.loss_trace)
        for name, columns in result.curves.items():
            traces[f"{tag}/{name}"] = self.storage.write_curve(f"{tag}-{name}", columns)
        for name, trajectories in result.trajectories.items():
            traces[f"{tag}/{name}"] = self.storage.write_trajectories(f"{tag}-{name}", trajectories)
        if result.checkpoint:
            traces[f"{tag}/params"] = self.storage.write_checkpoint(tag, result.checkpoint)
        return traces

    def run(self, name: str, config: ExperimentConfig) -> ExperimentReport:
        """
        Run an experiment end to end and emit its report.

        Args:
            name: Registered experiment name
            config: Resolved config of the matching type

        Returns:
            The report that was written
        """
        config_class, handler = self._handlers.get(name, (None, None))
        if handler is None:
            raise InputError(f"unknown experiment {name!r}; choose from {', '.join(self.experiments)}")
        if not isinstance(config, config_class):
            raise InputError(f"{name} expects {config_class.__name__}, got {type(config).__name__}")

        self.storage = RunStorage(self.out_dir or self.settings.out_dir / name, self.force)
        self.storage.prepare()
        logger.info(f"Running {name} with seeds {config.seeds} into {self.storage.out_dir}")

        started = time.perf_counter()
        outcome = handler(self, config)
        elapsed = time.perf_counter() - started

        report = ExperimentReport(
            experiment=name,
            config=config.model_dump(mode="json"),
            seeds=config.seeds,
            metrics=outcome.metrics,
            traces=outcome.traces,
            notes=outcome.notes,
            wall_clock_seconds=round(elapsed, 3),
            library_version=__version__,
        )
        emit_report(self.storage, report)
        logger.info(f"{name} finished in {elapsed:.1f}s")
        return report
