#!/usr/bin/env python3
"""
W2 Recon - Entry Point

Trains models with latent random parameters by minimizing the local squared
Wasserstein-2 loss and reports how well the conditional output laws are
recovered.

Usage:
    python main.py linreg --n 1000 --delta 0.1 --norm hete --seed 7
    python main.py ode --epochs 500 --out runs/ode
    python main.py verify oracles

Optional environment variables (or .env):
    W2RECON_OUT_DIR - default run directory root (runs)
    W2RECON_DATA_DIR - where relative --data paths are looked up (data)
    W2RECON_LOG_LEVEL - default INFO
    W2RECON_WORKERS - parallel processes for repeats (1)
    W2RECON_TORCH_THREADS - torch intra-op threads (1)

Exit codes: 0 success, 1 invalid input or a failed check, 2 runtime failure.
"""

import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))


def setup_logging(level: str = "INFO") -> None:
    """Configure logging."""
    logging.basicConfig(
        level=level.upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(sys.stdout),
        ],
        force=True,
    )

    # Reduce noise from libraries
    logging.getLogger("numexpr").setLevel(logging.WARNING)
    logging.getLogger("torch").setLevel(logging.WARNING)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    from config.settings import settings

    setup_logging(settings.log_level)
    logger = logging.getLogger(__name__)

    try:
        # Import here to ensure logging is set up first
        import torch
        from pydantic import ValidationError

        from cli.app import ExperimentApp
        from cli.handlers.verify import run_verify
        from cli.parser import config_overrides, parse_args
        from cli.report import format_checks, format_summary
        from core.errors import InputError
    except ImportError as e:
        logger.error(f"Missing dependency: {e}")
        return 2

    try:
        args = parse_args(argv)
        if args.log_level:
            setup_logging(args.log_level)
        torch.set_num_threads(settings.torch_threads)

        if args.command == "verify":
            results = run_verify(args.suite)
            print(format_checks(results))
            return 0 if all(r.passed for r in results) else 1

        app = ExperimentApp(settings, out_dir=args.out, force=args.force)
        overrides = config_overrides(args, app.config_class(args.command))
        config = app.resolve_config(args.command, overrides, args.config)
        report = app.run(args.command, config)
        print(format_summary(report, app.storage.report_path))
        return 0

    except (InputError, ValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return 1
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return 2


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted")
        sys.exit(130)
