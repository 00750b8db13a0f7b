"""Command line interface: ``python -m depth_fm <mode> [--config FILE] [--set key=value ...]``."""

from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path
from typing import Sequence

from src.config.loader import MODES, load_run_config
from src.errors import ConfigError, DepthFMError

from .runner import run
from .runtime import RunLayout

LOG_LEVEL_VARIABLE = "DEFM_LOG_LEVEL"
EXIT_OK, EXIT_DOMAIN_ERROR, EXIT_CONFIG_ERROR = 0, 1, 2

LOGGER = logging.getLogger("depth_fm.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Depth foundation model pretraining, distillation and evaluation")
    parser.add_argument("mode", choices=MODES, help="Operation to run")
    parser.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted configuration key, e.g. --set schedules.total_steps=50",
    )
    parser.add_argument("--output", type=Path, default=None, help="Run directory (overrides output_dir)")
    return parser


def _configure_logging(log_dir: Path) -> None:
    level = os.getenv(LOG_LEVEL_VARIABLE, "INFO").strip().upper()
    log_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_dir / "run.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.set_name("depth_fm.run_log")
    root = logging.getLogger()
    for existing in list(root.handlers):
        if existing.get_name() == handler.get_name():
            root.removeHandler(existing)
            existing.close()
    root.addHandler(handler)
    logging.basicConfig(level=level)
    root.setLevel(level)


def run_from_args(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.overrides)
    if args.output is not None:
        overrides.append(f"output_dir={args.output}")

    try:
        config = load_run_config(args.config, overrides, mode=args.mode)
    except ConfigError as exc:
        logging.basicConfig(level=logging.INFO)
        LOGGER.error("%s", exc)
        return EXIT_CONFIG_ERROR

    _configure_logging(RunLayout(Path(config.output_dir)).logs)
    try:
        result = run(config)
    except ConfigError as exc:
        LOGGER.error("%s", exc)
        return EXIT_CONFIG_ERROR
    except DepthFMError as exc:
        LOGGER.error("%s", exc)
        return EXIT_DOMAIN_ERROR

    if result.report is not None:
        summary = ", ".join(f"{key}={value:.4f}" for key, value in sorted(result.report.metrics.items()))
        print(f"{result.mode}: {summary}")
    for name, path in sorted(result.artifacts.items()):
        print(f"{name}: {path}")
    LOGGER.info("Finished %s in %s", result.mode, result.output_dir)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    return run_from_args(argv)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
