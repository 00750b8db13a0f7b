"""Run configuration helpers for the command line and tests."""

from __future__ import annotations

from .loader import (
    DEFAULT_SETTINGS,
    MODES,
    WORKERS_VARIABLE,
    RunConfig,
    config_fingerprint,
    load_run_config,
    parse_override,
    reset_settings_cache,
    snapshot_text,
    validate_run_config,
)

__all__ = [
    "DEFAULT_SETTINGS",
    "MODES",
    "RunConfig",
    "WORKERS_VARIABLE",
    "config_fingerprint",
    "load_run_config",
    "parse_override",
    "reset_settings_cache",
    "snapshot_text",
    "validate_run_config",
]
