"""Shared error hierarchy for the depth foundation model toolkit."""

from __future__ import annotations


class DepthFMError(Exception):
    """Base class for domain errors raised by any module.

    ``module`` is the prefix used when the CLI reports the error.
    """

    module = "depth_fm"

    def __str__(self) -> str:
        message = super().__str__()
        return f"[{self.module}] {message}" if message else f"[{self.module}] {type(self).__name__}"


class ConfigError(DepthFMError):
    """Raised when a run configuration cannot be parsed or validated."""

    module = "config"


class PathMissing(DepthFMError):
    """Raised when a path referenced by the configuration does not exist."""

    module = "harness"


__all__ = ["ConfigError", "DepthFMError", "PathMissing"]
