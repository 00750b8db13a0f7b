"""Top-level CLI package for the depth foundation model toolkit."""

from __future__ import annotations

from typing import Sequence

from src.harness.cli import main as harness_main

__all__ = ["main"]


def main(argv: Sequence[str] | None = None) -> int:
    """Dispatch to the harness CLI."""

    return harness_main(argv)
