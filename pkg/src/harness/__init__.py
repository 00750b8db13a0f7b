"""Run directories, reproducibility switches, toy data and the command line surface."""

from .runtime import DTYPES, MetricsWriter, RunLayout, seed_everything, torch_dtype

__all__ = ["DTYPES", "MetricsWriter", "RunLayout", "seed_everything", "torch_dtype"]
