"""Metric-preserving depth normalization."""

from .channels import (
    LOG_P_10,
    LOG_P_100,
    NegativeDepth,
    NoValidPixels,
    NormalizationError,
    NormalizedInput,
    baseline_minmax_normalize,
    log1p_depth,
    normalize,
)

__all__ = [
    "LOG_P_10",
    "LOG_P_100",
    "NegativeDepth",
    "NoValidPixels",
    "NormalizationError",
    "NormalizedInput",
    "baseline_minmax_normalize",
    "log1p_depth",
    "normalize",
]
