"""Three-channel log-compressed depth representation.

Channels, computed from metric depth ``D`` with ``log_p(D) = log(1 + D)``:

* C1: ``(log_p(D) - log_p(D_min)) / (log_p(D_max) - log_p(D_min))`` with the
  extrema taken over the valid pixels of the image (relative structure);
* C2: ``log_p(D) / log_p(10)`` (metric, mid range);
* C3: ``log_p(D) / log_p(100)`` (metric, far range).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
import torch

from src.depth_io.formats import DepthImage
from src.errors import DepthFMError

if TYPE_CHECKING:  # pragma: no cover
    from src.depth_io.stats import ChannelStats

LOG_P_10 = math.log1p(10.0)
LOG_P_100 = math.log1p(100.0)


class NormalizationError(DepthFMError):
    module = "normalization"


class NegativeDepth(NormalizationError):
    """log1p was asked for a negative or non-finite depth."""


class NoValidPixels(NormalizationError):
    """The image has no valid pixel to normalise against."""


@dataclass(frozen=True)
class NormalizedInput:
    """Stacked ``[C1, C2, C3]`` channels (3xHxW) with the source validity mask."""

    channels: np.ndarray
    valid: np.ndarray

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.channels)).to(dtype)


def log1p_depth(d: float | np.ndarray) -> float | np.ndarray:
    """``log(1 + d)`` evaluated without cancellation for small ``d``."""

    values = np.asarray(d, dtype=np.float64)
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise NegativeDepth("log1p_depth requires finite depths >= 0")
    result = np.log1p(values)
    return float(result) if result.ndim == 0 else result


def _log_extrema(log_depth: np.ndarray, valid: np.ndarray) -> tuple[float, float]:
    masked = log_depth[valid]
    return float(masked.min()), float(masked.max())


def normalize(
    image: DepthImage,
    stats: Optional["ChannelStats"] = None,
    *,
    dtype: np.dtype | type = np.float32,
) -> NormalizedInput:
    """Map metric depth to ``[C1, C2, C3]`` and optionally standardise per channel.

    Invalid pixels are filled with each channel's value at ``D = 0``.
    """

    if image.valid_count == 0:
        raise NoValidPixels("cannot normalise an image without valid pixels")

    depth = np.where(image.valid, image.depth.astype(np.float64), 0.0)
    log_depth = np.log1p(depth)
    log_min, log_max = _log_extrema(log_depth, image.valid)
    span = log_max - log_min
    if span > 0:
        c1 = (log_depth - log_min) / span
    else:
        c1 = np.zeros_like(log_depth)
    c2 = log_depth / LOG_P_10
    c3 = log_depth / LOG_P_100

    channels = np.stack([c1, c2, c3], axis=0)
    if stats is not None:
        mean = np.asarray(stats.mean, dtype=np.float64).reshape(3, 1, 1)
        std = np.asarray(stats.std, dtype=np.float64).reshape(3, 1, 1)
        channels = (channels - mean) / std
    return NormalizedInput(channels=channels.astype(dtype), valid=image.valid.copy())


def baseline_minmax_normalize(image: DepthImage, *, dtype: np.dtype | type = np.float32) -> np.ndarray:
    """Per-image min-max depth scaling replicated into three identical channels.

    This is the preprocessing RGB-pretrained encoders are given depth with; it is
    kept for comparison runs.
    """

    if image.valid_count == 0:
        raise NoValidPixels("cannot normalise an image without valid pixels")
    depth = image.depth.astype(np.float64)
    d_min = float(depth[image.valid].min())
    d_max = float(depth[image.valid].max())
    if d_max > d_min:
        scaled = np.where(image.valid, (depth - d_min) / (d_max - d_min), 0.0)
    else:
        scaled = np.zeros_like(depth)
    return np.repeat(scaled[None, :, :], 3, axis=0).astype(dtype)


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
