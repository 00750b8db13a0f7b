"""Global per-channel statistics of the stacked depth representation."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .formats import DepthIOError, IoFailure
from .manifest import ManifestRecord

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6


class EmptyManifest(DepthIOError):
    """Statistics were requested over an empty manifest."""


class NoValidPixels(DepthIOError):
    """No image in the manifest contributed a valid pixel."""


class ChannelStats(BaseModel):
    """Per-channel mean and (floored) population standard deviation."""

    model_config = ConfigDict(frozen=True)

    mean: Tuple[float, float, float]
    std: Tuple[float, float, float]
    pixel_count: int = 0

    @field_validator("std")
    @classmethod
    def _positive_std(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(component <= 0 for component in value):
            raise ValueError("channel std components must be strictly positive")
        return value

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write stats {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ChannelStats":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read stats {path}: {exc}") from exc
        return cls.model_validate(payload)


@dataclass
class RunningMoments:
    """Count/mean/M2 triple per channel with an exact pairwise merge."""

    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float64))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float64))

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RunningMoments":
        """Moments of a ``(3, N)`` block, computed two-pass within the block."""

        values = np.asarray(values, dtype=np.float64)
        count = int(values.shape[1])
        if count == 0:
            return cls()
        mean = values.mean(axis=1)
        m2 = ((values - mean[:, None]) ** 2).sum(axis=1)
        return cls(count=count, mean=mean, m2=m2)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return RunningMoments(self.count, self.mean.copy(), self.m2.copy())
        if self.count == 0:
            return RunningMoments(other.count, other.mean.copy(), other.m2.copy())
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / total)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / total)
        return RunningMoments(total, mean, m2)

    def update(self, values: np.ndarray) -> "RunningMoments":
        return self.merge(RunningMoments.from_values(values))

    def to_stats(self) -> ChannelStats:
        if self.count == 0:
            raise NoValidPixels("no valid pixels contributed to the statistics")
        std = np.sqrt(self.m2 / self.count)
        floored = np.maximum(std, STD_FLOOR)
        if np.any(std < STD_FLOOR):
            logger.warning("Channel std below %.0e clamped (constant channel in dataset)", STD_FLOOR)
        return ChannelStats(
            mean=tuple(float(v) for v in self.mean),
            std=tuple(float(v) for v in floored),
            pixel_count=self.count,
        )


def _default_normalizer() -> Callable:
    from src.normalization.channels import normalize

    return normalize


def _image_moments(record: ManifestRecord, normalizer: Callable) -> RunningMoments:
    from src.normalization.channels import NoValidPixels as EmptyImage

    image = record.load()
    try:
        normalized = normalizer(image, None, dtype=np.float64)
    except EmptyImage:
        logger.warning("Skipping %s: no valid pixels", record.path)
        return RunningMoments()
    values = normalized.channels[:, normalized.valid]
    return RunningMoments.from_values(values)


def compute_channel_stats(
    manifest: Sequence[ManifestRecord],
    normalizer: Optional[Callable] = None,
    *,
    workers: int = 1,
) -> ChannelStats:
    """Single pass over every valid pixel of the un-standardised channels.

    Per-image moments are merged in manifest order, so the result does not depend
    on the worker count.
    """

    if not manifest:
        raise EmptyManifest("cannot compute channel statistics over an empty manifest")
    normalizer = normalizer or _default_normalizer()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts: List[RunningMoments] = list(
                executor.map(lambda record: _image_moments(record, normalizer), manifest)
            )
    else:
        parts = [_image_moments(record, normalizer) for record in manifest]

    moments = RunningMoments()
    for part in parts:
        moments = moments.merge(part)
    stats = moments.to_stats()
    logger.info(
        "Channel stats over %d images / %d pixels: mean=%s std=%s",
        len(manifest),
        moments.count,
        stats.mean,
        stats.std,
    )
    return stats


__all__ = [
    "ChannelStats",
    "EmptyManifest",
    "NoValidPixels",
    "RunningMoments",
    "STD_FLOOR",
    "compute_channel_stats",
]
