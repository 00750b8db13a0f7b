"""Geometric and sensor-style augmentations applied to metric depth."""

from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.depth_io.formats import DepthImage

logger = logging.getLogger(__name__)


class AugmentParams(BaseModel):
    """Probabilities and ranges for the depth augmentation menu."""

    model_config = ConfigDict(frozen=True)

    flip_prob: float = Field(0.5, ge=0.0, le=1.0)
    scale_jitter_prob: float = Field(0.5, ge=0.0, le=1.0)
    scale_range: Tuple[float, float] = (0.8, 1.25)
    noise_prob: float = Field(0.3, ge=0.0, le=1.0)
    noise_relative_sigma: float = Field(0.005, ge=0.0)
    hole_prob: float = Field(0.3, ge=0.0, le=1.0)
    hole_count: int = Field(2, ge=0)
    hole_size_range: Tuple[float, float] = (0.05, 0.25)
    stick_prob: float = Field(0.2, ge=0.0, le=1.0)
    stick_count: int = Field(3, ge=0)
    stick_length_range: Tuple[float, float] = (0.1, 0.4)

    @model_validator(mode="after")
    def _ordered_ranges(self) -> "AugmentParams":
        for name in ("scale_range", "hole_size_range", "stick_length_range"):
            low, high = getattr(self, name)
            if low > high or low < 0:
                raise ValueError(f"{name} must be an ordered nonnegative range, got {(low, high)}")
        if self.scale_range[0] <= 0:
            raise ValueError("scale_range must be strictly positive")
        if self.hole_size_range[1] > 1 or self.stick_length_range[1] > 1:
            raise ValueError("hole and stick sizes are fractions of the image side")
        return self

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls(flip_prob=0.0, scale_jitter_prob=0.0, noise_prob=0.0, hole_prob=0.0, stick_prob=0.0)


def _rebuild(depth: np.ndarray, valid: np.ndarray) -> DepthImage:
    valid = valid & np.isfinite(depth) & (depth > 0)
    return DepthImage(depth=np.where(valid, depth, 0.0).astype(np.float32), valid=valid)


def flip_horizontal(image: DepthImage) -> DepthImage:
    return DepthImage(depth=image.depth[:, ::-1].copy(), valid=image.valid[:, ::-1].copy())


def scale_depth(image: DepthImage, factor: float) -> DepthImage:
    """Global metric rescaling ``D <- s * D``; holes stay holes."""

    depth = (image.depth.astype(np.float64) * factor).astype(np.float32)
    return _rebuild(depth, image.valid.copy())


def punch_holes(image: DepthImage, rects: list[Tuple[int, int, int, int]]) -> DepthImage:
    """Invalidate each ``(top, left, height, width)`` rectangle."""

    valid = image.valid.copy()
    for top, left, height, width in rects:
        valid[top : top + height, left : left + width] = False
    return _rebuild(image.depth.copy(), valid)


def _sample_holes(shape: Tuple[int, int], params: AugmentParams, rng: np.random.Generator) -> list:
    height, width = shape
    rects = []
    for _ in range(params.hole_count):
        hole_h = max(1, int(round(rng.uniform(*params.hole_size_range) * height)))
        hole_w = max(1, int(round(rng.uniform(*params.hole_size_range) * width)))
        top = int(rng.integers(0, height - min(hole_h, height) + 1))
        left = int(rng.integers(0, width - min(hole_w, width) + 1))
        rects.append((top, left, hole_h, hole_w))
    return rects


def _stick_pixels(shape: Tuple[int, int], params: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    height, width = shape
    sticks = np.zeros(shape, dtype=bool)
    diagonal = math.hypot(height, width)
    for _ in range(params.stick_count):
        length = rng.uniform(*params.stick_length_range) * diagonal
        angle = rng.uniform(0.0, math.pi)
        row0 = rng.uniform(0, height - 1)
        col0 = rng.uniform(0, width - 1)
        steps = max(2, int(math.ceil(length)) + 1)
        rows = np.rint(row0 + np.linspace(0.0, length, steps) * math.sin(angle)).astype(int)
        cols = np.rint(col0 + np.linspace(0.0, length, steps) * math.cos(angle)).astype(int)
        inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        sticks[rows[inside], cols[inside]] = True
    return sticks


def depth_augment(image: DepthImage, params: AugmentParams, rng: np.random.Generator) -> DepthImage:
    """Apply flip, scale jitter, Gaussian noise, holes and stick noise, each independently.

    Every branch draws its coin flip even when its probability is zero so the
    random stream (and therefore the output for a given seed) does not depend on
    which branches fire.
    """

    out = image
    if rng.random() < params.flip_prob:
        out = flip_horizontal(out)

    jitter = rng.uniform(*params.scale_range)
    if rng.random() < params.scale_jitter_prob:
        out = scale_depth(out, jitter)

    if rng.random() < params.noise_prob and params.noise_relative_sigma > 0:
        depth = out.depth.astype(np.float64)
        noise = rng.standard_normal(depth.shape) * params.noise_relative_sigma * depth
        noisy = np.where(out.valid, depth + noise, 0.0)
        # Negative draws become holes rather than negative depth.
        out = _rebuild(noisy.astype(np.float32), out.valid.copy())

    if rng.random() < params.hole_prob:
        out = punch_holes(out, _sample_holes(out.shape, params, rng))

    if rng.random() < params.stick_prob:
        sticks = _stick_pixels(out.shape, params, rng)
        out = _rebuild(out.depth.copy(), out.valid & ~sticks)
    return out


__all__ = [
    "AugmentParams",
    "depth_augment",
    "flip_horizontal",
    "punch_holes",
    "scale_depth",
]
