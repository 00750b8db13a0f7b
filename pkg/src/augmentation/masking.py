"""Block-wise patch masks for the masked-token objective."""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

MIN_BLOCK_PATCHES = 4
BLOCK_ASPECT_RANGE = (0.3, 1 / 0.3)
BLOCK_ATTEMPTS = 10


def _place_block(mask: np.ndarray, budget: int, rng: np.random.Generator) -> int:
    """Mask one random rectangle adding at most ``budget`` new patches; returns the count added."""

    height, width = mask.shape
    log_lo, log_hi = math.log(BLOCK_ASPECT_RANGE[0]), math.log(BLOCK_ASPECT_RANGE[1])
    for _ in range(BLOCK_ATTEMPTS):
        area = rng.uniform(min(MIN_BLOCK_PATCHES, budget), budget)
        aspect = math.exp(rng.uniform(log_lo, log_hi))
        block_h = max(1, int(round(math.sqrt(area * aspect))))
        block_w = max(1, int(round(math.sqrt(area / aspect))))
        if block_h > height or block_w > width:
            continue
        top = int(rng.integers(0, height - block_h + 1))
        left = int(rng.integers(0, width - block_w + 1))
        window = mask[top : top + block_h, left : left + block_w]
        added = block_h * block_w - int(window.sum())
        if 0 < added <= budget:
            window[...] = True
            return added
    return 0


def generate_patch_mask(grid: Tuple[int, int], ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean ``grid`` mask of contiguous rectangles covering ``round(ratio * h * w)`` patches.

    Blocks never overshoot the target; any remainder the block sampler cannot
    place is filled with individual random patches.
    """

    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"mask ratio must lie in [0, 1], got {ratio}")
    height, width = int(grid[0]), int(grid[1])
    mask = np.zeros((height, width), dtype=bool)
    target = int(round(ratio * height * width))

    count = 0
    while count < target:
        added = _place_block(mask, target - count, rng)
        if added == 0:
            break
        count += added

    if count < target:
        free = np.flatnonzero(~mask.ravel())
        chosen = rng.choice(free, size=target - count, replace=False)
        mask.ravel()[chosen] = True
    return mask


__all__ = ["generate_patch_mask"]
