"""Seeded batch assembly and a bounded prefetch queue for training loops."""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, Deque, Iterator, Optional, Sequence

import numpy as np
import torch

from src.depth_io.formats import DepthImage, load_depth
from src.depth_io.manifest import ManifestRecord, MixtureSpec, present_mixture, sample_batch
from src.depth_io.stats import ChannelStats

from .crops import CropBatch, CropConfig, multi_crop
from .depth_noise import AugmentParams

logger = logging.getLogger(__name__)


@lru_cache(maxsize=4096)
def _cached_depth(path: str) -> DepthImage:
    return load_depth(path)


class BatchBuilder:
    """Builds the crop batch for a given step from ``(seed, step)`` alone.

    Because every step owns its random streams, batches can be produced out of
    order by worker threads and a resumed run sees the same batches.
    """

    def __init__(
        self,
        manifest: Sequence[ManifestRecord],
        crops: CropConfig,
        augment: AugmentParams,
        stats: Optional[ChannelStats],
        batch_size: int,
        seed: int,
        mixture: Optional[MixtureSpec] = None,
        dtype: torch.dtype = torch.float32,
    ):
        self.manifest = list(manifest)
        self.crops = crops
        self.augment = augment
        self.stats = stats
        self.batch_size = batch_size
        self.seed = seed
        self.mixture = mixture or present_mixture(self.manifest)
        self.dtype = dtype

    def records(self, step: int) -> list[ManifestRecord]:
        return sample_batch(self.manifest, self.mixture, self.batch_size, rng_seed=[self.seed, step, 0])

    def __call__(self, step: int) -> CropBatch:
        rng = np.random.default_rng([self.seed, step, 1])
        crop_sets = [
            multi_crop(_cached_depth(record.path), self.crops, self.stats, rng, self.augment)
            for record in self.records(step)
        ]
        return CropBatch.collate(crop_sets, self.dtype)


def prefetch_batches(
    make_batch: Callable[[int], CropBatch],
    start: int,
    stop: int,
    *,
    workers: int = 1,
    depth: int = 2,
) -> Iterator[CropBatch]:
    """Yield ``make_batch(step)`` for ``start <= step < stop`` in step order.

    With ``depth == 0`` batches are built inline; otherwise at most ``depth``
    batches are in flight on a pool of ``workers`` threads.
    """

    if depth <= 0:
        for step in range(start, stop):
            yield make_batch(step)
        return

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        pending: Deque[Future] = deque()
        next_step = start
        while next_step < stop and len(pending) < depth:
            pending.append(executor.submit(make_batch, next_step))
            next_step += 1
        while pending:
            batch = pending.popleft().result()
            if next_step < stop:
                pending.append(executor.submit(make_batch, next_step))
                next_step += 1
            yield batch


__all__ = ["BatchBuilder", "prefetch_batches"]
