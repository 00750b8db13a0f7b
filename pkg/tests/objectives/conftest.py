from __future__ import annotations

import pytest

from src.augmentation import AugmentParams, CropConfig
from src.depth_io import ChannelStats
from src.models import HeadConfig, ModelSettings, ViTConfig
from src.objectives import PretrainConfig, Schedules


@pytest.fixture
def tiny_pretrain_config():
    def _make(total_steps: int = 3, *, momentum=(0.994, 1.0), **overrides) -> PretrainConfig:
        values = {
            "model": ModelSettings(
                vit=ViTConfig(patch_size=4, embed_dim=16, depth=1, heads=2, image_size=16),
                head=HeadConfig(hidden_dim=16, bottleneck_dim=8, layers=2, prototypes=8),
            ),
            "crops": CropConfig(global_size=16, local_size=8, patch_size=4, local_count=2),
            "augment": AugmentParams(),
            "schedules": Schedules(
                peak_lr=1e-3,
                warmup_steps=min(1, total_steps),
                total_steps=total_steps,
                momentum=momentum,
            ),
            "batch_size": 2,
            "checkpoint_every": 2,
            "prefetch": 0,
        }
        values.update(overrides)
        return PretrainConfig(**values)

    return _make


@pytest.fixture
def channel_stats() -> ChannelStats:
    return ChannelStats(mean=(0.5, 0.4, 0.2), std=(0.3, 0.2, 0.1))
