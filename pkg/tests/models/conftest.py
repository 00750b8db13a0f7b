from __future__ import annotations

import pytest
import torch

from src.models import HeadConfig, ModelSettings, ViTConfig, build_network


@pytest.fixture
def tiny_settings() -> ModelSettings:
    return ModelSettings(
        arch="vit",
        vit=ViTConfig(patch_size=4, embed_dim=16, depth=2, heads=2, image_size=8),
        head=HeadConfig(hidden_dim=16, bottleneck_dim=8, layers=2, prototypes=8),
    )


@pytest.fixture
def tiny_network(tiny_settings):
    return build_network(tiny_settings, seed=0, dtype=torch.float64)
