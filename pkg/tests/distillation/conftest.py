from __future__ import annotations

import pytest
import torch

from src.augmentation import AugmentParams, CropConfig
from src.distillation import DistillConfig, StudentConfig
from src.models import CNNConfig, HeadConfig, ModelSettings, ViTConfig, build_network, flatten_groups, save_checkpoint
from src.objectives import Schedules

HEAD = HeadConfig(hidden_dim=16, bottleneck_dim=8, layers=2, prototypes=8)
TEACHER_SETTINGS = ModelSettings(
    vit=ViTConfig(patch_size=4, embed_dim=16, depth=1, heads=2, image_size=16),
    head=HEAD,
)
CNN_STUDENT = StudentConfig(
    name="cnn_small",
    model=ModelSettings(
        arch="cnn",
        cnn=CNNConfig(stem_channels=8, stage_channels=(8, 8, 16, 16), fpn_channels=16, fpn_layers=1, norm_groups=4),
        head=HEAD,
    ),
)
VIT_STUDENT = StudentConfig(
    name="vit_tiny",
    model=ModelSettings(vit=ViTConfig(patch_size=4, embed_dim=8, depth=1, heads=2, image_size=16), head=HEAD),
)


@pytest.fixture
def teacher_checkpoint(tmp_path):
    network = build_network(TEACHER_SETTINGS, seed=7)
    return save_checkpoint(
        tmp_path / "teacher.dfmc",
        flatten_groups({"teacher": network.model_params()}),
        {"step": 10, "model": TEACHER_SETTINGS.model_dump(mode="json")},
    )


@pytest.fixture
def distill_config(teacher_checkpoint):
    def _make(total_steps: int = 2, students=(CNN_STUDENT,), **overrides) -> DistillConfig:
        values = {
            "teacher_checkpoint": str(teacher_checkpoint),
            "students": list(students),
            "teacher_crop_size": 16,
            "cnn_student_crop_size": 64,
            "cnn_local_crop_size": 32,
            "crops": CropConfig(global_size=16, local_size=8, patch_size=4, local_count=2),
            "augment": AugmentParams(),
            "schedules": Schedules(peak_lr=1e-3, warmup_steps=min(1, total_steps), total_steps=total_steps),
            "batch_size": 2,
            "checkpoint_every": 10,
            "prefetch": 0,
        }
        values.update(overrides)
        return DistillConfig(**values)

    return _make


def random_views(count: int = 3, size: int = 16) -> torch.Tensor:
    return torch.randn(count, 3, size, size, generator=torch.Generator().manual_seed(0))


@pytest.fixture
def cnn_student() -> StudentConfig:
    return CNN_STUDENT


@pytest.fixture
def vit_student() -> StudentConfig:
    return VIT_STUDENT


@pytest.fixture
def agreement_views() -> torch.Tensor:
    return random_views()
