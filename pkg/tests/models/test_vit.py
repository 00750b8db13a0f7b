from __future__ import annotations

import pytest
import torch

from src.models import ShapeMismatch, ViTConfig, VisionTransformer, vit_forward


def _vit(**overrides) -> VisionTransformer:
    torch.manual_seed(0)
    config = ViTConfig(**{"embed_dim": 16, "depth": 1, "heads": 2, **overrides})
    return VisionTransformer(config).double()


def test_224_input_gives_sixteen_by_sixteen_tokens():
    output = _vit()(torch.randn(1, 3, 224, 224, dtype=torch.float64))

    assert output.grid == (16, 16)
    assert output.patches.shape == (1, 256, 16)
    assert output.cls.shape == (1, 16)


def test_local_crop_uses_interpolated_positions():
    output = _vit()(torch.randn(2, 3, 98, 98, dtype=torch.float64))

    assert output.grid == (7, 7)
    assert output.patches.shape == (2, 49, 16)
    assert output.patch_grid().shape == (2, 16, 7, 7)


def test_fully_masked_input_stays_finite_and_position_dependent():
    model = _vit(image_size=28)
    mask = torch.ones(1, 2, 2, dtype=torch.bool)

    output = model(torch.randn(1, 3, 28, 28, dtype=torch.float64), mask)

    assert torch.isfinite(output.patches).all()
    assert not torch.allclose(output.patches[0, 0], output.patches[0, 1])


def test_mask_replaces_token_content():
    model = _vit(image_size=28)
    x = torch.randn(1, 3, 28, 28, dtype=torch.float64)
    mask = torch.zeros(1, 2, 2, dtype=torch.bool)
    mask[0, 0, 0] = True

    plain = model(x).patches
    masked = model(x, mask).patches

    assert not torch.allclose(plain, masked)


def test_unbatched_view_and_two_dimensional_mask():
    model = _vit(image_size=28)

    output = vit_forward(model, torch.randn(3, 28, 28, dtype=torch.float64), torch.zeros(2, 2, dtype=torch.bool))

    assert output.patches.shape == (1, 4, 16)


@pytest.mark.parametrize(
    "shape",
    [(1, 1, 28, 28), (1, 3, 30, 28)],
)
def test_bad_inputs_raise(shape):
    with pytest.raises(ShapeMismatch):
        _vit(image_size=28)(torch.randn(*shape, dtype=torch.float64))


def test_mask_shape_must_match_grid():
    with pytest.raises(ShapeMismatch):
        _vit(image_size=28)(torch.randn(1, 3, 28, 28, dtype=torch.float64), torch.zeros(1, 3, 3, dtype=torch.bool))


def test_config_validation():
    with pytest.raises(ValueError):
        ViTConfig(embed_dim=10, heads=3)
    with pytest.raises(ValueError):
        ViTConfig(image_size=100, patch_size=14)
