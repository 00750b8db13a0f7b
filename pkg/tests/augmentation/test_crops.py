from __future__ import annotations

import numpy as np
import pytest
import torch

from src.augmentation import (
    AugmentParams,
    CropBatch,
    CropConfig,
    ImageTooSmall,
    multi_crop,
    resize_depth,
)
from src.depth_io import DepthImage
from src.normalization import normalize


def _ramp(size: int) -> DepthImage:
    rows = np.linspace(0.5, 6.0, size, dtype=np.float32)
    return DepthImage.from_array(np.tile(rows[:, None], (1, size)))


def test_default_views_give_sixteen_and_seven_wide_grids():
    cfg = CropConfig()

    crops = multi_crop(_ramp(256), cfg, None, np.random.default_rng(0))

    assert cfg.global_grid == (16, 16)
    assert cfg.local_grid == (7, 7)
    assert len(crops.globals) == 2 and len(crops.locals) == 8
    assert crops.globals[0].channels.shape == (3, 224, 224)
    assert crops.locals[0].channels.shape == (3, 98, 98)
    assert crops.masks[0].shape == (16, 16)
    assert not any(mask.any() for mask in crops.local_masks)


def test_identity_settings_reproduce_normalized_image():
    cfg = CropConfig(
        global_size=28,
        local_size=14,
        patch_size=14,
        local_count=0,
        global_scale=(1.0, 1.0),
        aspect_ratio_range=(1.0, 1.0),
    )
    image = _ramp(28)

    crops = multi_crop(image, cfg, None, np.random.default_rng(5), AugmentParams.identity())

    expected = normalize(image).channels
    for view in crops.globals:
        np.testing.assert_array_equal(view.channels, expected)


def test_size_must_be_patch_multiple():
    with pytest.raises(ValueError):
        CropConfig(global_size=100, patch_size=14)


def test_small_image_without_upsampling_raises():
    cfg = CropConfig(global_size=28, local_size=14, patch_size=14, upsample_small=False)

    with pytest.raises(ImageTooSmall):
        multi_crop(_ramp(10), cfg, None, np.random.default_rng(0))


def test_small_image_is_upsampled():
    cfg = CropConfig(global_size=28, local_size=14, patch_size=14, local_count=2)

    crops = multi_crop(_ramp(10), cfg, None, np.random.default_rng(0))

    assert crops.globals[0].channels.shape == (3, 28, 28)


def test_resize_ignores_holes():
    depth = np.full((4, 4), 2.0, dtype=np.float32)
    depth[:, :2] = 0.0
    image = DepthImage.from_array(depth)

    resized = resize_depth(image, 2, 2)

    assert resized.valid.tolist() == [[False, True], [False, True]]
    assert resized.depth[0, 1] == pytest.approx(2.0)


def test_collate_is_view_major():
    cfg = CropConfig(global_size=28, local_size=14, patch_size=14, local_count=3)
    rng = np.random.default_rng(1)
    crop_sets = [multi_crop(_ramp(32), cfg, None, rng) for _ in range(4)]

    batch = CropBatch.collate(crop_sets, torch.float64)

    assert batch.globals.shape == (2, 4, 3, 28, 28)
    assert batch.locals.shape == (3, 4, 3, 14, 14)
    assert batch.masks.shape == (2, 4, 2, 2)
    assert batch.globals.dtype == torch.float64
    assert (batch.global_count, batch.local_count, batch.batch_size) == (2, 3, 4)
    torch.testing.assert_close(batch.globals[1, 2], crop_sets[2].globals[1].to_tensor(torch.float64))


def test_scale_jitter_acts_on_meters_before_normalization():
    factor, depth = 1.5, 2.0
    cfg = CropConfig(global_size=16, local_size=8, patch_size=4, local_count=2)
    augment = AugmentParams.identity().model_copy(update={"scale_jitter_prob": 1.0, "scale_range": (factor, factor)})
    image = DepthImage.from_array(np.full((32, 32), depth, dtype=np.float32))

    crops = multi_crop(image, cfg, None, np.random.default_rng(3), augment)

    expected = np.log1p(factor * depth) / np.log1p(10.0)
    for view in crops.globals + crops.locals:
        np.testing.assert_allclose(view.channels[1], expected, rtol=1e-6)
        np.testing.assert_allclose(view.channels[2], np.log1p(factor * depth) / np.log1p(100.0), rtol=1e-6)


def test_same_seed_gives_identical_crop_sets():
    cfg = CropConfig(global_size=16, local_size=8, patch_size=4, local_count=3, mask_sample_prob=1.0)
    image = _ramp(40)

    first = multi_crop(image, cfg, None, np.random.default_rng(11))
    second = multi_crop(image, cfg, None, np.random.default_rng(11))
    other = multi_crop(image, cfg, None, np.random.default_rng(12))

    for a, b in zip(first.globals + first.locals, second.globals + second.locals):
        np.testing.assert_array_equal(a.channels, b.channels)
        np.testing.assert_array_equal(a.valid, b.valid)
    for a, b in zip(first.masks, second.masks):
        np.testing.assert_array_equal(a, b)
    assert any(
        not np.array_equal(a.channels, b.channels) for a, b in zip(first.globals + first.locals, other.globals + other.locals)
    )
