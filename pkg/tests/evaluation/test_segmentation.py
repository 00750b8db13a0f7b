from __future__ import annotations

import numpy as np
import pytest
import torch

from src.depth_io import DepthImage
from src.evaluation import IGNORE_INDEX, IoUAccumulator, NoLabeledPixels, SegmentProbeConfig, compute_iou, segment_probe
from src.models import HeadConfig, ModelSettings, ViTConfig, build_network


def test_perfect_prediction():
    target = np.array([[0, 1], [1, 0]])

    assert compute_iou(target, target, 2).miou == 1.0


def test_complement_prediction():
    target = np.array([[0, 1], [1, 0]])

    assert compute_iou(1 - target, target, 2).miou == 0.0


def test_left_half_against_top_half_is_one_third():
    target = np.zeros((4, 4), dtype=np.int64)
    target[:2, :] = 1
    prediction = np.zeros((4, 4), dtype=np.int64)
    prediction[:, :2] = 1

    result = compute_iou(prediction, target, 2)

    intersection = np.count_nonzero((prediction == 1) & (target == 1))
    union = np.count_nonzero((prediction == 1) | (target == 1))
    assert result.per_class[1] == pytest.approx(intersection / union)
    assert result.per_class[1] == pytest.approx(1 / 3)


def test_ignored_pixels_never_count():
    target = np.array([[0, 1], [IGNORE_INDEX, IGNORE_INDEX]])
    prediction = np.array([[0, 1], [1, 0]])

    assert compute_iou(prediction, target, 2).miou == 1.0


def test_relabeling_classes_permutes_iou():
    rng = np.random.default_rng(0)
    target = rng.integers(0, 3, size=(8, 8))
    prediction = rng.integers(0, 3, size=(8, 8))
    mapping = np.array([2, 0, 1])

    original = compute_iou(prediction, target, 3)
    relabeled = compute_iou(mapping[prediction], mapping[target], 3)

    assert relabeled.miou == pytest.approx(original.miou)
    for cls, value in original.per_class.items():
        assert relabeled.per_class[int(mapping[cls])] == pytest.approx(value)


def test_absent_classes_are_not_averaged():
    target = np.zeros((2, 2), dtype=np.int64)

    result = compute_iou(np.zeros((2, 2), dtype=np.int64), target, 3)

    assert result.per_class == {0: 1.0}


def test_accumulates_over_images():
    accumulator = IoUAccumulator(2)
    accumulator.update(np.array([[1, 1]]), np.array([[1, 0]]))
    accumulator.update(np.array([[1, 0]]), np.array([[1, 0]]))

    assert accumulator.result().per_class[1] == pytest.approx(2 / 3)


def test_all_ignored():
    with pytest.raises(NoLabeledPixels):
        compute_iou(np.zeros((2, 2)), np.full((2, 2), IGNORE_INDEX), 2)


def _scene(rng, size: int = 16):
    depth = np.full((size, size), 4.0)
    labels = np.zeros((size, size), dtype=np.uint8)
    row, col = rng.integers(2, size - 8, size=2)
    depth[row : row + 6, col : col + 6] = 1.5
    labels[row : row + 6, col : col + 6] = 1
    return DepthImage.from_array(depth), labels


def test_segment_probe_runs_on_frozen_tokens():
    rng = np.random.default_rng(0)
    settings = ModelSettings(
        vit=ViTConfig(patch_size=4, embed_dim=16, depth=1, heads=2, image_size=16),
        head=HeadConfig(hidden_dim=16, bottleneck_dim=8, layers=2, prototypes=8),
    )
    network = build_network(settings, seed=0, dtype=torch.float64)
    before = {name: value.clone() for name, value in network.model_params().items()}
    train = [_scene(rng) for _ in range(4)]
    val = [_scene(rng) for _ in range(2)]

    result = segment_probe(network, train, val, None, SegmentProbeConfig(num_classes=2, epochs=20), size=16)

    assert 0.0 <= result.miou <= 1.0
    assert set(result.iou.per_class) == {0, 1}
    assert result.weight.shape == (2, 16)
    for name, value in network.model_params().items():
        assert torch.equal(value, before[name])
