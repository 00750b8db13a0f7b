from __future__ import annotations

import numpy as np
import pytest
import torch

from src.evaluation import EvaluationError, FeatureSet, extract_features
from src.evaluation.features import prepare_input
from src.models import HeadConfig, ModelSettings, ViTConfig, build_network


@pytest.fixture
def network():
    settings = ModelSettings(
        vit=ViTConfig(patch_size=4, embed_dim=16, depth=1, heads=2, image_size=16),
        head=HeadConfig(hidden_dim=16, bottleneck_dim=8, layers=2, prototypes=8),
    )
    return build_network(settings, seed=0, dtype=torch.float64)


def test_extracts_one_vector_per_record(depth_manifest, network):
    records = depth_manifest(count=5, labels=2)

    features = extract_features(network, records, None, size=16, batch_size=2, keep_patches=True)

    assert features.embeddings.shape == (5, 16)
    assert features.labels.tolist() == [0, 1, 0, 1, 0]
    assert features.patches.shape == (5, 16, 16)
    assert features.grid == (4, 4)


def test_batching_and_workers_do_not_change_features(depth_manifest, network):
    records = depth_manifest(count=5)

    serial = extract_features(network, records, None, size=16, batch_size=5)
    batched = extract_features(network, records, None, size=16, batch_size=2, workers=2)

    np.testing.assert_allclose(serial.embeddings, batched.embeddings, atol=1e-12)
    assert serial.labels is None


def test_minmax_baseline_input(depth_manifest):
    image = depth_manifest(count=1)[0].load()

    array = prepare_input(image, 16, None, "minmax")

    assert array.shape == (3, 16, 16)
    assert array.min() >= 0.0 and array.max() <= 1.0


def test_feature_set_validation():
    with pytest.raises(EvaluationError):
        FeatureSet(np.ones((3, 2)), np.array([0, 1]))
    with pytest.raises(EvaluationError):
        FeatureSet(np.ones((2, 2)), np.array([0, -1]))
    with pytest.raises(EvaluationError):
        extract_features(None, [], None, size=16)
