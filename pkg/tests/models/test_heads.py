from __future__ import annotations

import pytest
import torch

from src.models import HeadConfig, ProjectionHead, ShapeMismatch, head_forward


def _head(**overrides) -> ProjectionHead:
    torch.manual_seed(0)
    return ProjectionHead(16, HeadConfig(**{"hidden_dim": 16, "bottleneck_dim": 8, "prototypes": 8, **overrides}))


def test_k_logits_per_embedding():
    logits = head_forward(_head(), torch.randn(4, 16))

    assert logits.shape == (4, 8)


def test_identical_embeddings_identical_logits():
    head = _head()
    embedding = torch.randn(1, 16)

    logits = head_forward(head, torch.cat([embedding, embedding]))

    assert torch.equal(logits[0], logits[1])


def test_last_layer_gain_is_frozen_by_default():
    head = _head()

    gain = head.last_layer.parametrizations.weight.original0
    assert not gain.requires_grad
    assert torch.all(gain == 1.0)
    assert _head(norm_last_layer=False).last_layer.parametrizations.weight.original0.requires_grad


def test_width_mismatch():
    with pytest.raises(ShapeMismatch):
        head_forward(_head(), torch.randn(2, 12))


def test_prototype_count_must_exceed_one():
    with pytest.raises(ValueError):
        HeadConfig(prototypes=1)
