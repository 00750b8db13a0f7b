from __future__ import annotations

import pytest
import torch

from src.models import (
    CorruptCheckpoint,
    build_network,
    decode_checkpoint,
    encode_checkpoint,
    flatten_groups,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
    tensor_fingerprint,
)
from src.models.checkpoint import CheckpointError, UnsupportedDtype


def test_network_round_trip_is_bit_exact(tmp_path, tiny_network, tiny_settings):
    tensors = flatten_groups({"model": tiny_network.model_params()})
    path = save_checkpoint(
        tmp_path / "net.dfmc", tensors, {"step": 7, "model": tiny_settings.model_dump(mode="json")}
    )

    checkpoint = load_checkpoint(path)

    assert checkpoint.step == 7
    assert checkpoint.groups == ["model"]
    assert set(checkpoint.tensors) == set(tensors)
    for name, tensor in tensors.items():
        assert checkpoint.tensors[name].dtype == tensor.dtype
        assert torch.equal(checkpoint.tensors[name], tensor)
    assert tensor_fingerprint(checkpoint.tensors) == tensor_fingerprint(tensors)

    restored = network_from_checkpoint(path, dtype=torch.float64)
    x = torch.randn(2, 3, 8, 8, dtype=torch.float64)
    assert torch.equal(restored.encode(x).cls, tiny_network.encode(x).cls)


def test_mixed_dtypes_and_scalars():
    tensors = {
        "a": torch.arange(6, dtype=torch.int64).reshape(2, 3),
        "b": torch.tensor(1.5, dtype=torch.float32),
        "c": torch.randn(4, dtype=torch.float64),
    }

    decoded = decode_checkpoint(encode_checkpoint(tensors, {"kind": "test"}))

    assert decoded.metadata == {"kind": "test"}
    for name, tensor in tensors.items():
        assert torch.equal(decoded.tensors[name], tensor)


def test_unsupported_dtype():
    with pytest.raises(UnsupportedDtype):
        encode_checkpoint({"x": torch.zeros(2, dtype=torch.float16)}, {})


def test_corrupted_bytes(tmp_path):
    data = encode_checkpoint({"x": torch.zeros(3)}, {})

    with pytest.raises(CorruptCheckpoint):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(CorruptCheckpoint):
        decode_checkpoint(data[:-4])


def test_checkpoint_without_model_settings(tmp_path):
    path = save_checkpoint(tmp_path / "bare.dfmc", {"model/x": torch.zeros(1)}, {})

    with pytest.raises(CheckpointError):
        network_from_checkpoint(path)


def test_fingerprint_changes_with_content():
    base = {"x": torch.zeros(3)}

    assert tensor_fingerprint(base) != tensor_fingerprint({"x": torch.ones(3)})
    assert tensor_fingerprint(base) == tensor_fingerprint({"x": torch.zeros(3)})


def test_network_group_preference(tmp_path, tiny_settings):
    student = build_network(tiny_settings, seed=0, dtype=torch.float64)
    teacher = build_network(tiny_settings, seed=1, dtype=torch.float64)
    path = save_checkpoint(
        tmp_path / "pair.dfmc",
        flatten_groups({"student": student.model_params(), "teacher": teacher.model_params()}),
        {"model": tiny_settings.model_dump(mode="json")},
    )

    loaded = network_from_checkpoint(path, dtype=torch.float64)
    explicit = network_from_checkpoint(path, group="student", dtype=torch.float64)

    assert torch.equal(loaded.backbone.cls_token, teacher.backbone.cls_token)
    assert torch.equal(explicit.backbone.cls_token, student.backbone.cls_token)
