from __future__ import annotations

import json

import pytest
import torch

from src.models import load_checkpoint, network_from_checkpoint, tensor_fingerprint
from src.objectives import MissingStats, ResumeMismatch, pretrain


def test_zero_steps_writes_only_the_initial_checkpoint(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    result = pretrain(tiny_pretrain_config(total_steps=0), depth_manifest(), tmp_path, channel_stats)

    assert [path.name for path in (tmp_path / "checkpoints").iterdir()] == ["step_0.dfmc"]
    lines = result.metrics_path.read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["kind"] == "header"


def test_metrics_and_checkpoints(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    result = pretrain(tiny_pretrain_config(), depth_manifest(), tmp_path, channel_stats, config_fingerprint="abc")

    records = [json.loads(line) for line in result.metrics_path.read_text().splitlines()]
    assert records[0] == {"kind": "header", "mode": "pretrain", "config_fingerprint": "abc", "total_steps": 3}
    assert [record["step"] for record in records[1:]] == [0, 1, 2]
    for record in records[1:]:
        assert {"lr", "wd", "momentum", "loss_total", "loss_global", "loss_local", "loss_ibot", "loss_koleo"} <= set(record)
    assert records[1]["lr"] == 0.0
    names = sorted(path.name for path in (tmp_path / "checkpoints").iterdir())
    assert names == ["step_0.dfmc", "step_2.dfmc", "step_3.dfmc"]
    assert result.final_checkpoint.name == "step_3.dfmc"

    checkpoint = load_checkpoint(result.final_checkpoint)
    assert checkpoint.step == 3
    assert {"student", "teacher", "optim"} <= set(checkpoint.groups)
    assert network_from_checkpoint(checkpoint).arch == "vit"


def test_teacher_gets_only_the_ema_update(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    config = tiny_pretrain_config(total_steps=1, momentum=(0.5, 0.5))

    result = pretrain(config, depth_manifest(), tmp_path, channel_stats)

    initial = load_checkpoint(tmp_path / "checkpoints" / "step_0.dfmc")
    final = load_checkpoint(result.final_checkpoint)
    teacher0, student1, teacher1 = initial.group("teacher"), final.group("student"), final.group("teacher")
    for name, value in teacher1.items():
        expected = 0.5 * teacher0[name] + 0.5 * student1[name]
        torch.testing.assert_close(value, expected, rtol=1e-6, atol=1e-7)


def test_deterministic_runs_write_identical_metrics(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    records = depth_manifest()
    first = pretrain(tiny_pretrain_config(), records, tmp_path / "a", channel_stats)
    second = pretrain(tiny_pretrain_config(), records, tmp_path / "b", channel_stats)

    assert first.metrics_path.read_bytes() == second.metrics_path.read_bytes()
    assert tensor_fingerprint(load_checkpoint(first.final_checkpoint).tensors) == tensor_fingerprint(
        load_checkpoint(second.final_checkpoint).tensors
    )


def test_resume_continues_bit_exactly(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    records = depth_manifest()
    config = tiny_pretrain_config(total_steps=4)
    straight = pretrain(config, records, tmp_path / "straight", channel_stats)

    resumed_dir = tmp_path / "resumed"
    pretrain(config, records, resumed_dir, channel_stats)
    (resumed_dir / "checkpoints" / "step_4.dfmc").unlink()
    resumed = pretrain(config, records, resumed_dir, channel_stats)

    assert resumed.metrics_path.read_bytes() == straight.metrics_path.read_bytes()
    assert tensor_fingerprint(load_checkpoint(resumed.final_checkpoint).group("student")) == tensor_fingerprint(
        load_checkpoint(straight.final_checkpoint).group("student")
    )


def test_resume_rejects_a_different_model(tmp_path, depth_manifest, tiny_pretrain_config, channel_stats):
    records = depth_manifest()
    pretrain(tiny_pretrain_config(total_steps=2), records, tmp_path, channel_stats)
    base = tiny_pretrain_config(total_steps=2)
    wider = base.model.model_copy(update={"head": base.model.head.model_copy(update={"prototypes": 16})})
    other = base.model_copy(update={"model": wider})

    with pytest.raises(ResumeMismatch):
        pretrain(other, records, tmp_path, channel_stats)


def test_pretraining_requires_a_vit(tiny_pretrain_config):
    with pytest.raises(ValueError):
        tiny_pretrain_config(model={"arch": "cnn"})


def test_pretraining_requires_channel_stats(tmp_path, depth_manifest, tiny_pretrain_config):
    with pytest.raises(MissingStats, match="stats"):
        pretrain(tiny_pretrain_config(), depth_manifest(), tmp_path, None)

    assert not (tmp_path / "checkpoints").exists()
