import json

import pytest
import torch

from src.harness import MetricsWriter, RunLayout, torch_dtype


def test_layout_paths_and_latest_checkpoint(tmp_path):
    layout = RunLayout(tmp_path / "run")
    assert layout.latest_checkpoint() is None

    layout.ensure()
    for name in ("step_2.dfmc", "step_10.dfmc", "cnn_small_step_40.dfmc", "step_3.dfmc.tmp"):
        (layout.checkpoints / name).write_bytes(b"")

    assert layout.checkpoint_path(7) == tmp_path / "run" / "checkpoints" / "step_7.dfmc"
    assert layout.checkpoint_path(7, prefix="cnn_small") == layout.checkpoints / "cnn_small_7.dfmc"
    assert layout.latest_checkpoint() == layout.checkpoints / "step_10.dfmc"
    assert layout.reports.is_dir() and layout.logs.is_dir()


def test_metrics_writer_truncates_on_resume(tmp_path):
    path = tmp_path / "metrics.log"
    with MetricsWriter(path, {"mode": "pretrain"}) as writer:
        for step in range(4):
            writer.write({"step": step, "loss_total": float(step)})

    with MetricsWriter(path, {"mode": "ignored"}, resume_step=2) as writer:
        writer.write({"step": 2, "loss_total": 9.0})

    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert records[0] == {"kind": "header", "mode": "pretrain"}
    assert [record["step"] for record in records[1:]] == [0, 1, 2]
    assert records[-1]["loss_total"] == 9.0


def test_fresh_writer_replaces_an_old_log(tmp_path):
    path = tmp_path / "metrics.log"
    path.write_text('{"kind": "step", "step": 0}\n')

    MetricsWriter(path, {"mode": "distill"}).close()

    assert path.read_text() == '{"kind": "header", "mode": "distill"}\n'


def test_torch_dtype():
    assert torch_dtype("float64") is torch.float64
    with pytest.raises(ValueError):
        torch_dtype("float16")
