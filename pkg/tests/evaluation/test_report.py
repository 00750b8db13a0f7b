from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

from src.evaluation import EvalReport, load_metrics, smoothed_loss


def test_report_round_trip(tmp_path):
    report = EvalReport(task="knn", metrics={"top1": 0.75, "top5": 1.0}, config_fingerprint="f00", details={"k": 20})

    path = report.save(tmp_path / "reports")

    assert path.name == "knn.json"
    assert EvalReport.load(path) == report


@pytest.mark.parametrize("metrics", [{"top1": 1.2}, {"miou": -0.1}, {"iou_2": 2.0}])
def test_unit_interval_metrics_are_checked(metrics):
    with pytest.raises(ValidationError):
        EvalReport(task="x", metrics=metrics)


def test_unbounded_metrics_are_allowed():
    assert EvalReport(task="bench", metrics={"mean_ms": 12.5, "flops": 3e9}).metrics["flops"] == 3e9


def _write_log(path, records):
    lines = [json.dumps({"kind": "header", "mode": "distill"})]
    lines += [json.dumps({"kind": "step", **record}) for record in records]
    path.write_text("\n".join(lines) + "\n")


def test_load_metrics_filters_students(tmp_path):
    log = tmp_path / "metrics.log"
    _write_log(
        log,
        [
            {"step": 0, "student": "a", "loss_total": 4.0},
            {"step": 0, "student": "b", "loss_total": 9.0},
            {"step": 1, "student": "a", "loss_total": 2.0},
        ],
    )

    frame = load_metrics(log, student="a")

    assert list(frame.index) == [0, 1]
    assert list(frame["loss_total"]) == [4.0, 2.0]


def test_smoothed_loss_is_a_trailing_mean(tmp_path):
    log = tmp_path / "metrics.log"
    _write_log(log, [{"step": step, "loss_total": float(value)} for step, value in enumerate([6, 4, 2, 0])])

    smoothed = smoothed_loss(load_metrics(log), window=2)

    assert list(smoothed) == [6.0, 5.0, 3.0, 1.0]


def test_header_only_log(tmp_path):
    log = tmp_path / "metrics.log"
    _write_log(log, [])

    assert load_metrics(log).empty
