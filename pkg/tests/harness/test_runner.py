import json

import pytest

from src.config import load_run_config, reset_settings_cache
from src.depth_io import ChannelStats, write_manifest
from src.errors import PathMissing
from src.evaluation import EvalReport
from src.harness.runner import STATS_FILENAME, run

TINY_MODEL = [
    "model.vit.patch_size=4",
    "model.vit.embed_dim=16",
    "model.vit.depth=1",
    "model.vit.heads=2",
    "model.vit.image_size=16",
    "model.head.hidden_dim=16",
    "model.head.bottleneck_dim=8",
    "model.head.layers=2",
    "model.head.prototypes=8",
    "crops.global_size=16",
    "crops.local_size=8",
    "crops.patch_size=4",
    "crops.local_count=2",
]


@pytest.fixture(autouse=True)
def clear_settings_cache(monkeypatch):
    monkeypatch.delenv("DEFM_WORKERS", raising=False)
    reset_settings_cache()
    yield
    reset_settings_cache()


@pytest.fixture(scope="module")
def pretrained_run(tmp_path_factory):
    """Toy dataset, its channel statistics and a two-step tiny pretraining run shared by the evaluation modes."""

    root = tmp_path_factory.mktemp("e2e")
    reset_settings_cache()
    toy = run(
        load_run_config(
            overrides=[f"output_dir={root / 'toy'}", "toy.count=6", "toy.val_count=3", "toy.size=32"],
            mode="gen_toy",
        )
    )
    data = [f"data.manifest={toy.artifacts['train_manifest']}", f"data.val_manifest={toy.artifacts['val_manifest']}"]
    stats = run(load_run_config(overrides=[f"output_dir={root / 'stats'}", *data], mode="stats"))
    data.append(f"data.stats={stats.artifacts['stats']}")
    pretrained = run(
        load_run_config(
            overrides=[
                f"output_dir={root / 'pretrain'}",
                *data,
                *TINY_MODEL,
                "schedules.total_steps=2",
                "schedules.warmup_steps=1",
                "pretrain.batch_size=2",
                "pretrain.checkpoint_every=2",
                "pretrain.prefetch=0",
            ],
            mode="pretrain",
        )
    )
    return root, data, pretrained


def _evaluate(pretrained_run, mode, *extra):
    root, data, pretrained = pretrained_run
    overrides = [
        f"output_dir={root / mode}",
        *data,
        f"eval.checkpoint={pretrained.artifacts['checkpoint']}",
        "eval.size=16",
        "crops.global_size=16",
        "crops.local_size=8",
        "crops.patch_size=4",
        *extra,
    ]
    return run(load_run_config(overrides=overrides, mode=mode))


def test_stats_mode_writes_channel_statistics(tmp_path, depth_manifest):
    manifest = write_manifest(depth_manifest(count=3), tmp_path / "train.jsonl")
    config = load_run_config(overrides=[f"output_dir={tmp_path / 'run'}", f"data.manifest={manifest}"], mode="stats")

    result = run(config)

    target = tmp_path / "run" / STATS_FILENAME
    assert result.artifacts == {"stats": target}
    stats = ChannelStats.load(target)
    assert all(value > 0 for value in stats.std)
    assert (tmp_path / "run" / "config.snapshot").read_text().startswith("augment:")


def test_pretrain_mode_reports_its_checkpoint(pretrained_run):
    root, _, pretrained = pretrained_run

    assert pretrained.artifacts["checkpoint"].name == "step_2.dfmc"
    report = EvalReport.load(root / "pretrain" / "reports" / "pretrain.json")
    assert report.metrics["steps"] == 2.0
    assert report.config_fingerprint == pretrained.fingerprint
    records = [json.loads(line) for line in pretrained.artifacts["metrics"].read_text().splitlines()]
    assert records[0]["config_fingerprint"] == pretrained.fingerprint


def test_pretrain_mode_needs_a_stats_file(tmp_path, depth_manifest):
    manifest = write_manifest(depth_manifest(count=3), tmp_path / "train.jsonl")
    config = load_run_config(
        overrides=[f"output_dir={tmp_path / 'run'}", f"data.manifest={manifest}", *TINY_MODEL], mode="pretrain"
    )

    with pytest.raises(PathMissing, match="data.stats"):
        run(config)

    assert not list((tmp_path / "run" / "checkpoints").glob("*.dfmc"))


def test_knn_mode(pretrained_run):
    result = _evaluate(pretrained_run, "knn", "eval.knn.k=3")

    assert 0.0 <= result.report.metrics["top1"] <= result.report.metrics["top5"] <= 1.0
    assert result.report.details["train_size"] == 6
    assert result.report.details["test_size"] == 3


def test_probe_mode(pretrained_run):
    result = _evaluate(pretrained_run, "probe", "eval.probe.epochs=5")

    assert 0.0 <= result.report.metrics["linear_acc"] <= 1.0
    assert result.report.metrics["best_lr"] in (1e-3, 1e-2, 1e-1)


def test_segment_mode(pretrained_run):
    result = _evaluate(pretrained_run, "segment", "eval.segment.epochs=3")

    assert 0.0 <= result.report.metrics["miou"] <= 1.0


def test_pca_viz_mode(pretrained_run):
    result = _evaluate(pretrained_run, "pca_viz", "eval.pca.images=2", "eval.pca.scale=1")

    assert sorted(result.artifacts) == ["pca_0", "pca_1"]
    header = result.artifacts["pca_0"].read_bytes().split(b"\n")[:3]
    assert header == [b"P6", b"4 4", b"255"]


def test_bench_mode(pretrained_run):
    result = _evaluate(pretrained_run, "bench", "eval.bench.repetitions=2", "eval.bench.warmup=0")

    metrics = result.report.metrics
    assert metrics["parameters"] > 0
    assert metrics["flops"] > 0
    assert metrics["mean_ms"] > 0
    assert result.report.details["arch"] == "vit"
