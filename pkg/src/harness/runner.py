"""Mode dispatch for a resolved run configuration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import torch
from einops import rearrange

from src.config.loader import RunConfig, config_fingerprint, snapshot_text
from src.depth_io.manifest import ManifestRecord, read_manifest
from src.depth_io.stats import ChannelStats, compute_channel_stats
from src.distillation.distill import distill
from src.errors import PathMissing
from src.evaluation.bench import bench
from src.evaluation.features import encode_images, extract_features, prepare_input
from src.evaluation.knn import knn_eval
from src.evaluation.linear_probe import linear_probe
from src.evaluation.pca import pca_visualize, write_ppm
from src.evaluation.report import EvalReport
from src.evaluation.segmentation import segment_probe
from src.models.network import SSLNetwork, build_network, network_from_checkpoint
from src.objectives.pretrain import pretrain

from .runtime import RunLayout, seed_everything, torch_dtype
from .toy_data import gen_toy_dataset

logger = logging.getLogger(__name__)

STATS_FILENAME = "channel_stats.json"


@dataclass
class RunContext:
    config: RunConfig
    layout: RunLayout
    fingerprint: str

    @property
    def dtype(self) -> torch.dtype:
        return torch_dtype(self.config.dtype)


@dataclass
class RunResult:
    mode: str
    output_dir: Path
    fingerprint: str
    artifacts: Dict[str, Path] = field(default_factory=dict)
    report: Optional[EvalReport] = None


def _require_path(value: Optional[str], key: str) -> Path:
    if not value:
        raise PathMissing(f"{key} is not set")
    path = Path(value)
    if not path.exists():
        raise PathMissing(f"{key}: {path} does not exist")
    return path


def _load_stats(config: RunConfig) -> Optional[ChannelStats]:
    if config.data.stats is None:
        return None
    return ChannelStats.load(_require_path(config.data.stats, "data.stats"))


def _manifest(config: RunConfig, key: str = "manifest") -> List[ManifestRecord]:
    records = read_manifest(_require_path(getattr(config.data, key), f"data.{key}"))
    if config.mode not in ("pretrain", "distill", "stats") and config.eval.max_images:
        records = records[: config.eval.max_images]
    return records


def _eval_network(context: RunContext) -> SSLNetwork:
    path = _require_path(context.config.eval.checkpoint, "eval.checkpoint")
    network = network_from_checkpoint(path, group=context.config.eval.group, dtype=context.dtype)
    logger.info("Evaluating %s network from %s", network.arch, path)
    return network.to(context.config.device)


def _save_report(context: RunContext, task: str, metrics: Dict[str, float], **details: object) -> EvalReport:
    report = EvalReport(task=task, metrics=metrics, config_fingerprint=context.fingerprint, details=details)
    report.save(context.layout.reports)
    return report


def _features(context: RunContext, network: SSLNetwork, key: str, *, keep_patches: bool = False):
    config = context.config
    return extract_features(
        network,
        _manifest(config, key),
        _load_stats(config),
        size=config.eval_size,
        normalization=config.eval.input_normalization,
        batch_size=config.eval.batch_size,
        workers=config.workers,
        keep_patches=keep_patches,
    )


def run_gen_toy(context: RunContext) -> RunResult:
    dataset = gen_toy_dataset(context.config.toy, context.layout.root / "data")
    return RunResult(
        mode="gen_toy",
        output_dir=context.layout.root,
        fingerprint=context.fingerprint,
        artifacts={"train_manifest": dataset.train_manifest, "val_manifest": dataset.val_manifest},
    )


def run_stats(context: RunContext) -> RunResult:
    config = context.config
    stats = compute_channel_stats(_manifest(config), workers=config.workers)
    target = Path(config.data.stats) if config.data.stats else context.layout.root / STATS_FILENAME
    stats.save(target)
    logger.info("Wrote channel statistics to %s", target)
    return RunResult(mode="stats", output_dir=context.layout.root, fingerprint=context.fingerprint, artifacts={"stats": target})


def run_pretrain(context: RunContext) -> RunResult:
    config = context.config
    result = pretrain(
        config.pretrain_config(),
        _manifest(config),
        context.layout.root,
        ChannelStats.load(_require_path(config.data.stats, "data.stats")),
        config_fingerprint=context.fingerprint,
    )
    report = _save_report(
        context,
        "pretrain",
        {"steps": float(result.steps), **result.last_losses},
        checkpoint=str(result.final_checkpoint),
    )
    return RunResult(
        mode="pretrain",
        output_dir=context.layout.root,
        fingerprint=context.fingerprint,
        artifacts={"checkpoint": result.final_checkpoint, "metrics": result.metrics_path},
        report=report,
    )


def _agreement_views(context: RunContext) -> Optional[torch.Tensor]:
    config = context.config
    count = config.distill.agreement_images
    if count == 0:
        return None
    key = "val_manifest" if config.data.val_manifest else "manifest"
    records = read_manifest(_require_path(getattr(config.data, key), f"data.{key}"))[:count]
    stats = _load_stats(config)
    arrays = [prepare_input(record.load(), config.distill.teacher_crop_size, stats) for record in records]
    return torch.from_numpy(np.stack(arrays))


def run_distill(context: RunContext) -> RunResult:
    config = context.config
    distill_config = config.distill_config()
    _require_path(distill_config.teacher_checkpoint, "distill.teacher_checkpoint")
    result = distill(
        distill_config,
        _manifest(config),
        context.layout.root,
        _load_stats(config),
        config_fingerprint=context.fingerprint,
        agreement_views=_agreement_views(context),
    )
    metrics: Dict[str, float] = {}
    for name, values in result.agreement.items():
        for stage, value in values.items():
            metrics[f"agreement_{stage}_{name}"] = value
    for name, losses in result.last_losses.items():
        metrics[f"loss_total_{name}"] = losses["loss_total"]
    report = _save_report(
        context,
        "distill",
        metrics,
        teacher_fingerprint=result.teacher_fingerprint,
        teacher_forwards=result.teacher_forwards,
        artifacts={name: str(path) for name, path in result.artifacts.items()},
    )
    return RunResult(
        mode="distill",
        output_dir=context.layout.root,
        fingerprint=context.fingerprint,
        artifacts=dict(result.artifacts),
        report=report,
    )


def run_knn(context: RunContext) -> RunResult:
    network = _eval_network(context)
    train = _features(context, network, "manifest")
    test = _features(context, network, "val_manifest")
    settings = context.config.eval.knn
    result = knn_eval(train, test, k=settings.k, temperature=settings.temperature)
    report = _save_report(
        context,
        "knn",
        {"top1": result.top1, "top5": result.top5},
        k=settings.k,
        temperature=settings.temperature,
        train_size=train.n,
        test_size=test.n,
    )
    return RunResult(mode="knn", output_dir=context.layout.root, fingerprint=context.fingerprint, report=report)


def run_probe(context: RunContext) -> RunResult:
    network = _eval_network(context)
    train = _features(context, network, "manifest")
    val = _features(context, network, "val_manifest")
    result = linear_probe(train, val, context.config.eval.probe)
    report = _save_report(
        context,
        "probe",
        {"linear_acc": result.linear_acc, "best_lr": result.best_lr},
        accuracy_by_lr={str(lr): acc for lr, acc in result.accuracy_by_lr.items()},
    )
    return RunResult(mode="probe", output_dir=context.layout.root, fingerprint=context.fingerprint, report=report)


def run_segment(context: RunContext) -> RunResult:
    config = context.config
    network = _eval_network(context)

    def _samples(key: str):
        return [(record.load(), record.load_segmentation()) for record in _manifest(config, key)]

    result = segment_probe(
        network,
        _samples("manifest"),
        _samples("val_manifest"),
        _load_stats(config),
        config.eval.segment,
        size=config.eval_size,
        normalization=config.eval.input_normalization,
        batch_size=config.eval.batch_size,
    )
    metrics = {"miou": result.miou, **{f"iou_{cls}": value for cls, value in result.iou.per_class.items()}}
    report = _save_report(context, "segment", metrics, num_classes=config.eval.segment.num_classes)
    return RunResult(mode="segment", output_dir=context.layout.root, fingerprint=context.fingerprint, report=report)


def run_pca_viz(context: RunContext) -> RunResult:
    config = context.config
    settings = config.eval.pca
    network = _eval_network(context)
    key = "val_manifest" if config.data.val_manifest else "manifest"
    records = _manifest(config, key)[: settings.images]
    _, patches, grid = encode_images(
        network,
        [record.load() for record in records],
        _load_stats(config),
        size=config.eval_size,
        normalization=config.eval.input_normalization,
        batch_size=config.eval.batch_size,
        workers=config.workers,
    )
    grids = [rearrange(tokens, "(h w) d -> h w d", h=grid[0], w=grid[1]) for tokens in patches]
    images = pca_visualize(grids, settings.components, settings.background_threshold)
    artifacts: Dict[str, Path] = {}
    for index, rgb in enumerate(images):
        artifacts[f"pca_{index}"] = write_ppm(
            context.layout.reports / f"pca_{index}.ppm", rgb, binary=settings.binary, scale=settings.scale
        )
    report = _save_report(
        context,
        "pca_viz",
        {"images": float(len(images))},
        files=[str(path) for path in artifacts.values()],
        grid=list(grid),
    )
    return RunResult(
        mode="pca_viz",
        output_dir=context.layout.root,
        fingerprint=context.fingerprint,
        artifacts=artifacts,
        report=report,
    )


def run_bench(context: RunContext) -> RunResult:
    config = context.config
    if config.eval.checkpoint:
        network = _eval_network(context)
    else:
        network = build_network(config.model, seed=config.seed, dtype=context.dtype).to(config.device)
    settings = config.eval.bench
    result = bench(
        network,
        input_size=settings.input_size or config.eval_size,
        batch_size=settings.batch_size,
        repetitions=settings.repetitions,
        warmup=settings.warmup,
    )
    report = _save_report(
        context,
        "bench",
        {
            "mean_ms": result.mean_ms,
            "median_ms": result.median_ms,
            "p95_ms": result.p95_ms,
            "parameters": float(result.parameter_count),
            "flops": float(result.flops),
        },
        arch=network.arch,
        batch_size=result.batch_size,
        input_size=result.input_size,
        samples_ms=result.samples,
    )
    return RunResult(mode="bench", output_dir=context.layout.root, fingerprint=context.fingerprint, report=report)


MODE_HANDLERS: Dict[str, Callable[[RunContext], RunResult]] = {
    "pretrain": run_pretrain,
    "distill": run_distill,
    "knn": run_knn,
    "probe": run_probe,
    "segment": run_segment,
    "pca_viz": run_pca_viz,
    "stats": run_stats,
    "bench": run_bench,
    "gen_toy": run_gen_toy,
}


def run(config: RunConfig) -> RunResult:
    """Write the config snapshot, seed, then dispatch to the mode handler."""

    layout = RunLayout(Path(config.output_dir)).ensure()
    text = snapshot_text(config)
    layout.config_snapshot.write_text(text, encoding="utf-8")
    fingerprint = config_fingerprint(text)
    seed_everything(config.seed, config.deterministic)
    logger.info("Running %s into %s (config %s)", config.mode, layout.root, fingerprint[:12])
    return MODE_HANDLERS[config.mode](RunContext(config=config, layout=layout, fingerprint=fingerprint))


__all__ = ["MODE_HANDLERS", "RunContext", "RunResult", "run"]
