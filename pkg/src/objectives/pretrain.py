"""Self-supervised pretraining loop.

Each step: schedules -> batch -> total loss -> backward -> clip -> AdamW ->
EMA teacher update -> metrics record. Checkpoints hold the student, the teacher
and the optimizer moments so a run can resume bit-exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Literal, Optional, Sequence

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.augmentation.batches import BatchBuilder, prefetch_batches
from src.augmentation.crops import CropConfig
from src.augmentation.depth_noise import AugmentParams
from src.depth_io.manifest import ManifestRecord, MixtureSpec
from src.depth_io.stats import ChannelStats
from src.harness.runtime import MetricsWriter, RunLayout, seed_everything, torch_dtype
from src.models.checkpoint import Checkpoint, flatten_groups, load_checkpoint, save_checkpoint
from src.models.network import ModelSettings, SSLNetwork, build_network

from .losses import LossWeights, total_loss
from .schedules import ScheduleKind, Schedules, schedule_value
from .sinkhorn import ObjectiveError
from .teacher import TeacherState, ema_update

logger = logging.getLogger(__name__)

ADAMW_BETAS = (0.9, 0.999)


class ResumeMismatch(ObjectiveError):
    """Checkpoint in the run directory does not belong to this configuration."""


class MissingStats(ObjectiveError):
    """Pretraining needs the global channel statistics of its manifest."""


class PretrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: ModelSettings = Field(default_factory=ModelSettings)
    crops: CropConfig = Field(default_factory=CropConfig)
    augment: AugmentParams = Field(default_factory=AugmentParams)
    schedules: Schedules = Field(default_factory=Schedules)
    weights: LossWeights = Field(default_factory=LossWeights)
    mixture: Optional[MixtureSpec] = None
    batch_size: int = Field(64, ge=1)
    student_temperature: float = Field(0.1, gt=0.0)
    sinkhorn_iterations: int = Field(3, ge=1)
    grad_clip: Optional[float] = Field(3.0, gt=0.0)
    freeze_last_layer_steps: Optional[int] = Field(None, ge=0)
    checkpoint_every: int = Field(100, ge=1)
    prefetch: int = Field(2, ge=0)
    workers: int = Field(1, ge=1)
    seed: int = 0
    deterministic: bool = True
    dtype: Literal["float32", "float64"] = "float32"
    device: str = "cpu"
    resume: bool = True

    @model_validator(mode="after")
    def _check_compat(self) -> "PretrainConfig":
        if self.model.arch != "vit":
            raise ValueError("pretraining needs a ViT backbone for patch masking")
        if self.crops.patch_size != self.model.vit.patch_size:
            raise ValueError(
                f"crops.patch_size={self.crops.patch_size} differs from model.vit.patch_size={self.model.vit.patch_size}"
            )
        if self.weights.w_koleo > 0 and self.batch_size < 2:
            raise ValueError("the KoLeo term needs batch_size >= 2")
        return self

    def last_layer_freeze(self, manifest_size: int) -> int:
        """Steps during which the prototype layer gets no update (one epoch by default)."""

        if self.freeze_last_layer_steps is not None:
            return self.freeze_last_layer_steps
        return math.ceil(manifest_size / self.batch_size)


@dataclass(frozen=True)
class PretrainResult:
    steps: int
    final_checkpoint: Path
    metrics_path: Path
    last_losses: Dict[str, float]


def build_optimizer(network: SSLNetwork, schedules: Schedules) -> torch.optim.AdamW:
    decay, no_decay = network.decay_groups()
    groups = [{"params": decay, "apply_wd": True}, {"params": no_decay, "apply_wd": False, "weight_decay": 0.0}]
    return torch.optim.AdamW(groups, lr=schedules.peak_lr, betas=ADAMW_BETAS, weight_decay=schedules.weight_decay[0])


def optimizer_tensors(optimizer: torch.optim.Optimizer) -> Dict[str, torch.Tensor]:
    tensors: Dict[str, torch.Tensor] = {}
    for index, state in optimizer.state_dict()["state"].items():
        for key, value in state.items():
            tensors[f"{index}.{key}"] = torch.as_tensor(value).detach().cpu()
    return tensors


def restore_optimizer(optimizer: torch.optim.Optimizer, tensors: Dict[str, torch.Tensor]) -> None:
    state: Dict[int, Dict[str, torch.Tensor]] = {}
    for name, tensor in tensors.items():
        index, key = name.split(".", 1)
        state.setdefault(int(index), {})[key] = tensor
    snapshot = optimizer.state_dict()
    snapshot["state"] = state
    optimizer.load_state_dict(snapshot)


def _set_hyperparameters(optimizer: torch.optim.Optimizer, lr: float, wd: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
        group["weight_decay"] = wd if group.get("apply_wd", True) else 0.0


def _metadata(config: PretrainConfig, step: int, config_fingerprint: str) -> Dict[str, object]:
    return {
        "kind": "pretrain",
        "arch": config.model.arch,
        "step": step,
        "model": config.model.model_dump(mode="json"),
        "config_fingerprint": config_fingerprint,
    }


def _save(
    layout: RunLayout,
    step: int,
    config: PretrainConfig,
    student: SSLNetwork,
    teacher: TeacherState,
    optimizer: torch.optim.Optimizer,
    config_fingerprint: str,
) -> Path:
    tensors = flatten_groups(
        {
            "student": student.model_params(),
            "teacher": teacher.model_params(),
            "optim": optimizer_tensors(optimizer),
        }
    )
    return save_checkpoint(layout.checkpoint_path(step), tensors, _metadata(config, step, config_fingerprint))


def _resume(
    checkpoint: Checkpoint,
    config: PretrainConfig,
    student: SSLNetwork,
    teacher: TeacherState,
    optimizer: torch.optim.Optimizer,
) -> int:
    if checkpoint.metadata.get("model") != config.model.model_dump(mode="json"):
        raise ResumeMismatch("checkpoint model settings differ from the configured model")
    student_state = checkpoint.group("student")
    if set(student_state) != set(student.state_dict()):
        raise ResumeMismatch("checkpoint parameter names differ from the configured network")
    if checkpoint.step > config.schedules.total_steps:
        raise ResumeMismatch(f"checkpoint step {checkpoint.step} is past total_steps={config.schedules.total_steps}")
    dtype = student.dtype
    student.load_state_dict({name: tensor.to(dtype) for name, tensor in student_state.items()})
    teacher.network.load_state_dict({name: tensor.to(dtype) for name, tensor in checkpoint.group("teacher").items()})
    optim_state = checkpoint.group("optim")
    if optim_state:
        restore_optimizer(optimizer, optim_state)
    return checkpoint.step


def pretrain(
    config: PretrainConfig,
    manifest: Sequence[ManifestRecord],
    output_dir: str | Path,
    stats: Optional[ChannelStats],
    *,
    config_fingerprint: str = "",
) -> PretrainResult:
    if stats is None:
        raise MissingStats("pretraining requires channel statistics; run the stats mode first")
    layout = RunLayout(Path(output_dir)).ensure()
    seed_everything(config.seed, config.deterministic)
    dtype = torch_dtype(config.dtype)
    schedules = config.schedules

    student = build_network(config.model, seed=config.seed, dtype=dtype).to(config.device)
    teacher = TeacherState.from_student(
        student,
        momentum=schedule_value(schedules, 0, ScheduleKind.MOMENTUM),
        temperature=schedule_value(schedules, 0, ScheduleKind.TEACHER_TEMP),
    )
    optimizer = build_optimizer(student, schedules)

    start_step = 0
    latest = layout.latest_checkpoint() if config.resume else None
    if latest is not None:
        start_step = _resume(load_checkpoint(latest), config, student, teacher, optimizer)
        logger.info("Resuming pretraining from %s at step %d", latest, start_step)
    else:
        _save(layout, 0, config, student, teacher, optimizer, config_fingerprint)

    freeze_steps = config.last_layer_freeze(len(manifest))
    builder = BatchBuilder(
        manifest,
        config.crops,
        config.augment,
        stats,
        config.batch_size,
        config.seed,
        mixture=config.mixture,
        dtype=dtype,
    )
    header = {"mode": "pretrain", "config_fingerprint": config_fingerprint, "total_steps": schedules.total_steps}
    final = layout.checkpoint_path(start_step)
    last_losses: Dict[str, float] = {}

    logger.info(
        "Pretraining %s for %d steps (batch %d, %d images)",
        config.model.arch,
        schedules.total_steps - start_step,
        config.batch_size,
        len(manifest),
    )
    with MetricsWriter(layout.metrics, header, resume_step=start_step if latest else None) as metrics:
        batches = prefetch_batches(
            builder, start_step, schedules.total_steps, workers=config.workers, depth=config.prefetch
        )
        for step, batch in zip(range(start_step, schedules.total_steps), batches):
            lr = schedule_value(schedules, step, ScheduleKind.LR)
            wd = schedule_value(schedules, step, ScheduleKind.WD)
            momentum = schedule_value(schedules, step, ScheduleKind.MOMENTUM)
            teacher.temperature = schedule_value(schedules, step, ScheduleKind.TEACHER_TEMP)
            _set_hyperparameters(optimizer, lr, wd)

            breakdown = total_loss(
                batch.to(dtype, config.device),
                student,
                teacher,
                config.weights,
                student_temperature=config.student_temperature,
                iterations=config.sinkhorn_iterations,
            )
            if not torch.isfinite(breakdown.total):
                raise ObjectiveError(f"non-finite loss at step {step}: {breakdown.contributions}")

            optimizer.zero_grad(set_to_none=True)
            breakdown.total.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(
                    [p for p in student.parameters() if p.requires_grad], config.grad_clip
                )
            if step < freeze_steps:
                for param in student.last_layer_parameters():
                    param.grad = None
            optimizer.step()
            ema_update(teacher, student, momentum)

            last_losses = breakdown.as_record()
            metrics.write(
                {
                    "step": step,
                    "lr": lr,
                    "wd": wd,
                    "momentum": momentum,
                    "teacher_temp": teacher.temperature,
                    **last_losses,
                }
            )
            done = step + 1
            if done % config.checkpoint_every == 0 or done == schedules.total_steps:
                final = _save(layout, done, config, student, teacher, optimizer, config_fingerprint)
            if step % 50 == 0:
                logger.debug("step %d loss %.4f", step, last_losses["loss_total"])

    return PretrainResult(
        steps=schedules.total_steps,
        final_checkpoint=final,
        metrics_path=layout.metrics,
        last_losses=last_losses,
    )


__all__ = [
    "ADAMW_BETAS",
    "MissingStats",
    "PretrainConfig",
    "PretrainResult",
    "ResumeMismatch",
    "build_optimizer",
    "pretrain",
]
