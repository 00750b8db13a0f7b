"""Multi-student distillation from a frozen ViT teacher.

The teacher runs once per global view per step and its targets are shared by
every student. Each student is trained against two terms: DINO cross-entropy
between its global representation (ViT class token or pooled BiFPN map) and the
teacher's class-token distributions, and a dense term between its stride-16
features and the teacher's patch tokens on the unmasked global views. Every
student keeps its own EMA copy, which is the exported artifact.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

import torch
import torch.nn.functional as F
from einops import rearrange
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.augmentation.batches import BatchBuilder, prefetch_batches
from src.augmentation.crops import CropBatch, CropConfig
from src.augmentation.depth_noise import AugmentParams
from src.depth_io.manifest import ManifestRecord, MixtureSpec
from src.depth_io.stats import ChannelStats
from src.errors import DepthFMError
from src.harness.runtime import MetricsWriter, RunLayout, seed_everything, torch_dtype
from src.models.checkpoint import CheckpointError, flatten_groups, load_checkpoint, save_checkpoint, tensor_fingerprint
from src.models.network import ModelSettings, SSLNetwork, build_network, network_from_checkpoint
from src.objectives.losses import GridMismatch, dino_cross_entropy, dino_local_loss
from src.objectives.pretrain import ADAMW_BETAS
from src.objectives.schedules import ScheduleKind, Schedules, schedule_value
from src.objectives.sinkhorn import sinkhorn_normalize
from src.objectives.teacher import TeacherState, ema_update

from .alignment import alignment_check

logger = logging.getLogger(__name__)


class DistillationError(DepthFMError):
    module = "distillation"


class TeacherNotFrozen(DistillationError):
    """A teacher parameter would receive gradients."""


class CheckpointIncompatible(DistillationError):
    """Teacher checkpoint cannot drive the configured students."""


class StudentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    model: ModelSettings = Field(default_factory=ModelSettings)
    lr: Optional[float] = Field(None, gt=0.0)

    @field_validator("name")
    @classmethod
    def _safe_name(cls, value: str) -> str:
        if not value or not value.replace("_", "").replace("-", "").isalnum():
            raise ValueError(f"student name {value!r} must be alphanumeric (with - or _)")
        return value


class DistillConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    teacher_checkpoint: str
    students: List[StudentConfig]
    teacher_crop_size: int = 224
    cnn_student_crop_size: int = 256
    cnn_local_crop_size: int = 112
    crops: CropConfig = Field(default_factory=CropConfig)
    augment: AugmentParams = Field(default_factory=AugmentParams)
    schedules: Schedules = Field(default_factory=Schedules)
    mixture: Optional[MixtureSpec] = None
    batch_size: int = Field(64, ge=1)
    student_temperature: float = Field(0.1, gt=0.0)
    sinkhorn_iterations: int = Field(3, ge=1)
    dense_loss: Literal["sinkhorn_ce", "cosine"] = "sinkhorn_ce"
    w_dino: float = Field(1.0, ge=0.0)
    w_dense: float = Field(1.0, ge=0.0)
    grad_clip: Optional[float] = Field(3.0, gt=0.0)
    checkpoint_every: int = Field(100, ge=1)
    prefetch: int = Field(2, ge=0)
    workers: int = Field(1, ge=1)
    seed: int = 0
    deterministic: bool = True
    dtype: Literal["float32", "float64"] = "float32"
    device: str = "cpu"

    @model_validator(mode="after")
    def _check_grids(self) -> "DistillConfig":
        if not self.students:
            raise ValueError("at least one student is required")
        names = [student.name for student in self.students]
        if len(set(names)) != len(names):
            raise ValueError(f"student names must be unique, got {names}")
        if self.crops.global_size != self.teacher_crop_size:
            raise ValueError(
                f"crops.global_size={self.crops.global_size} must equal teacher_crop_size={self.teacher_crop_size}"
            )
        teacher_side = self.teacher_crop_size // self.crops.patch_size
        if self.cnn_student_crop_size % 16 or self.cnn_student_crop_size // 16 != teacher_side:
            raise ValueError(
                f"cnn_student_crop_size={self.cnn_student_crop_size} gives a "
                f"{self.cnn_student_crop_size // 16}-wide stride-16 grid, teacher grid is {teacher_side}"
            )
        if self.cnn_local_crop_size % 16:
            raise ValueError("cnn_local_crop_size must be a multiple of 16")
        for student in self.students:
            if student.model.arch == "vit" and student.model.vit.patch_size != self.crops.patch_size:
                raise ValueError(f"ViT student {student.name!r} must use patch_size={self.crops.patch_size}")
        if self.w_dino == 0 and self.w_dense == 0:
            raise ValueError("at least one of w_dino and w_dense must be positive")
        return self


class FrozenTeacher:
    """Gradient-free teacher network that counts its per-view forwards."""

    def __init__(self, network: SSLNetwork):
        network.requires_grad_(False)
        network.eval()
        self.network = network
        self.forward_count = 0
        self.fingerprint = tensor_fingerprint(network.model_params())

    @property
    def patch_size(self) -> int:
        return self.network.backbone.patch_size

    def assert_frozen(self) -> None:
        trainable = [name for name, param in self.network.named_parameters() if param.requires_grad]
        if trainable:
            raise TeacherNotFrozen(f"teacher parameters require grad: {trainable[:3]}")

    @torch.no_grad()
    def targets(self, views: torch.Tensor, temperature: float, iterations: int) -> "TeacherTargets":
        """One forward per global view; class targets Sinkhorn-centred across all views."""

        cls_logits, patch_logits, grids = [], [], []
        for view in views:
            encoded = self.network.encode(view)
            self.forward_count += 1
            cls_logits.append(self.network.dino_head(encoded.cls))
            patch_logits.append(self.network.ibot_head(encoded.patches))
            grids.append(encoded.grid)
        stacked = torch.cat(cls_logits)
        cls_probs = sinkhorn_normalize(stacked, temperature, iterations).chunk(len(views))
        return TeacherTargets(cls_probs=list(cls_probs), patch_logits=torch.cat(patch_logits), grid=grids[0])


@dataclass(frozen=True)
class TeacherTargets:
    cls_probs: List[torch.Tensor]
    patch_logits: torch.Tensor
    grid: tuple


@dataclass
class DistillStudent:
    name: str
    network: SSLNetwork
    ema: TeacherState
    optimizer: torch.optim.Optimizer
    global_size: int
    local_size: int
    lr: float

    @property
    def arch(self) -> str:
        return self.network.arch


@dataclass(frozen=True)
class StudentLosses:
    loss_total: float
    loss_dino: float
    loss_dense: float

    def as_record(self) -> Dict[str, float]:
        return {"loss_total": self.loss_total, "loss_dino": self.loss_dino, "loss_dense": self.loss_dense}


@dataclass(frozen=True)
class DistillResult:
    artifacts: Dict[str, Path]
    teacher_fingerprint: str
    metrics_path: Path
    teacher_forwards: int
    last_losses: Dict[str, Dict[str, float]] = field(default_factory=dict)
    agreement: Dict[str, Dict[str, float]] = field(default_factory=dict)


def load_teacher(path: str | Path, dtype: torch.dtype = torch.float32) -> FrozenTeacher:
    try:
        checkpoint = load_checkpoint(path)
        network = network_from_checkpoint(checkpoint, dtype=dtype)
    except CheckpointError as exc:
        raise CheckpointIncompatible(f"cannot load teacher from {path}: {exc}") from exc
    if network.arch != "vit":
        raise CheckpointIncompatible(f"teacher must be a ViT, checkpoint holds {network.arch!r}")
    return FrozenTeacher(network)


def _resize_views(views: torch.Tensor, size: int) -> torch.Tensor:
    """Bilinear resize of a ``(V, B, 3, S, S)`` view stack to ``size``."""

    if views.shape[-1] == size:
        return views
    count = views.shape[0]
    flat = rearrange(views, "v b c h w -> (v b) c h w")
    flat = F.interpolate(flat, size=(size, size), mode="bilinear", align_corners=False)
    return rearrange(flat, "(v b) c h w -> v b c h w", v=count)


def build_student(
    config: DistillConfig,
    student_config: StudentConfig,
    prototypes: int,
    dtype: torch.dtype,
    seed: int,
) -> DistillStudent:
    settings = student_config.model
    if settings.head.prototypes != prototypes:
        logger.debug("Student %s adopts the teacher's %d prototypes", student_config.name, prototypes)
        settings = settings.model_copy(update={"head": settings.head.model_copy(update={"prototypes": prototypes})})
    network = build_network(settings, seed=seed, dtype=dtype).to(config.device)
    ema = TeacherState(network=copy.deepcopy(network).requires_grad_(False), momentum=1.0, temperature=0.0)
    lr = student_config.lr or config.schedules.peak_lr
    decay, no_decay = network.decay_groups()
    optimizer = torch.optim.AdamW(
        [{"params": decay, "apply_wd": True}, {"params": no_decay, "apply_wd": False, "weight_decay": 0.0}],
        lr=lr,
        betas=ADAMW_BETAS,
        weight_decay=config.schedules.weight_decay[0],
    )
    if settings.arch == "cnn":
        global_size, local_size = config.cnn_student_crop_size, config.cnn_local_crop_size
    else:
        global_size, local_size = config.crops.global_size, config.crops.local_size
    return DistillStudent(
        name=student_config.name,
        network=network,
        ema=ema,
        optimizer=optimizer,
        global_size=global_size,
        local_size=local_size,
        lr=lr,
    )


def dense_loss(
    student_patch_logits: torch.Tensor,
    teacher_patch_logits: torch.Tensor,
    kind: str,
    teacher_temperature: float,
    student_temperature: float,
    iterations: int,
) -> torch.Tensor:
    if student_patch_logits.shape != teacher_patch_logits.shape:
        raise GridMismatch(
            f"student dense logits {tuple(student_patch_logits.shape)} != teacher {tuple(teacher_patch_logits.shape)}"
        )
    student_flat = rearrange(student_patch_logits, "b n k -> (b n) k")
    teacher_flat = rearrange(teacher_patch_logits, "b n k -> (b n) k")
    if kind == "cosine":
        return (1.0 - F.cosine_similarity(student_flat, teacher_flat, dim=-1)).mean()
    targets = sinkhorn_normalize(teacher_flat, teacher_temperature, iterations)
    return dino_cross_entropy(targets, student_flat, student_temperature)


def distill_step(
    teacher: FrozenTeacher,
    students: Sequence[DistillStudent],
    batch: CropBatch,
    config: DistillConfig,
    step: int,
) -> Dict[str, StudentLosses]:
    teacher.assert_frozen()
    schedules = config.schedules
    teacher_temp = schedule_value(schedules, step, ScheduleKind.TEACHER_TEMP)
    lr_scale = schedule_value(schedules, step, ScheduleKind.LR) / schedules.peak_lr
    wd = schedule_value(schedules, step, ScheduleKind.WD)
    momentum = schedule_value(schedules, step, ScheduleKind.MOMENTUM)

    targets = teacher.targets(batch.globals, teacher_temp, config.sinkhorn_iterations)
    global_count = batch.global_count
    results: Dict[str, StudentLosses] = {}

    for student in students:
        globals_flat = rearrange(_resize_views(batch.globals, student.global_size), "g b c h w -> (g b) c h w")
        encoded = student.network.encode(globals_flat)
        report = alignment_check(encoded.grid, targets.grid)
        if not report.aligned:
            raise GridMismatch(f"student {student.name!r}: {report}")

        cls_logits = list(student.network.dino_head(encoded.cls).chunk(global_count))
        loss_global = cls_logits[0].new_zeros(())
        for logits in cls_logits:
            for probs in targets.cls_probs:
                loss_global = loss_global + dino_cross_entropy(probs, logits, config.student_temperature)
        loss_global = loss_global / (global_count * global_count)

        local_logits: List[torch.Tensor] = []
        if batch.locals is not None and batch.local_count:
            locals_flat = rearrange(_resize_views(batch.locals, student.local_size), "l b c h w -> (l b) c h w")
            local_cls = student.network.encode(locals_flat).cls
            local_logits = list(student.network.dino_head(local_cls).chunk(batch.local_count))
        loss_local = dino_local_loss(local_logits, targets.cls_probs, config.student_temperature)
        loss_dino = loss_global + loss_local

        loss_dense = dense_loss(
            student.network.ibot_head(encoded.patches),
            targets.patch_logits,
            config.dense_loss,
            teacher_temp,
            config.student_temperature,
            config.sinkhorn_iterations,
        )
        total = config.w_dino * loss_dino + config.w_dense * loss_dense

        for group in student.optimizer.param_groups:
            group["lr"] = student.lr * lr_scale
            group["weight_decay"] = wd if group.get("apply_wd", True) else 0.0
        student.optimizer.zero_grad(set_to_none=True)
        total.backward()
        if config.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(
                [p for p in student.network.parameters() if p.requires_grad], config.grad_clip
            )
        student.optimizer.step()
        ema_update(student.ema, student.network, momentum)

        results[student.name] = StudentLosses(
            loss_total=float(total.detach()),
            loss_dino=float(loss_dino.detach()),
            loss_dense=float(loss_dense.detach()),
        )
    return results


@torch.no_grad()
def head_agreement(teacher: FrozenTeacher, student: SSLNetwork, views: torch.Tensor, student_size: int) -> float:
    """Mean cosine similarity between student and teacher global head outputs.

    The student's global vector (class token or pooled map) and the teacher's
    class token are compared after their DINO heads, which share the prototype
    space even when the embedding widths differ.
    """

    teacher_logits = teacher.network.dino_head(teacher.network.encode(views).cls)
    resized = F.interpolate(views, size=(student_size, student_size), mode="bilinear", align_corners=False)
    student_logits = student.dino_head(student.encode(resized).cls)
    return float(F.cosine_similarity(student_logits, teacher_logits, dim=-1).mean())


def _artifact_metadata(student: DistillStudent, teacher: FrozenTeacher, step: int, fingerprint: str) -> dict:
    return {
        "kind": "distilled",
        "arch": student.arch,
        "student": student.name,
        "step": step,
        "model": student.network.settings.model_dump(mode="json"),
        "teacher_fingerprint": teacher.fingerprint,
        "config_fingerprint": fingerprint,
    }


def save_student(
    layout: RunLayout, student: DistillStudent, teacher: FrozenTeacher, step: int, fingerprint: str
) -> Path:
    """``checkpoints/<name>_step_<step>.dfmc``: the EMA as ``model`` next to the raw ``student`` weights."""

    tensors = flatten_groups({"student": student.network.model_params(), "model": student.ema.model_params()})
    return save_checkpoint(
        layout.checkpoint_path(step, prefix=f"{student.name}_step"),
        tensors,
        _artifact_metadata(student, teacher, step, fingerprint),
    )


def distill(
    config: DistillConfig,
    manifest: Sequence[ManifestRecord],
    output_dir: str | Path,
    stats: Optional[ChannelStats],
    *,
    config_fingerprint: str = "",
    agreement_views: Optional[torch.Tensor] = None,
) -> DistillResult:
    """Train every student against the frozen teacher.

    ``agreement_views`` is an optional ``(B, 3, S, S)`` stack at the teacher crop
    size; head agreement of each student EMA is measured on it before the first
    step and after the last.
    """

    layout = RunLayout(Path(output_dir)).ensure()
    seed_everything(config.seed, config.deterministic)
    dtype = torch_dtype(config.dtype)

    teacher = load_teacher(config.teacher_checkpoint, dtype)
    teacher.network.to(config.device)
    if teacher.patch_size != config.crops.patch_size:
        raise CheckpointIncompatible(
            f"teacher patch size {teacher.patch_size} differs from crops.patch_size={config.crops.patch_size}"
        )
    prototypes = teacher.network.settings.head.prototypes
    students = [
        build_student(config, student_config, prototypes, dtype, config.seed + index)
        for index, student_config in enumerate(config.students)
    ]
    agreement: Dict[str, Dict[str, float]] = {}
    if agreement_views is not None:
        agreement_views = agreement_views.to(dtype=dtype, device=config.device)
        for student in students:
            agreement[student.name] = {
                "initial": head_agreement(teacher, student.ema.network, agreement_views, student.global_size)
            }
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

    total_steps = config.schedules.total_steps
    header = {
        "mode": "distill",
        "config_fingerprint": config_fingerprint,
        "teacher_fingerprint": teacher.fingerprint,
        "students": [student.name for student in students],
        "total_steps": total_steps,
    }
    logger.info(
        "Distilling %d student(s) for %d steps from teacher %s", len(students), total_steps, teacher.fingerprint[:12]
    )
    last: Dict[str, Dict[str, float]] = {}
    with MetricsWriter(layout.metrics, header) as metrics:
        batches = prefetch_batches(builder, 0, total_steps, workers=config.workers, depth=config.prefetch)
        for step, batch in zip(range(total_steps), batches):
            losses = distill_step(teacher, students, batch.to(dtype, config.device), config, step)
            lr_scale = schedule_value(config.schedules, step, ScheduleKind.LR) / config.schedules.peak_lr
            for student in students:
                record = losses[student.name].as_record()
                last[student.name] = record
                metrics.write({"step": step, "student": student.name, "lr": student.lr * lr_scale, **record})
            done = step + 1
            if done % config.checkpoint_every == 0 and done < total_steps:
                for student in students:
                    save_student(layout, student, teacher, done, config_fingerprint)

    artifacts: Dict[str, Path] = {}
    for student in students:
        if agreement_views is not None:
            final = head_agreement(teacher, student.ema.network, agreement_views, student.global_size)
            agreement[student.name]["final"] = final
            logger.info(
                "Student %s head agreement %.4f -> %.4f", student.name, agreement[student.name]["initial"], final
            )
        artifacts[student.name] = save_student(layout, student, teacher, total_steps, config_fingerprint)
    return DistillResult(
        artifacts=artifacts,
        teacher_fingerprint=teacher.fingerprint,
        metrics_path=layout.metrics,
        teacher_forwards=teacher.forward_count,
        last_losses=last,
        agreement=agreement,
    )


__all__ = [
    "CheckpointIncompatible",
    "DistillConfig",
    "DistillResult",
    "DistillStudent",
    "FrozenTeacher",
    "StudentConfig",
    "StudentLosses",
    "TeacherNotFrozen",
    "TeacherTargets",
    "build_student",
    "dense_loss",
    "distill",
    "distill_step",
    "head_agreement",
    "load_teacher",
    "save_student",
]
