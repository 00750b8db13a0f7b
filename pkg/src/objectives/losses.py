"""DINO, iBOT and KoLeo loss terms and their weighted sum.

Distributions are plain ``(..., K)`` probability tensors whose last axis sums
to one. Student logits are turned into log-probabilities with a floor of
``LOG_CLAMP`` so degenerate teachers never produce infinite losses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence

import torch
import torch.nn.functional as F
from einops import rearrange
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.augmentation.crops import CropBatch

from .sinkhorn import TRAINING_ITERATIONS, ObjectiveError, sinkhorn_normalize
from .teacher import TeacherState

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
KOLEO_EPS = 1e-8
STUDENT_TEMPERATURE = 0.1


class TooFewGlobals(ObjectiveError):
    """The global DINO term needs at least two global views."""


class GridMismatch(ObjectiveError):
    """Student and teacher token grids differ in shape."""


class TooFewPoints(ObjectiveError):
    """KoLeo needs at least two embeddings."""


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    w_dino_global: float = Field(1.0, ge=0.0)
    w_dino_local: float = Field(1.0, ge=0.0)
    w_ibot: float = Field(1.0, ge=0.0)
    w_koleo: float = Field(0.1, ge=0.0)

    @model_validator(mode="after")
    def _any_positive(self) -> "LossWeights":
        if not any(weight > 0 for weight in (self.w_dino_global, self.w_dino_local, self.w_ibot, self.w_koleo)):
            raise ValueError("at least one loss weight must be positive")
        return self


def student_log_probs(student_logits: torch.Tensor, student_temperature: float) -> torch.Tensor:
    return torch.log(torch.softmax(student_logits / student_temperature, dim=-1).clamp_min(LOG_CLAMP))


def dino_cross_entropy(
    teacher: torch.Tensor,
    student_logits: torch.Tensor,
    student_temperature: float = STUDENT_TEMPERATURE,
) -> torch.Tensor:
    """``-sum p_t log softmax(s / tau)`` averaged over any leading batch axes."""

    if student_temperature <= 0:
        raise ValueError("student temperature must be positive")
    per_row = -(teacher * student_log_probs(student_logits, student_temperature)).sum(dim=-1)
    return per_row.mean()


def dino_global_loss(
    student_logits: Sequence[torch.Tensor],
    teacher_probs: Sequence[torch.Tensor],
    student_temperature: float = STUDENT_TEMPERATURE,
) -> torch.Tensor:
    """Cross-entropy over ordered global pairs ``(i, j), i != j``, averaged by pair count."""

    count = len(student_logits)
    if count < 2 or len(teacher_probs) != count:
        raise TooFewGlobals(f"need >= 2 matching global views, got {count} student / {len(teacher_probs)} teacher")
    total = student_logits[0].new_zeros(())
    pairs = 0
    for i, logits in enumerate(student_logits):
        for j, probs in enumerate(teacher_probs):
            if i == j:
                continue
            total = total + dino_cross_entropy(probs, logits, student_temperature)
            pairs += 1
    return total / pairs


def dino_local_loss(
    student_local_logits: Sequence[torch.Tensor],
    teacher_probs: Sequence[torch.Tensor],
    student_temperature: float = STUDENT_TEMPERATURE,
) -> torch.Tensor:
    """Cross-entropy over every (global, local) pair; zero without local views."""

    if not student_local_logits or not teacher_probs:
        reference = teacher_probs[0] if teacher_probs else None
        return reference.new_zeros(()) if reference is not None else torch.zeros(())
    total = student_local_logits[0].new_zeros(())
    for probs in teacher_probs:
        for logits in student_local_logits:
            total = total + dino_cross_entropy(probs, logits, student_temperature)
    return total / (len(teacher_probs) * len(student_local_logits))


def ibot_patch_loss(
    student_patch_logits: torch.Tensor,
    teacher_patch_logits: torch.Tensor,
    mask: torch.Tensor,
    teacher_temperature: float,
    student_temperature: float = STUDENT_TEMPERATURE,
    iterations: int = TRAINING_ITERATIONS,
) -> torch.Tensor:
    """Masked-token cross-entropy against Sinkhorn-centred teacher patch targets.

    Logits are ``(B, N, K)``; ``mask`` is ``(B, N)`` or ``(B, h, w)``. The
    Sinkhorn batch is the set of masked tokens across the whole batch.
    """

    if student_patch_logits.shape != teacher_patch_logits.shape:
        raise GridMismatch(
            f"student grid {tuple(student_patch_logits.shape)} != teacher grid {tuple(teacher_patch_logits.shape)}"
        )
    flat_mask = mask.reshape(mask.shape[0], -1).to(torch.bool)
    if tuple(flat_mask.shape) != tuple(student_patch_logits.shape[:2]):
        raise GridMismatch(f"mask {tuple(mask.shape)} does not cover {tuple(student_patch_logits.shape[:2])} tokens")
    if not bool(flat_mask.any()):
        return student_patch_logits.new_zeros(())

    targets = sinkhorn_normalize(teacher_patch_logits[flat_mask], teacher_temperature, iterations)
    return dino_cross_entropy(targets, student_patch_logits[flat_mask], student_temperature)


def koleo_regularizer(embeddings: torch.Tensor, epsilon: float = KOLEO_EPS) -> torch.Tensor:
    """Kozachenko-Leonenko spreading term on L2-normalised embeddings."""

    if embeddings.ndim != 2 or embeddings.shape[0] < 2:
        raise TooFewPoints(f"KoLeo needs an (n>=2, d) matrix, got {tuple(embeddings.shape)}")
    x = F.normalize(embeddings, p=2, dim=-1, eps=epsilon)
    with torch.no_grad():
        similarity = x @ x.t()
        similarity.fill_diagonal_(-2.0)
        nearest = similarity.argmax(dim=1)
    squared = (x - x[nearest]).pow(2).sum(dim=-1)
    return -0.5 * torch.log(squared.clamp_min(epsilon**2)).mean()


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted total plus per-term contributions (weighted) and raw values."""

    total: torch.Tensor
    contributions: Dict[str, float] = field(default_factory=dict)
    raw: Dict[str, float] = field(default_factory=dict)

    def as_record(self) -> Dict[str, float]:
        record = {"loss_total": float(self.total.detach())}
        record.update(self.contributions)
        return record


def teacher_targets(
    teacher: TeacherState,
    globals_flat: torch.Tensor,
    global_count: int,
    iterations: int,
) -> tuple[list[torch.Tensor], torch.Tensor]:
    """Teacher class-token distributions per global view and raw patch logits."""

    with torch.no_grad():
        encoded = teacher.network.encode(globals_flat)
        cls_logits = teacher.network.dino_head(encoded.cls)
        patch_logits = teacher.network.ibot_head(encoded.patches)
        cls_probs = sinkhorn_normalize(cls_logits, teacher.temperature, iterations)
    return list(cls_probs.chunk(global_count)), patch_logits


def total_loss(
    batch: CropBatch,
    student: torch.nn.Module,
    teacher: TeacherState,
    weights: LossWeights,
    *,
    student_temperature: float = STUDENT_TEMPERATURE,
    iterations: int = TRAINING_ITERATIONS,
) -> LossBreakdown:
    """Weighted DINO global + DINO local + iBOT + KoLeo objective for one batch."""

    global_count = batch.global_count
    globals_flat = rearrange(batch.globals, "g b c h w -> (g b) c h w")
    masks_flat = rearrange(batch.masks, "g b h w -> (g b) h w")

    teacher_probs, teacher_patch_logits = teacher_targets(teacher, globals_flat, global_count, iterations)

    student_out = student.encode(globals_flat, masks_flat)
    student_cls_logits = list(student.dino_head(student_out.cls).chunk(global_count))
    student_patch_logits = student.ibot_head(student_out.patches)

    local_logits: list[torch.Tensor] = []
    if batch.locals is not None and batch.local_count:
        local_out = student.encode(rearrange(batch.locals, "l b c h w -> (l b) c h w"))
        local_logits = list(student.dino_head(local_out.cls).chunk(batch.local_count))

    raw = {
        "loss_global": dino_global_loss(student_cls_logits, teacher_probs, student_temperature),
        "loss_local": dino_local_loss(local_logits, teacher_probs, student_temperature),
        "loss_ibot": ibot_patch_loss(
            student_patch_logits,
            teacher_patch_logits,
            masks_flat,
            teacher.temperature,
            student_temperature,
            iterations,
        ),
    }
    if weights.w_koleo > 0:
        raw["loss_koleo"] = torch.stack(
            [koleo_regularizer(chunk) for chunk in student_out.cls.chunk(global_count)]
        ).mean()
    else:
        raw["loss_koleo"] = student_out.cls.new_zeros(())

    scale = {
        "loss_global": weights.w_dino_global,
        "loss_local": weights.w_dino_local,
        "loss_ibot": weights.w_ibot,
        "loss_koleo": weights.w_koleo,
    }
    weighted = {name: scale[name] * value for name, value in raw.items()}
    total = weighted["loss_global"] + weighted["loss_local"] + weighted["loss_ibot"] + weighted["loss_koleo"]
    return LossBreakdown(
        total=total,
        contributions={name: float(value.detach()) for name, value in weighted.items()},
        raw={name: float(value.detach()) for name, value in raw.items()},
    )


__all__ = [
    "GridMismatch",
    "KOLEO_EPS",
    "LOG_CLAMP",
    "LossBreakdown",
    "LossWeights",
    "TooFewGlobals",
    "TooFewPoints",
    "dino_cross_entropy",
    "dino_global_loss",
    "dino_local_loss",
    "ibot_patch_loss",
    "koleo_regularizer",
    "teacher_targets",
    "total_loss",
]
