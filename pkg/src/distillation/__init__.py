"""Frozen-teacher distillation into compact ViT and CNN+BiFPN students."""

from .alignment import AlignmentReport, alignment_check
from .distill import (
    CheckpointIncompatible,
    DistillConfig,
    DistillResult,
    DistillStudent,
    FrozenTeacher,
    StudentConfig,
    TeacherNotFrozen,
    distill,
    distill_step,
    head_agreement,
    load_teacher,
)

__all__ = [
    "AlignmentReport",
    "CheckpointIncompatible",
    "DistillConfig",
    "DistillResult",
    "DistillStudent",
    "FrozenTeacher",
    "StudentConfig",
    "TeacherNotFrozen",
    "alignment_check",
    "distill",
    "distill_step",
    "head_agreement",
    "load_teacher",
]
