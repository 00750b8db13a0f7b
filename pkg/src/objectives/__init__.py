"""Self-distillation objectives, EMA teacher, schedules and the pretraining loop."""

from .losses import (
    GridMismatch,
    LossBreakdown,
    LossWeights,
    TooFewGlobals,
    TooFewPoints,
    dino_cross_entropy,
    dino_global_loss,
    dino_local_loss,
    ibot_patch_loss,
    koleo_regularizer,
    total_loss,
)
from .pretrain import MissingStats, PretrainConfig, PretrainResult, ResumeMismatch, pretrain
from .schedules import ScheduleKind, Schedules, StepOutOfRange, schedule_value
from .sinkhorn import NonFiniteLogits, ObjectiveError, sinkhorn_normalize
from .teacher import NameSetMismatch, TeacherState, ema_update

__all__ = [
    "GridMismatch",
    "LossBreakdown",
    "LossWeights",
    "MissingStats",
    "NameSetMismatch",
    "NonFiniteLogits",
    "ObjectiveError",
    "PretrainConfig",
    "PretrainResult",
    "ResumeMismatch",
    "ScheduleKind",
    "Schedules",
    "StepOutOfRange",
    "TeacherState",
    "TooFewGlobals",
    "TooFewPoints",
    "dino_cross_entropy",
    "dino_global_loss",
    "dino_local_loss",
    "ema_update",
    "ibot_patch_loss",
    "koleo_regularizer",
    "pretrain",
    "schedule_value",
    "sinkhorn_normalize",
    "total_loss",
]
