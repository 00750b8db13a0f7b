"""Learning-rate, weight-decay, EMA-momentum and teacher-temperature schedules."""

from __future__ import annotations

import math
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .sinkhorn import ObjectiveError


class StepOutOfRange(ObjectiveError):
    """Requested step lies outside ``[0, total_steps]``."""


class ScheduleKind(str, Enum):
    LR = "lr"
    WD = "wd"
    MOMENTUM = "momentum"
    TEACHER_TEMP = "teacher_temp"


class Schedules(BaseModel):
    model_config = ConfigDict(frozen=True)

    peak_lr: float = Field(1.5e-4, gt=0.0)
    min_lr: float = Field(1e-6, ge=0.0)
    warmup_steps: int = Field(10, ge=0)
    total_steps: int = Field(100, ge=0)
    weight_decay: Tuple[float, float] = (0.04, 0.2)
    momentum: Tuple[float, float] = (0.994, 1.0)
    teacher_temperature: Tuple[float, float] = (0.04, 0.07)
    teacher_temp_warmup_steps: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "Schedules":
        if self.warmup_steps > self.total_steps:
            raise ValueError(f"warmup_steps={self.warmup_steps} exceeds total_steps={self.total_steps}")
        if self.min_lr > self.peak_lr:
            raise ValueError("min_lr must not exceed peak_lr")
        for name in ("weight_decay", "momentum", "teacher_temperature"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} range must be ordered, got {(low, high)}")
        m0, m1 = self.momentum
        if not 0.0 <= m0 <= m1 <= 1.0:
            raise ValueError("momentum range must lie in [0, 1]")
        if self.teacher_temperature[0] <= 0:
            raise ValueError("teacher temperatures must be positive")
        return self

    @property
    def temp_warmup(self) -> int:
        if self.teacher_temp_warmup_steps is None:
            return self.warmup_steps
        return self.teacher_temp_warmup_steps


def cosine(start: float, end: float, progress: float) -> float:
    """Cosine interpolation that returns ``start`` at 0 and ``end`` at 1 exactly."""

    weight = 0.5 * (1.0 + math.cos(math.pi * progress))
    return weight * start + (1.0 - weight) * end


def schedule_value(schedules: Schedules, step: int, which: ScheduleKind | str) -> float:
    which = ScheduleKind(which)
    if not 0 <= step <= schedules.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {schedules.total_steps}]")

    total = schedules.total_steps
    if which is ScheduleKind.LR:
        warmup = schedules.warmup_steps
        if step < warmup:
            return schedules.peak_lr * step / warmup
        span = total - warmup
        progress = (step - warmup) / span if span > 0 else 0.0
        return cosine(schedules.peak_lr, schedules.min_lr, progress)

    progress = step / total if total > 0 else 0.0
    if which is ScheduleKind.WD:
        return cosine(*schedules.weight_decay, progress)
    if which is ScheduleKind.MOMENTUM:
        return cosine(*schedules.momentum, progress)

    start, end = schedules.teacher_temperature
    warmup = schedules.temp_warmup
    if warmup > 0 and step < warmup:
        return start + (end - start) * step / warmup
    return end


__all__ = ["ScheduleKind", "Schedules", "StepOutOfRange", "cosine", "schedule_value"]
