from __future__ import annotations

import math

import pytest

from src.objectives import ScheduleKind, Schedules, StepOutOfRange, schedule_value


@pytest.fixture
def schedules() -> Schedules:
    return Schedules(
        peak_lr=5e-4,
        min_lr=1e-6,
        warmup_steps=10,
        total_steps=100,
        weight_decay=(0.04, 0.2),
        momentum=(0.994, 1.0),
        teacher_temperature=(0.04, 0.07),
        teacher_temp_warmup_steps=30,
    )


def test_learning_rate_warmup_and_decay(schedules):
    assert schedule_value(schedules, 0, "lr") == 0.0
    assert math.isclose(schedule_value(schedules, 5, "lr"), 2.5e-4)
    assert math.isclose(schedule_value(schedules, 10, "lr"), 5e-4, abs_tol=1e-9)
    assert schedule_value(schedules, 100, "lr") == 1e-6
    assert schedule_value(schedules, 40, "lr") > schedule_value(schedules, 70, "lr")


def test_cosine_endpoints_are_exact(schedules):
    assert schedule_value(schedules, 0, ScheduleKind.WD) == 0.04
    assert schedule_value(schedules, 100, ScheduleKind.WD) == 0.2
    assert schedule_value(schedules, 0, ScheduleKind.MOMENTUM) == 0.994
    assert schedule_value(schedules, 100, ScheduleKind.MOMENTUM) == 1.0


def test_teacher_temperature_warms_up_then_holds(schedules):
    assert schedule_value(schedules, 0, "teacher_temp") == 0.04
    assert math.isclose(schedule_value(schedules, 15, "teacher_temp"), 0.055)
    assert schedule_value(schedules, 30, "teacher_temp") == 0.07
    assert schedule_value(schedules, 100, "teacher_temp") == 0.07


def test_zero_length_schedule():
    flat = Schedules(warmup_steps=0, total_steps=0)

    assert schedule_value(flat, 0, "lr") == flat.peak_lr
    assert schedule_value(flat, 0, "momentum") == flat.momentum[0]


@pytest.mark.parametrize("step", [-1, 101])
def test_step_out_of_range(schedules, step):
    with pytest.raises(StepOutOfRange):
        schedule_value(schedules, step, "lr")


def test_invalid_ranges():
    with pytest.raises(ValueError):
        Schedules(warmup_steps=20, total_steps=10)
    with pytest.raises(ValueError):
        Schedules(momentum=(0.9, 1.1))
