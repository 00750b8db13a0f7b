from __future__ import annotations

import pytest
import torch

from src.objectives import NameSetMismatch, TeacherState, ema_update


def _pair(teacher_value: float, student_value: float):
    student = torch.nn.Linear(3, 2).double()
    with torch.no_grad():
        student.weight.fill_(student_value)
        student.bias.fill_(student_value)
    teacher = TeacherState.from_student(student, momentum=0.5, temperature=0.04)
    with torch.no_grad():
        for param in teacher.network.parameters():
            param.fill_(teacher_value)
    return teacher, student


@pytest.mark.parametrize("m, expected", [(0.0, 4.0), (0.5, 3.0), (1.0, 2.0)])
def test_ema_coefficients(m, expected):
    teacher, student = _pair(2.0, 4.0)

    ema_update(teacher, student, m)

    for param in teacher.network.parameters():
        assert torch.all(param == expected)
    assert teacher.momentum == m


def test_ema_contracts_toward_student():
    torch.manual_seed(0)
    student = torch.nn.Linear(8, 8).double()
    teacher = TeacherState.from_student(student, momentum=0.5, temperature=0.04)
    with torch.no_grad():
        for param in teacher.network.parameters():
            param.add_(torch.randn_like(param))
    before = {name: (param - dict(student.named_parameters())[name]).detach().clone()
              for name, param in teacher.network.named_parameters()}

    ema_update(teacher, student, 0.5)

    for name, param in teacher.network.named_parameters():
        after = param - dict(student.named_parameters())[name]
        torch.testing.assert_close(after.norm(), 0.5 * before[name].norm())


def test_teacher_copy_is_gradient_free():
    teacher, _ = _pair(1.0, 1.0)

    assert not any(param.requires_grad for param in teacher.network.parameters())


def test_name_sets_must_match():
    teacher, _ = _pair(1.0, 1.0)

    with pytest.raises(NameSetMismatch):
        ema_update(teacher, {"weight": torch.zeros(2, 3, dtype=torch.float64)}, 0.5)


def test_momentum_range():
    teacher, student = _pair(1.0, 1.0)

    with pytest.raises(ValueError):
        ema_update(teacher, student, 1.5)
