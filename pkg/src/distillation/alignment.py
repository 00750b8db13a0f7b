"""Spatial grid alignment between student feature maps and teacher token grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class AlignmentReport:
    aligned: bool
    student_grid: Tuple[int, ...]
    teacher_grid: Tuple[int, ...]
    reason: str

    def __str__(self) -> str:
        return f"student {self.student_grid} vs teacher {self.teacher_grid}: {self.reason}"


def alignment_check(student_grid: Tuple[int, ...], teacher_grid: Tuple[int, ...]) -> AlignmentReport:
    student = tuple(int(v) for v in student_grid)
    teacher = tuple(int(v) for v in teacher_grid)
    if not student or not teacher or any(v <= 0 for v in student + teacher):
        return AlignmentReport(False, student, teacher, "degenerate grid")
    if student != teacher:
        return AlignmentReport(False, student, teacher, "spatial dimensions differ")
    return AlignmentReport(True, student, teacher, "aligned")


__all__ = ["AlignmentReport", "alignment_check"]
