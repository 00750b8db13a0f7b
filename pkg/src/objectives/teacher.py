"""EMA teacher state and its momentum update."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import torch
import torch.nn as nn

from src.models.network import SSLNetwork

from .sinkhorn import ObjectiveError

logger = logging.getLogger(__name__)


class NameSetMismatch(ObjectiveError):
    """Teacher and student expose different parameter names."""


@dataclass
class TeacherState:
    """Gradient-free EMA copy of the student plus its current coefficients."""

    network: SSLNetwork
    momentum: float
    temperature: float

    @classmethod
    def from_student(cls, student: SSLNetwork, momentum: float, temperature: float) -> "TeacherState":
        network = copy.deepcopy(student)
        network.requires_grad_(False)
        network.eval()
        return cls(network=network, momentum=momentum, temperature=temperature)

    def model_params(self) -> Dict[str, torch.Tensor]:
        return self.network.model_params()


def _named(source: nn.Module | Mapping[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
    if isinstance(source, nn.Module):
        return dict(source.named_parameters())
    return dict(source)


@torch.no_grad()
def ema_update(
    teacher: TeacherState,
    student: nn.Module | Mapping[str, torch.Tensor],
    m: float,
) -> TeacherState:
    """``teacher <- m * teacher + (1 - m) * student`` for every named parameter."""

    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")
    target = dict(teacher.network.named_parameters())
    source = _named(student)
    if set(target) != set(source):
        missing = sorted(set(target) ^ set(source))
        raise NameSetMismatch(f"parameter names differ: {missing[:5]}")
    for name, tensor in target.items():
        tensor.mul_(m).add_(source[name].detach(), alpha=1.0 - m)
    teacher.momentum = m
    return teacher


__all__ = ["NameSetMismatch", "TeacherState", "ema_update"]
