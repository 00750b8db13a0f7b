"""Finite-difference verification of analytic gradients in float64."""

from __future__ import annotations

import logging
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .outputs import ModelError

logger = logging.getLogger(__name__)


class NonDeterministicClosure(ModelError):
    """The loss closure returned different values for identical parameters."""


def _relative_error(analytic: float, numeric: float, scale: float) -> float:
    denominator = max(abs(analytic), abs(numeric), scale)
    if denominator == 0.0:
        return 0.0
    return abs(analytic - numeric) / denominator


def grad_check(
    closure: Callable[[], torch.Tensor],
    params: Iterable[Tuple[str, torch.Tensor]] | nn.Module,
    epsilon: float = 1e-5,
    *,
    samples_per_tensor: Optional[int] = 4,
    seed: int = 0,
) -> float:
    """Return the max relative error of central differences vs autograd.

    ``params`` is a module or ``(name, tensor)`` pairs; every tensor must be
    float64. Frozen tensors (``requires_grad=False``) get an analytic
    gradient of exactly zero and are not probed. ``samples_per_tensor=None``
    probes every entry.

    Each entry is compared against the larger of its two estimates, floored
    at the largest analytic gradient of the same tensor, so the error does not
    depend on the scale of the loss.
    """

    named = list(params.named_parameters() if isinstance(params, nn.Module) else params)
    for name, tensor in named:
        if tensor.dtype != torch.float64:
            raise ModelError(f"grad_check requires float64 parameters; {name} is {tensor.dtype}")

    with torch.no_grad():
        first = closure().item()
        second = closure().item()
    if first != second:
        raise NonDeterministicClosure(f"closure returned {first!r} then {second!r}")

    for _, tensor in named:
        tensor.grad = None
    loss = closure()
    loss.backward()
    analytic: Dict[str, torch.Tensor] = {
        name: (tensor.grad.detach().clone() if tensor.grad is not None else torch.zeros_like(tensor))
        for name, tensor in named
    }

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_at = ""
    for name, tensor in named:
        flat_size = tensor.numel()
        if flat_size == 0 or not tensor.requires_grad:
            continue
        if samples_per_tensor is None or samples_per_tensor >= flat_size:
            indices = np.arange(flat_size)
        else:
            indices = rng.choice(flat_size, size=samples_per_tensor, replace=False)
        flat = tensor.data.view(-1)
        grad = analytic[name].view(-1)
        scale = grad.abs().max().item()
        for index in indices:
            index = int(index)
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + epsilon
                plus = closure().item()
                flat[index] = original - epsilon
                minus = closure().item()
                flat[index] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            error = _relative_error(grad[index].item(), numeric, scale)
            if error > worst:
                worst, worst_at = error, f"{name}[{index}]"
    logger.debug("grad_check max relative error %.3e at %s", worst, worst_at or "-")
    return worst


__all__ = ["NonDeterministicClosure", "grad_check"]
