"""Inference latency, parameter count and a dense-layer FLOP estimate."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import List

import numpy as np
import torch
import torch.nn as nn

from src.models.network import SSLNetwork, parameter_count

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchResult:
    mean_ms: float
    median_ms: float
    p95_ms: float
    samples: List[float]
    parameter_count: int
    flops: int
    batch_size: int
    input_size: int


def estimate_flops(module: nn.Module, example: torch.Tensor) -> int:
    """Multiply-add FLOPs (2 per MAC) of every Linear and Conv2d in one forward.

    Attention score products and normalisation layers are not counted.
    """

    total = 0

    def _linear(layer: nn.Linear, _inputs, output: torch.Tensor) -> None:
        nonlocal total
        total += 2 * layer.in_features * output.numel()

    def _conv(layer: nn.Conv2d, _inputs, output: torch.Tensor) -> None:
        nonlocal total
        kernel = layer.kernel_size[0] * layer.kernel_size[1] * (layer.in_channels // layer.groups)
        total += 2 * kernel * output.numel()

    handles = []
    for child in module.modules():
        if isinstance(child, nn.Linear):
            handles.append(child.register_forward_hook(_linear))
        elif isinstance(child, nn.Conv2d):
            handles.append(child.register_forward_hook(_conv))
    try:
        with torch.no_grad():
            module(example)
    finally:
        for handle in handles:
            handle.remove()
    return total


@torch.no_grad()
def bench(
    network: SSLNetwork,
    *,
    input_size: int,
    batch_size: int = 1,
    repetitions: int = 10,
    warmup: int = 2,
) -> BenchResult:
    """Wall-clock backbone forwards after ``warmup`` untimed passes."""

    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    backbone = network.backbone
    backbone.eval()
    parameter = next(backbone.parameters())
    example = torch.zeros(batch_size, 3, input_size, input_size, dtype=parameter.dtype, device=parameter.device)

    for _ in range(warmup):
        backbone(example)
    samples: List[float] = []
    for _ in range(repetitions):
        start = time.perf_counter()
        backbone(example)
        samples.append((time.perf_counter() - start) * 1000.0)

    values = np.asarray(samples)
    result = BenchResult(
        mean_ms=float(values.mean()),
        median_ms=float(np.median(values)),
        p95_ms=float(np.percentile(values, 95)),
        samples=samples,
        parameter_count=parameter_count(backbone),
        flops=estimate_flops(backbone, example),
        batch_size=batch_size,
        input_size=input_size,
    )
    logger.info(
        "bench %s %dpx x%d: mean %.2f ms, median %.2f ms, p95 %.2f ms",
        network.arch,
        input_size,
        batch_size,
        result.mean_ms,
        result.median_ms,
        result.p95_ms,
    )
    return result


__all__ = ["BenchResult", "bench", "estimate_flops"]
