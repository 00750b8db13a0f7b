"""Sinkhorn-Knopp centering of teacher logits."""

from __future__ import annotations

import torch

from src.errors import DepthFMError

TRAINING_ITERATIONS = 3
VERIFICATION_ITERATIONS = 50


class ObjectiveError(DepthFMError):
    module = "ssl_objectives"


class NonFiniteLogits(ObjectiveError):
    """Teacher logits contain NaN or infinity."""


@torch.no_grad()
def sinkhorn_normalize(
    teacher_logits: torch.Tensor,
    temperature: float,
    iterations: int = TRAINING_ITERATIONS,
) -> torch.Tensor:
    """Rescale ``exp(logits / temperature)`` toward a balanced assignment.

    Each iteration normalises prototype totals to ``B / K`` then sample rows to
    one, so the returned rows are distributions. A single-row batch carries
    no batch constraint and reduces to a softmax.
    """

    if teacher_logits.ndim != 2:
        raise ValueError(f"expected (B, K) logits, got shape {tuple(teacher_logits.shape)}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not torch.isfinite(teacher_logits).all():
        raise NonFiniteLogits("teacher logits contain non-finite values")

    scaled = teacher_logits / temperature
    batch, prototypes = scaled.shape
    if batch == 1:
        return torch.softmax(scaled, dim=-1)

    # Work prototype-major like the column/row formulation; the global max
    # shift cancels in the first normalisation.
    q = torch.exp(scaled - scaled.max()).t()
    q = q / q.sum()
    for _ in range(iterations):
        q = q / q.sum(dim=1, keepdim=True)
        q = q / prototypes
        q = q / q.sum(dim=0, keepdim=True)
        q = q / batch
    q = q * batch
    return q.t()


__all__ = [
    "NonFiniteLogits",
    "ObjectiveError",
    "TRAINING_ITERATIONS",
    "VERIFICATION_ITERATIONS",
    "sinkhorn_normalize",
]
