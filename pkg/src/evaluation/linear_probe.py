"""Linear probing: one affine softmax layer on frozen features."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

from .features import DimensionMismatch, EvaluationError, FeatureSet

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8


class SingleClassTrainSet(EvaluationError):
    """Training labels hold a single class but validation asks for others."""


class ProbeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rates: Tuple[float, ...] = Field((1e-3, 1e-2, 1e-1), min_length=1)
    epochs: int = Field(200, ge=1)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.0, ge=0.0)
    standardize: bool = True


@dataclass(frozen=True)
class ProbeResult:
    linear_acc: float
    best_lr: float
    weights: np.ndarray
    bias: np.ndarray
    accuracy_by_lr: Dict[float, float] = field(default_factory=dict)


def _train_affine(
    features: torch.Tensor,
    labels: torch.Tensor,
    num_classes: int,
    lr: float,
    config: ProbeConfig,
) -> Tuple[torch.Tensor, torch.Tensor]:
    # Zero init keeps the convex problem deterministic without a seed.
    weight = torch.zeros(num_classes, features.shape[1], dtype=torch.float64, requires_grad=True)
    bias = torch.zeros(num_classes, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.SGD([weight, bias], lr=lr, momentum=config.momentum, weight_decay=config.weight_decay)
    for _ in range(config.epochs):
        optimizer.zero_grad(set_to_none=True)
        loss = F.cross_entropy(features @ weight.t() + bias, labels)
        loss.backward()
        optimizer.step()
    return weight.detach(), bias.detach()


def linear_probe(train: FeatureSet, val: FeatureSet, config: ProbeConfig | None = None) -> ProbeResult:
    """Full-batch softmax regression over the learning-rate grid; best validation accuracy wins."""

    config = config or ProbeConfig()
    if train.dim != val.dim:
        raise DimensionMismatch(f"train width {train.dim} != val width {val.dim}")
    train_labels = train.require_labels()
    val_labels = val.require_labels()
    num_classes = int(max(train_labels.max(), val_labels.max())) + 1

    present = np.unique(train_labels)
    if present.size == 1:
        only = int(present[0])
        if np.any(val_labels != only):
            raise SingleClassTrainSet(f"train set holds only class {only} but validation contains others")
        weights = np.zeros((num_classes, train.dim))
        bias = np.zeros(num_classes)
        bias[only] = 1.0
        return ProbeResult(linear_acc=1.0, best_lr=0.0, weights=weights, bias=bias, accuracy_by_lr={})

    mean = train.embeddings.mean(axis=0) if config.standardize else np.zeros(train.dim)
    std = np.maximum(train.embeddings.std(axis=0), STD_FLOOR) if config.standardize else np.ones(train.dim)
    x_train = torch.from_numpy((train.embeddings - mean) / std)
    x_val = torch.from_numpy((val.embeddings - mean) / std)
    y_train = torch.from_numpy(train_labels.astype(np.int64))

    best: ProbeResult | None = None
    accuracy_by_lr: Dict[float, float] = {}
    for lr in config.learning_rates:
        weight, bias = _train_affine(x_train, y_train, num_classes, lr, config)
        predictions = (x_val @ weight.t() + bias).argmax(dim=1).numpy()
        accuracy = float(np.mean(predictions == val_labels))
        accuracy_by_lr[lr] = accuracy
        logger.debug("linear probe lr=%g accuracy=%.4f", lr, accuracy)
        if best is None or accuracy > best.linear_acc:
            # Fold the standardisation into the returned affine map.
            raw_weight = weight.numpy() / std
            raw_bias = bias.numpy() - raw_weight @ mean
            best = ProbeResult(linear_acc=accuracy, best_lr=lr, weights=raw_weight, bias=raw_bias)
    assert best is not None
    return ProbeResult(
        linear_acc=best.linear_acc,
        best_lr=best.best_lr,
        weights=best.weights,
        bias=best.bias,
        accuracy_by_lr=accuracy_by_lr,
    )


__all__ = ["ProbeConfig", "ProbeResult", "SingleClassTrainSet", "linear_probe"]
