"""Linear segmentation probe on frozen patch tokens and IoU bookkeeping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from einops import rearrange
from pydantic import BaseModel, ConfigDict, Field

from src.depth_io.formats import DepthImage
from src.depth_io.stats import ChannelStats
from src.models.network import SSLNetwork

from .features import EvaluationError, InputNormalization, encode_images

logger = logging.getLogger(__name__)

IGNORE_INDEX = 255

SegmentationSample = Tuple[DepthImage, np.ndarray]


class NoLabeledPixels(EvaluationError):
    """Every pixel carries the ignore index."""


class SegmentProbeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_classes: int = Field(2, ge=2)
    ignore_index: int = IGNORE_INDEX
    lr: float = Field(1e-2, gt=0.0)
    epochs: int = Field(100, ge=1)
    weight_decay: float = Field(0.0, ge=0.0)


@dataclass(frozen=True)
class IoUResult:
    miou: float
    per_class: Dict[int, float] = field(default_factory=dict)


class IoUAccumulator:
    """Dataset-level intersection and union counts per class."""

    def __init__(self, num_classes: int, ignore_index: int = IGNORE_INDEX):
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.intersection = np.zeros(num_classes, dtype=np.int64)
        self.union = np.zeros(num_classes, dtype=np.int64)
        self.present = np.zeros(num_classes, dtype=bool)
        self.labeled = 0

    def update(self, prediction: np.ndarray, target: np.ndarray) -> None:
        if prediction.shape != target.shape:
            raise EvaluationError(f"prediction {prediction.shape} and target {target.shape} differ")
        labeled = target != self.ignore_index
        if np.any(target[labeled] >= self.num_classes) or np.any(target[labeled] < 0):
            raise EvaluationError(f"target holds class indices outside [0, {self.num_classes})")
        self.labeled += int(labeled.sum())
        for cls in range(self.num_classes):
            pred_c = (prediction == cls) & labeled
            true_c = (target == cls) & labeled
            self.intersection[cls] += int(np.count_nonzero(pred_c & true_c))
            self.union[cls] += int(np.count_nonzero(pred_c | true_c))
            self.present[cls] |= bool(true_c.any())

    def result(self) -> IoUResult:
        if self.labeled == 0:
            raise NoLabeledPixels("no labeled pixels to score")
        per_class = {
            cls: float(self.intersection[cls] / self.union[cls])
            for cls in range(self.num_classes)
            if self.present[cls]
        }
        return IoUResult(miou=float(np.mean(list(per_class.values()))), per_class=per_class)


def compute_iou(
    prediction: np.ndarray,
    target: np.ndarray,
    num_classes: int,
    ignore_index: int = IGNORE_INDEX,
) -> IoUResult:
    """mIoU over the classes present in ``target``; ignore-index pixels never count."""

    accumulator = IoUAccumulator(num_classes, ignore_index)
    accumulator.update(np.asarray(prediction), np.asarray(target))
    return accumulator.result()


@dataclass(frozen=True)
class SegmentationResult:
    iou: IoUResult
    weight: np.ndarray
    bias: np.ndarray

    @property
    def miou(self) -> float:
        return self.iou.miou


def _upsampled_logits(tokens: torch.Tensor, grid: Tuple[int, int], size: Tuple[int, int]) -> torch.Tensor:
    """(N, C) token logits -> (1, C, H, W) by bilinear interpolation."""

    logits = rearrange(tokens, "(h w) c -> 1 c h w", h=grid[0], w=grid[1])
    return F.interpolate(logits, size=size, mode="bilinear", align_corners=False)


def segment_probe(
    network: SSLNetwork,
    train: Sequence[SegmentationSample],
    val: Sequence[SegmentationSample],
    stats: Optional[ChannelStats],
    config: SegmentProbeConfig | None = None,
    *,
    size: int,
    normalization: InputNormalization = "log",
    batch_size: int = 32,
) -> SegmentationResult:
    """Train a linear classifier on patch tokens against full-resolution labels.

    Token logits are bilinearly upsampled to each label map before the loss and
    before the argmax used for scoring.
    """

    config = config or SegmentProbeConfig()
    if not train or not val:
        raise EvaluationError("segmentation probe needs train and validation samples")

    def _encode(samples: Sequence[SegmentationSample]) -> Tuple[torch.Tensor, Tuple[int, int]]:
        _, patches, grid = encode_images(
            network,
            [image for image, _ in samples],
            stats,
            size=size,
            normalization=normalization,
            batch_size=batch_size,
        )
        return torch.from_numpy(patches), grid

    train_tokens, grid = _encode(train)
    train_labels: List[torch.Tensor] = [torch.from_numpy(labels.astype(np.int64)) for _, labels in train]
    labeled = sum(int((labels != config.ignore_index).sum()) for labels in train_labels)
    if labeled == 0:
        raise NoLabeledPixels("training label maps carry only the ignore index")

    mean = train_tokens.mean(dim=(0, 1))
    std = train_tokens.std(dim=(0, 1)).clamp_min(1e-8)
    train_tokens = (train_tokens - mean) / std

    dim = train_tokens.shape[-1]
    weight = torch.zeros(config.num_classes, dim, dtype=torch.float64, requires_grad=True)
    bias = torch.zeros(config.num_classes, dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam([weight, bias], lr=config.lr, weight_decay=config.weight_decay)
    for epoch in range(config.epochs):
        optimizer.zero_grad(set_to_none=True)
        loss = train_tokens.new_zeros(())
        for tokens, labels in zip(train_tokens, train_labels):
            logits = _upsampled_logits(tokens @ weight.t() + bias, grid, tuple(labels.shape))
            loss = loss + F.cross_entropy(logits, labels[None], ignore_index=config.ignore_index, reduction="sum")
        (loss / labeled).backward()
        optimizer.step()
        if epoch % 25 == 0:
            logger.debug("segmentation probe epoch %d loss %.4f", epoch, float(loss) / labeled)

    val_tokens, val_grid = _encode(val)
    val_tokens = (val_tokens - mean) / std
    accumulator = IoUAccumulator(config.num_classes, config.ignore_index)
    with torch.no_grad():
        for tokens, (_, labels) in zip(val_tokens, val):
            logits = _upsampled_logits(tokens @ weight.t() + bias, val_grid, labels.shape)
            accumulator.update(logits[0].argmax(dim=0).numpy(), labels)
    return SegmentationResult(iou=accumulator.result(), weight=weight.detach().numpy(), bias=bias.detach().numpy())


__all__ = [
    "IGNORE_INDEX",
    "IoUAccumulator",
    "IoUResult",
    "NoLabeledPixels",
    "SegmentProbeConfig",
    "SegmentationResult",
    "SegmentationSample",
    "compute_iou",
    "segment_probe",
]
