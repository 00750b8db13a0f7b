"""Frozen feature extraction shared by every probe."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch

from src.augmentation.crops import resize_depth
from src.depth_io.formats import DepthImage
from src.depth_io.manifest import ManifestRecord
from src.depth_io.stats import ChannelStats
from src.errors import DepthFMError
from src.models.network import SSLNetwork
from src.normalization.channels import baseline_minmax_normalize, normalize

logger = logging.getLogger(__name__)

InputNormalization = Literal["log", "minmax"]


class EvaluationError(DepthFMError):
    module = "evaluation"


class DimensionMismatch(EvaluationError):
    """Feature sets have different embedding widths."""


@dataclass(frozen=True)
class FeatureSet:
    """``embeddings`` (n, d) with optional labels and per-image patch grids (n, h*w, d)."""

    embeddings: np.ndarray
    labels: Optional[np.ndarray] = None
    patches: Optional[np.ndarray] = None
    grid: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1:
            raise EvaluationError(f"embeddings must be (n>=1, d), got {self.embeddings.shape}")
        if self.labels is not None:
            if self.labels.shape != (self.embeddings.shape[0],):
                raise EvaluationError("labels must hold one class index per embedding")
            if np.any(self.labels < 0):
                raise EvaluationError("labels must be nonnegative class indices")

    @property
    def n(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise EvaluationError("feature set carries no labels")
        return self.labels


def prepare_input(
    image: DepthImage,
    size: int,
    stats: Optional[ChannelStats],
    normalization: InputNormalization = "log",
) -> np.ndarray:
    """Resize to ``size x size`` and normalise to a (3, size, size) float64 array."""

    resized = resize_depth(image, size, size)
    if normalization == "minmax":
        return baseline_minmax_normalize(resized, dtype=np.float64)
    return normalize(resized, stats, dtype=np.float64).channels


@torch.no_grad()
def encode_images(
    network: SSLNetwork,
    images: Sequence[DepthImage],
    stats: Optional[ChannelStats],
    *,
    size: int,
    normalization: InputNormalization = "log",
    batch_size: int = 32,
    workers: int = 1,
    keep_patches: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray], Tuple[int, int]]:
    """Return global vectors (n, d), patch tokens (n, h*w, d) and the token grid."""

    was_training = network.training
    network.eval()
    dtype = network.dtype
    device = next(network.parameters()).device

    def _prepare(image: DepthImage) -> np.ndarray:
        return prepare_input(image, size, stats, normalization)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            arrays = list(executor.map(_prepare, images))
    else:
        arrays = [_prepare(image) for image in images]

    globals_: List[np.ndarray] = []
    patches: List[np.ndarray] = []
    grid: Tuple[int, int] = (0, 0)
    for start in range(0, len(arrays), batch_size):
        chunk = torch.from_numpy(np.stack(arrays[start : start + batch_size])).to(device=device, dtype=dtype)
        encoded = network.encode(chunk)
        grid = encoded.grid
        globals_.append(encoded.cls.double().cpu().numpy())
        if keep_patches:
            patches.append(encoded.patches.double().cpu().numpy())
    network.train(was_training)
    logger.debug("Encoded %d images at %dpx into %s token grids", len(arrays), size, grid)
    return np.concatenate(globals_), (np.concatenate(patches) if keep_patches else None), grid


def extract_features(
    network: SSLNetwork,
    records: Sequence[ManifestRecord],
    stats: Optional[ChannelStats],
    *,
    size: int,
    normalization: InputNormalization = "log",
    batch_size: int = 32,
    workers: int = 1,
    keep_patches: bool = False,
) -> FeatureSet:
    if not records:
        raise EvaluationError("cannot extract features from an empty manifest")
    images = [record.load() for record in records]
    embeddings, patches, grid = encode_images(
        network,
        images,
        stats,
        size=size,
        normalization=normalization,
        batch_size=batch_size,
        workers=workers,
        keep_patches=keep_patches,
    )
    labels = None
    if all(record.label is not None for record in records):
        labels = np.array([record.label for record in records], dtype=np.int64)
    return FeatureSet(embeddings=embeddings, labels=labels, patches=patches, grid=grid if keep_patches else None)


__all__ = [
    "DimensionMismatch",
    "EvaluationError",
    "FeatureSet",
    "InputNormalization",
    "encode_images",
    "extract_features",
    "prepare_input",
]
