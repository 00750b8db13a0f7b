"""PCA visualisation of patch tokens and portable pixmap output."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import linalg

from .features import EvaluationError

logger = logging.getLogger(__name__)

RELATIVE_EIGEN_TOL = 1e-10


class DegenerateFeatures(EvaluationError):
    """Too few tokens, or tokens without any variance."""


@dataclass(frozen=True)
class PCAFit:
    """``components`` rows are unit eigenvectors sorted by decreasing eigenvalue."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray

    def transform(self, tokens: np.ndarray) -> np.ndarray:
        return (tokens - self.mean) @ self.components.T


def fit_pca(tokens: np.ndarray, component_count: int) -> PCAFit:
    """Eigendecomposition of the token covariance.

    Each component is signed so that its largest-magnitude projection is
    positive, which makes the fit reproducible across solvers.
    """

    if tokens.ndim != 2 or tokens.shape[0] < 2:
        raise DegenerateFeatures(f"PCA needs at least two tokens, got shape {tokens.shape}")
    mean = tokens.mean(axis=0)
    centered = tokens - mean
    covariance = centered.T @ centered / (tokens.shape[0] - 1)
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]
    total = float(eigenvalues.sum())
    if total <= 0:
        raise DegenerateFeatures("tokens have zero variance")

    count = min(component_count, eigenvectors.shape[1])
    components = eigenvectors[:, :count].T.copy()
    scores = centered @ components.T
    for index in range(count):
        pivot = int(np.argmax(np.abs(scores[:, index])))
        if scores[pivot, index] < 0:
            components[index] *= -1.0
    return PCAFit(
        mean=mean,
        components=components,
        eigenvalues=eigenvalues[:count],
        explained_ratio=eigenvalues[:count] / total,
    )


def _border_mask(height: int, width: int) -> np.ndarray:
    border = np.zeros((height, width), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    return border


def pca_visualize(
    token_grids: Sequence[np.ndarray],
    component_count: int = 3,
    background_threshold: Optional[float] = 0.0,
) -> List[np.ndarray]:
    """Map patch tokens of each ``(h, w, d)`` grid to an ``(h, w, 3)`` image in [0, 1].

    A first PCA over all tokens separates foreground from background by
    thresholding its first component, oriented so border tokens fall on the
    background side. A second PCA is fit on foreground tokens and its
    components are min-max scaled per channel across the set; background
    tokens are black. ``background_threshold=None`` keeps every token.
    Components with negligible variance render as a constant zero channel.
    """

    grids = [np.asarray(grid, dtype=np.float64) for grid in token_grids]
    if not grids:
        raise DegenerateFeatures("no token grids supplied")
    total_tokens = sum(grid.shape[0] * grid.shape[1] for grid in grids)
    if len(grids) < 2 and total_tokens < 4:
        raise DegenerateFeatures("need at least two images or four tokens")
    dim = grids[0].shape[-1]
    pooled = np.concatenate([grid.reshape(-1, dim) for grid in grids])

    foreground = np.ones(pooled.shape[0], dtype=bool)
    if background_threshold is not None:
        first = fit_pca(pooled, 1)
        scores = first.transform(pooled)[:, 0]
        border = np.concatenate([_border_mask(*grid.shape[:2]).ravel() for grid in grids])
        if scores[border].mean() > background_threshold:
            scores = -scores
        foreground = scores > background_threshold
        if foreground.sum() < 2:
            logger.warning("Background threshold left %d foreground tokens; using all tokens", int(foreground.sum()))
            foreground = np.ones(pooled.shape[0], dtype=bool)

    fit = fit_pca(pooled[foreground], component_count)
    projected = fit.transform(pooled)
    channels = np.zeros((pooled.shape[0], 3), dtype=np.float64)
    lead = fit.eigenvalues[0]
    for index in range(min(3, fit.components.shape[0])):
        if fit.eigenvalues[index] <= RELATIVE_EIGEN_TOL * lead:
            continue
        values = projected[foreground, index]
        low, high = float(values.min()), float(values.max())
        if high > low:
            channels[:, index] = np.clip((projected[:, index] - low) / (high - low), 0.0, 1.0)
    channels[~foreground] = 0.0

    images: List[np.ndarray] = []
    offset = 0
    for grid in grids:
        height, width = grid.shape[:2]
        images.append(channels[offset : offset + height * width].reshape(height, width, 3))
        offset += height * width
    return images


def write_ppm(path: str | Path, rgb: np.ndarray, *, binary: bool = True, scale: int = 1) -> Path:
    """Write an ``(h, w, 3)`` array in [0, 1] as P6 (binary) or P3 (ASCII), 8-bit."""

    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"expected (h, w, 3) image, got {rgb.shape}")
    pixels = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    if scale > 1:
        pixels = pixels.repeat(scale, axis=0).repeat(scale, axis=1)
    height, width = pixels.shape[:2]
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if binary:
        target.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
    else:
        rows = [" ".join(str(int(v)) for v in row.ravel()) for row in pixels]
        target.write_text(f"P3\n{width} {height}\n255\n" + "\n".join(rows) + "\n", encoding="ascii")
    return target


__all__ = ["DegenerateFeatures", "PCAFit", "fit_pca", "pca_visualize", "write_ppm"]
