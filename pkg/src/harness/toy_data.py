"""Procedural toy depth dataset: sphere caps, boxes and inclined planes over a background plane.

Scenes are rendered orthographically: pixel ``(row, col)`` looks straight down
the optical axis and ``SCENE_WIDTH`` meters span the image width.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.depth_io.formats import DepthFormat, DepthImage, save_depth
from src.depth_io.manifest import ManifestRecord, SourceType, write_manifest
from src.errors import DepthFMError

logger = logging.getLogger(__name__)

SCENE_WIDTH = 2.0
CLASS_NAMES = ("sphere", "box", "plane")
BACKGROUND, FOREGROUND = 0, 1
IGNORE_INDEX = 255


class InvalidSpec(DepthFMError):
    module = "harness"


class ToyDatasetSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    classes: int = Field(3, ge=1, le=len(CLASS_NAMES))
    count: int = Field(600, ge=1)
    val_count: int = Field(60, ge=0)
    size: int = Field(56, ge=8)
    noise: float = Field(0.0, ge=0.0)
    depth_range: Tuple[float, float] = (0.5, 6.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_counts(self) -> "ToyDatasetSpec":
        if self.count < self.classes:
            raise ValueError(f"count={self.count} must be at least classes={self.classes}")
        low, high = self.depth_range
        if not 0 < low < 2.0 or high < 5.5:
            raise ValueError(f"depth_range {self.depth_range} must cover the 2.0-5.5 m scene layout")
        return self

    @classmethod
    def build(cls, **values: object) -> "ToyDatasetSpec":
        try:
            return cls(**values)
        except ValidationError as exc:
            raise InvalidSpec(str(exc)) from exc


@dataclass(frozen=True)
class ToyDataset:
    root: Path
    train_manifest: Path
    val_manifest: Path
    class_names: Tuple[str, ...]


def _coordinates(size: int) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = np.mgrid[0:size, 0:size]
    return rows.astype(np.float64), cols.astype(np.float64)


def render_background(size: int, base: float, slope_x: float, slope_y: float) -> np.ndarray:
    """Plane ``base + slope_x * x + slope_y * y`` with x, y in meters from the image centre."""

    rows, cols = _coordinates(size)
    pitch = SCENE_WIDTH / size
    x = (cols - (size - 1) / 2) * pitch
    y = (rows - (size - 1) / 2) * pitch
    return base + slope_x * x + slope_y * y


def render_sphere_cap(
    size: int,
    center: Tuple[float, float],
    radius_px: float,
    center_depth: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Visible hemisphere of a sphere whose centre lies ``center_depth`` m away.

    Returns the depth map (NaN outside the silhouette) and the silhouette mask.
    """

    rows, cols = _coordinates(size)
    pitch = SCENE_WIDTH / size
    rho2 = ((rows - center[0]) ** 2 + (cols - center[1]) ** 2) * pitch**2
    radius = radius_px * pitch
    mask = rho2 < radius**2
    depth = np.full((size, size), np.nan)
    depth[mask] = center_depth - np.sqrt(radius**2 - rho2[mask])
    return depth, mask


def _rotated(rows: np.ndarray, cols: np.ndarray, center: Tuple[float, float], angle: float):
    du = (cols - center[1]) * np.cos(angle) + (rows - center[0]) * np.sin(angle)
    dv = -(cols - center[1]) * np.sin(angle) + (rows - center[0]) * np.cos(angle)
    return du, dv


def render_box(
    size: int,
    center: Tuple[float, float],
    half_extents: Tuple[float, float],
    angle: float,
    face_depth: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Box seen face-on: a rotated rectangle at constant depth."""

    rows, cols = _coordinates(size)
    du, dv = _rotated(rows, cols, center, angle)
    mask = (np.abs(du) <= half_extents[0]) & (np.abs(dv) <= half_extents[1])
    depth = np.where(mask, face_depth, np.nan)
    return depth, mask


def render_inclined_plane(
    size: int,
    center: Tuple[float, float],
    half_extents: Tuple[float, float],
    angle: float,
    center_depth: float,
    slope: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Rotated rectangular patch whose depth rises ``slope`` m per m along its long axis.

    Per pixel the gradient is ``slope * pitch`` in direction ``angle``
    (``d/dcol = slope * pitch * cos(angle)``, ``d/drow = slope * pitch * sin(angle)``).
    """

    rows, cols = _coordinates(size)
    pitch = SCENE_WIDTH / size
    du, dv = _rotated(rows, cols, center, angle)
    mask = (np.abs(du) <= half_extents[0]) & (np.abs(dv) <= half_extents[1])
    depth = np.where(mask, center_depth + slope * du * pitch, np.nan)
    return depth, mask


def render_toy_image(class_index: int, size: int, rng: np.random.Generator, noise: float = 0.0):
    """Render one scene; returns ``(depth, valid, segmentation)``."""

    background = render_background(
        size,
        base=rng.uniform(4.5, 5.0),
        slope_x=rng.uniform(-0.2, 0.2),
        slope_y=rng.uniform(-0.2, 0.2),
    )
    center = (rng.uniform(0.35, 0.65) * (size - 1), rng.uniform(0.35, 0.65) * (size - 1))
    radius = rng.uniform(0.18, 0.3) * size
    object_depth = rng.uniform(2.0, 3.0)
    angle = rng.uniform(0.0, np.pi)

    if class_index == 0:
        shape, mask = render_sphere_cap(size, center, radius, object_depth)
    elif class_index == 1:
        extents = (radius * rng.uniform(0.7, 1.0), radius * rng.uniform(0.5, 0.9))
        shape, mask = render_box(size, center, extents, angle, object_depth)
    else:
        extents = (radius * rng.uniform(0.8, 1.1), radius * rng.uniform(0.5, 0.8))
        slope = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        shape, mask = render_inclined_plane(size, center, extents, angle, object_depth, slope)

    depth = np.where(mask, np.fmin(shape, background), background)
    if noise > 0:
        depth = depth + rng.standard_normal(depth.shape) * noise * depth
    valid = np.isfinite(depth) & (depth > 0)
    segmentation = np.where(mask, FOREGROUND, BACKGROUND).astype(np.uint8)
    segmentation[~valid] = IGNORE_INDEX
    return np.where(valid, depth, 0.0), valid, segmentation


def _write_split(
    root: Path,
    split: str,
    count: int,
    spec: ToyDatasetSpec,
    offset: int,
) -> List[ManifestRecord]:
    depth_dir = root / "depth"
    label_dir = root / "labels"
    depth_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)
    records: List[ManifestRecord] = []
    for index in range(count):
        class_index = index % spec.classes
        rng = np.random.default_rng([spec.seed, offset + index])
        depth, valid, segmentation = render_toy_image(class_index, spec.size, rng, spec.noise)
        depth = np.clip(depth, *spec.depth_range)
        name = f"{split}_{index:05d}"
        save_depth(
            DepthImage(depth=np.where(valid, depth, 0.0).astype(np.float32), valid=valid),
            depth_dir / f"{name}.dfm",
            DepthFormat.DFM1,
        )
        np.save(label_dir / f"{name}.npy", segmentation)
        records.append(
            ManifestRecord(
                path=f"depth/{name}.dfm",
                source=SourceType.SYNTHETIC,
                domain="toy",
                label=class_index,
                segmentation=f"labels/{name}.npy",
            )
        )
    return records


def gen_toy_dataset(spec: ToyDatasetSpec, output_dir: str | Path) -> ToyDataset:
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    train = _write_split(root, "train", spec.count, spec, offset=0)
    val = _write_split(root, "val", spec.val_count, spec, offset=spec.count)
    train_path = write_manifest(train, root / "train.jsonl")
    val_path = write_manifest(val, root / "val.jsonl")
    class_names = CLASS_NAMES[: spec.classes]
    description = {
        "class_names": list(class_names),
        "segmentation_classes": ["background", "primitive"],
        "ignore_index": IGNORE_INDEX,
        "spec": spec.model_dump(mode="json"),
    }
    (root / "dataset.yaml").write_text(yaml.safe_dump(description, sort_keys=True), encoding="utf-8")
    logger.info("Generated toy dataset at %s (%d train, %d val)", root, len(train), len(val))
    return ToyDataset(root=root, train_manifest=train_path, val_manifest=val_path, class_names=class_names)


__all__ = [
    "CLASS_NAMES",
    "InvalidSpec",
    "SCENE_WIDTH",
    "ToyDataset",
    "ToyDatasetSpec",
    "gen_toy_dataset",
    "render_box",
    "render_inclined_plane",
    "render_sphere_cap",
    "render_toy_image",
]
