"""Multi-crop view generation (global + local views with patch masks)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.depth_io.formats import DepthImage
from src.depth_io.stats import ChannelStats
from src.errors import DepthFMError
from src.normalization.channels import NormalizedInput, normalize

from .depth_noise import AugmentParams, depth_augment
from .masking import generate_patch_mask

logger = logging.getLogger(__name__)

CROP_ATTEMPTS = 10


class AugmentationError(DepthFMError):
    module = "augmentation"


class ImageTooSmall(AugmentationError):
    """Source image is below the crop size and upsampling is disabled."""


class CropConfig(BaseModel):
    """Multi-crop geometry and masking recipe."""

    model_config = ConfigDict(frozen=True)

    global_count: int = Field(2, ge=2)
    local_count: int = Field(8, ge=0)
    global_size: int = 224
    local_size: int = 98
    patch_size: int = 14
    global_scale: Tuple[float, float] = (0.32, 1.0)
    local_scale: Tuple[float, float] = (0.05, 0.32)
    aspect_ratio_range: Tuple[float, float] = (3 / 4, 4 / 3)
    mask_ratio_range: Tuple[float, float] = (0.1, 0.5)
    mask_sample_prob: float = Field(0.5, ge=0.0, le=1.0)
    upsample_small: bool = True

    @model_validator(mode="after")
    def _check_geometry(self) -> "CropConfig":
        if self.patch_size <= 0:
            raise ValueError("patch_size must be positive")
        for name in ("global_size", "local_size"):
            size = getattr(self, name)
            if size <= 0 or size % self.patch_size:
                raise ValueError(f"{name}={size} must be a positive multiple of patch_size={self.patch_size}")
        lo, hi = self.mask_ratio_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"mask_ratio_range must satisfy 0 <= lo <= hi <= 1, got {(lo, hi)}")
        for name in ("global_scale", "local_scale", "aspect_ratio_range"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ValueError(f"{name} must be an ordered positive range, got {(low, high)}")
        return self

    @property
    def global_grid(self) -> Tuple[int, int]:
        side = self.global_size // self.patch_size
        return side, side

    @property
    def local_grid(self) -> Tuple[int, int]:
        side = self.local_size // self.patch_size
        return side, side


@dataclass(frozen=True)
class CropSet:
    """G global views, L local views and one patch mask per view (locals all-false)."""

    globals: List[NormalizedInput]
    locals: List[NormalizedInput]
    masks: List[np.ndarray]
    local_masks: List[np.ndarray]


@dataclass(frozen=True)
class CropBatch:
    """View-major stack of a batch of CropSets.

    ``globals``: (G, B, 3, S, S); ``locals``: (L, B, 3, s, s); ``masks``: (G, B, h, w).
    """

    globals: torch.Tensor
    locals: Optional[torch.Tensor]
    masks: torch.Tensor

    @property
    def global_count(self) -> int:
        return int(self.globals.shape[0])

    @property
    def local_count(self) -> int:
        return 0 if self.locals is None else int(self.locals.shape[0])

    @property
    def batch_size(self) -> int:
        return int(self.globals.shape[1])

    @classmethod
    def collate(cls, crop_sets: Sequence[CropSet], dtype: torch.dtype = torch.float32) -> "CropBatch":
        globals_ = torch.stack(
            [torch.stack([view.to_tensor(dtype) for view in crops.globals]) for crops in crop_sets], dim=1
        )
        masks = torch.stack(
            [torch.stack([torch.from_numpy(mask) for mask in crops.masks]) for crops in crop_sets], dim=1
        )
        locals_ = None
        if crop_sets and crop_sets[0].locals:
            locals_ = torch.stack(
                [torch.stack([view.to_tensor(dtype) for view in crops.locals]) for crops in crop_sets], dim=1
            )
        return cls(globals=globals_, locals=locals_, masks=masks)

    def to(self, dtype: torch.dtype, device: Optional[torch.device | str] = None) -> "CropBatch":
        return CropBatch(
            globals=self.globals.to(device=device, dtype=dtype),
            locals=None if self.locals is None else self.locals.to(device=device, dtype=dtype),
            masks=self.masks.to(device=device),
        )


def resize_depth(image: DepthImage, height: int, width: int) -> DepthImage:
    """Bilinear resize in meters that ignores holes (normalised convolution).

    A target pixel is valid when more than half of its interpolation weight comes
    from valid source pixels.
    """

    if image.shape == (height, width):
        return image
    weights = torch.from_numpy(image.valid.astype(np.float64))[None, None]
    values = torch.from_numpy(np.where(image.valid, image.depth, 0.0).astype(np.float64))[None, None]
    num = F.interpolate(values, size=(height, width), mode="bilinear", align_corners=False)[0, 0].numpy()
    den = F.interpolate(weights, size=(height, width), mode="bilinear", align_corners=False)[0, 0].numpy()
    valid = den > 0.5
    depth = np.where(valid, num / np.where(valid, den, 1.0), 0.0)
    return DepthImage(depth=depth.astype(np.float32), valid=valid)


def _sample_box(
    shape: Tuple[int, int],
    scale: Tuple[float, float],
    ratio: Tuple[float, float],
    rng: np.random.Generator,
) -> Tuple[int, int, int, int]:
    height, width = shape
    area = height * width
    log_ratio = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(CROP_ATTEMPTS):
        target_area = area * rng.uniform(*scale)
        aspect = math.exp(rng.uniform(*log_ratio))
        crop_w = int(round(math.sqrt(target_area * aspect)))
        crop_h = int(round(math.sqrt(target_area / aspect)))
        if 0 < crop_w <= width and 0 < crop_h <= height:
            top = int(rng.integers(0, height - crop_h + 1))
            left = int(rng.integers(0, width - crop_w + 1))
            return top, left, crop_h, crop_w
    # Fall back to the largest centred crop.
    side = min(height, width)
    return (height - side) // 2, (width - side) // 2, side, side


def random_resized_crop(
    image: DepthImage,
    size: int,
    scale: Tuple[float, float],
    ratio: Tuple[float, float],
    rng: np.random.Generator,
) -> DepthImage:
    """Random box of the given area fraction and aspect ratio, resized to ``size x size``.

    Boxes without a single valid pixel are redrawn; after repeated failure the
    whole image is used.
    """

    for _ in range(CROP_ATTEMPTS):
        top, left, crop_h, crop_w = _sample_box(image.shape, scale, ratio, rng)
        window = image.valid[top : top + crop_h, left : left + crop_w]
        if window.any():
            crop = DepthImage(
                depth=image.depth[top : top + crop_h, left : left + crop_w].copy(),
                valid=window.copy(),
            )
            resized = resize_depth(crop, size, size)
            if resized.valid_count:
                return resized
    logger.warning("Crop landed in sensor holes %d times; using the full image", CROP_ATTEMPTS)
    return resize_depth(image, size, size)


def _ensure_min_size(image: DepthImage, cfg: CropConfig) -> DepthImage:
    minimum = 2 * cfg.patch_size
    if image.height >= minimum and image.width >= minimum:
        return image
    if not cfg.upsample_small:
        raise ImageTooSmall(f"image {image.shape} is below {minimum}px and upsampling is disabled")
    factor = minimum / min(image.height, image.width)
    height = max(minimum, int(math.ceil(image.height * factor)))
    width = max(minimum, int(math.ceil(image.width * factor)))
    logger.debug("Upsampling %s image to %dx%d before cropping", image.shape, height, width)
    return resize_depth(image, height, width)


def _make_view(
    image: DepthImage,
    size: int,
    scale: Tuple[float, float],
    cfg: CropConfig,
    augment: AugmentParams,
    stats: Optional[ChannelStats],
    rng: np.random.Generator,
) -> NormalizedInput:
    crop = random_resized_crop(image, size, scale, cfg.aspect_ratio_range, rng)
    augmented = depth_augment(crop, augment, rng)
    if augmented.valid_count == 0:
        augmented = crop
    return normalize(augmented, stats)


def multi_crop(
    image: DepthImage,
    cfg: CropConfig,
    stats: Optional[ChannelStats],
    rng: np.random.Generator,
    augment: Optional[AugmentParams] = None,
) -> CropSet:
    """Crop, augment (in meters) and normalise G global and L local views."""

    augment = augment or AugmentParams()
    source = _ensure_min_size(image, cfg)

    globals_: List[NormalizedInput] = []
    masks: List[np.ndarray] = []
    for _ in range(cfg.global_count):
        globals_.append(_make_view(source, cfg.global_size, cfg.global_scale, cfg, augment, stats, rng))
        ratio = rng.uniform(*cfg.mask_ratio_range)
        if rng.random() < cfg.mask_sample_prob:
            masks.append(generate_patch_mask(cfg.global_grid, ratio, rng))
        else:
            masks.append(np.zeros(cfg.global_grid, dtype=bool))

    locals_ = [
        _make_view(source, cfg.local_size, cfg.local_scale, cfg, augment, stats, rng)
        for _ in range(cfg.local_count)
    ]
    local_masks = [np.zeros(cfg.local_grid, dtype=bool) for _ in range(cfg.local_count)]
    return CropSet(globals=globals_, locals=locals_, masks=masks, local_masks=local_masks)


__all__ = [
    "AugmentationError",
    "CropBatch",
    "CropConfig",
    "CropSet",
    "ImageTooSmall",
    "multi_crop",
    "random_resized_crop",
    "resize_depth",
]
