"""Multi-crop views, depth augmentations, and patch masks."""

from .batches import BatchBuilder, prefetch_batches
from .crops import (
    AugmentationError,
    CropBatch,
    CropConfig,
    CropSet,
    ImageTooSmall,
    multi_crop,
    random_resized_crop,
    resize_depth,
)
from .depth_noise import AugmentParams, depth_augment, flip_horizontal, punch_holes, scale_depth
from .masking import generate_patch_mask

__all__ = [
    "AugmentParams",
    "AugmentationError",
    "BatchBuilder",
    "CropBatch",
    "CropConfig",
    "CropSet",
    "ImageTooSmall",
    "depth_augment",
    "flip_horizontal",
    "generate_patch_mask",
    "multi_crop",
    "prefetch_batches",
    "punch_holes",
    "random_resized_crop",
    "resize_depth",
    "scale_depth",
]
