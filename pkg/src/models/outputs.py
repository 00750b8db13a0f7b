"""Output containers shared by every backbone."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import torch
from einops import rearrange

from src.errors import DepthFMError


class ModelError(DepthFMError):
    module = "model_core"


class ShapeMismatch(ModelError):
    """Input, mask or embedding shape violates the model's divisibility rules."""


@dataclass(frozen=True)
class EncoderOutput:
    """Global embedding plus a row-major token grid.

    ``cls``: (B, D); ``patches``: (B, h*w, D); ``grid``: (h, w).
    """

    cls: torch.Tensor
    patches: torch.Tensor
    grid: Tuple[int, int]

    def patch_grid(self) -> torch.Tensor:
        """Tokens as a (B, D, h, w) feature map."""

        return rearrange(self.patches, "b (h w) d -> b d h w", h=self.grid[0], w=self.grid[1])


@dataclass(frozen=True)
class ViTOutput(EncoderOutput):
    """Class token and patch tokens of a vision transformer."""


@dataclass(frozen=True)
class PyramidFeatures:
    """Fused maps keyed by stride (8, 16, 32) and the pooled stride-16 vector."""

    maps: Dict[int, torch.Tensor]
    pooled: torch.Tensor

    def as_encoder_output(self) -> EncoderOutput:
        dense = self.maps[16]
        height, width = int(dense.shape[-2]), int(dense.shape[-1])
        return EncoderOutput(
            cls=self.pooled,
            patches=rearrange(dense, "b c h w -> b (h w) c"),
            grid=(height, width),
        )


__all__ = ["EncoderOutput", "ModelError", "PyramidFeatures", "ShapeMismatch", "ViTOutput"]
