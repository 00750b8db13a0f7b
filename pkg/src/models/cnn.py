"""Small four-stage CNN with a BiFPN neck.

The backbone taps stages at strides 8, 16 and 32. The neck repeats a
top-down then bottom-up fusion pass where every node mixes its inputs with
fast-normalised learned weights ``relu(w) / (sum(relu(w)) + eps)``.
"""

from __future__ import annotations

import math
from typing import List, Literal, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .outputs import ModelError, PyramidFeatures, ShapeMismatch

STRIDES: Tuple[int, int, int] = (8, 16, 32)


class CNNConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    stem_channels: int = Field(16, gt=0)
    stage_channels: Tuple[int, int, int, int] = (24, 32, 64, 96)
    fpn_channels: int = Field(64, gt=0)
    fpn_layers: int = Field(2, ge=1)
    fusion_eps: float = Field(1e-4, gt=0.0)
    norm_groups: int = Field(8, ge=1)
    input_channels: Literal[3] = 3

    @model_validator(mode="after")
    def _positive_channels(self) -> "CNNConfig":
        if any(width <= 0 for width in self.stage_channels):
            raise ValueError(f"stage_channels must be positive, got {self.stage_channels}")
        return self


def _norm(channels: int, groups: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(groups, channels), channels)


class ConvNormAct(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int, stride: int, groups: int):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False),
            _norm(out_channels, groups),
            nn.SiLU(),
        )


class Stage(nn.Module):
    """Stride-2 downsampling conv followed by one residual block."""

    def __init__(self, in_channels: int, out_channels: int, groups: int):
        super().__init__()
        self.down = ConvNormAct(in_channels, out_channels, 2, groups)
        self.block = nn.Sequential(
            ConvNormAct(out_channels, out_channels, 1, groups),
            ConvNormAct(out_channels, out_channels, 1, groups),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.down(x)
        return x + self.block(x)


class SeparableConv(nn.Sequential):
    def __init__(self, channels: int, groups: int):
        super().__init__(
            nn.Conv2d(channels, channels, 3, padding=1, groups=channels, bias=False),
            nn.Conv2d(channels, channels, 1, bias=True),
            _norm(channels, groups),
            nn.SiLU(),
        )


class FusionNode(nn.Module):
    """Weighted sum of same-shaped inputs followed by a separable conv."""

    def __init__(self, inputs: int, channels: int, eps: float, groups: int):
        super().__init__()
        self.weights = nn.Parameter(torch.ones(inputs))
        self.eps = eps
        self.conv = SeparableConv(channels, groups)

    def fusion_weights(self) -> torch.Tensor:
        weights = F.relu(self.weights)
        return weights / (weights.sum() + self.eps)

    def forward(self, features: Sequence[torch.Tensor]) -> torch.Tensor:
        weights = self.fusion_weights()
        fused = features[0] * weights[0]
        for index in range(1, len(features)):
            fused = fused + features[index] * weights[index]
        return self.conv(fused)


def _upsample(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, size=like.shape[-2:], mode="nearest")


def _downsample(x: torch.Tensor) -> torch.Tensor:
    return F.avg_pool2d(x, kernel_size=2, stride=2, ceil_mode=True)


class BiFPNLayer(nn.Module):
    def __init__(self, channels: int, eps: float, groups: int):
        super().__init__()
        self.mid16 = FusionNode(2, channels, eps, groups)
        self.out8 = FusionNode(2, channels, eps, groups)
        self.out16 = FusionNode(3, channels, eps, groups)
        self.out32 = FusionNode(2, channels, eps, groups)

    def forward(self, p8: torch.Tensor, p16: torch.Tensor, p32: torch.Tensor) -> List[torch.Tensor]:
        # top-down
        mid16 = self.mid16([p16, _upsample(p32, p16)])
        out8 = self.out8([p8, _upsample(mid16, p8)])
        # bottom-up
        out16 = self.out16([p16, mid16, _downsample(out8)])
        out32 = self.out32([p32, _downsample(out16)])
        return [out8, out16, out32]


class CNNBackbone(nn.Module):
    """CNN + BiFPN encoder producing :class:`PyramidFeatures`."""

    arch = "cnn"
    # Token grids are read off the stride-16 map.
    patch_size = 16

    def __init__(self, config: CNNConfig):
        super().__init__()
        self.config = config
        self.embed_dim = config.fpn_channels
        groups = config.norm_groups
        self.stem = ConvNormAct(config.input_channels, config.stem_channels, 2, groups)
        widths = (config.stem_channels, *config.stage_channels)
        self.stages = nn.ModuleList(
            [Stage(widths[index], widths[index + 1], groups) for index in range(len(config.stage_channels))]
        )
        self.laterals = nn.ModuleList(
            [
                nn.Sequential(nn.Conv2d(width, config.fpn_channels, 1, bias=False), _norm(config.fpn_channels, groups))
                for width in config.stage_channels[1:]
            ]
        )
        self.fpn = nn.ModuleList(
            [BiFPNLayer(config.fpn_channels, config.fusion_eps, groups) for _ in range(config.fpn_layers)]
        )

    def grid_for(self, size: int) -> Tuple[int, int]:
        side = size // 16
        return side, side

    def forward(self, x: torch.Tensor) -> PyramidFeatures:
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeMismatch(f"expected (B, {self.config.input_channels}, H, W) input, got {tuple(x.shape)}")
        height, width = int(x.shape[-2]), int(x.shape[-1])
        if height % 16 or width % 16:
            raise ShapeMismatch(f"input {height}x{width} is not divisible by 16")

        x = self.stem(x)
        taps: List[torch.Tensor] = []
        for index, stage in enumerate(self.stages):
            x = stage(x)
            if index >= 1:
                taps.append(x)
        levels = [lateral(tap) for lateral, tap in zip(self.laterals, taps)]
        for layer in self.fpn:
            levels = layer(*levels)
        maps = dict(zip(STRIDES, levels))
        return PyramidFeatures(maps=maps, pooled=maps[16].mean(dim=(-2, -1)))

    def encode(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None):
        if mask is not None and bool(mask.any()):
            raise ModelError("CNN backbones do not accept token masks")
        return self(x).as_encoder_output()


def cnn_bifpn_forward(model: CNNBackbone, image: torch.Tensor) -> PyramidFeatures:
    """Forward a ``3xSxS`` view (or batch) whose side is a multiple of 32."""

    if image.ndim == 3:
        image = image.unsqueeze(0)
    height, width = int(image.shape[-2]), int(image.shape[-1])
    if height % 32 or width % 32:
        raise ShapeMismatch(f"input {height}x{width} is not divisible by 32")
    return model(image)


__all__ = ["BiFPNLayer", "CNNBackbone", "CNNConfig", "FusionNode", "STRIDES", "cnn_bifpn_forward"]
