"""Plain vision transformer with a class token and a learned mask token."""

from __future__ import annotations

from typing import Literal, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange, repeat
from einops.layers.torch import Rearrange
from pydantic import BaseModel, ConfigDict, model_validator

from .outputs import ShapeMismatch, ViTOutput


class ViTConfig(BaseModel):
    """Backbone hyperparameters; ``image_size`` fixes the learned positional grid."""

    model_config = ConfigDict(frozen=True)

    patch_size: int = 14
    embed_dim: int = 192
    depth: int = 6
    heads: int = 3
    mlp_ratio: float = 4.0
    input_channels: Literal[3] = 3
    image_size: int = 224

    @model_validator(mode="after")
    def _check_dims(self) -> "ViTConfig":
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim={self.embed_dim} is not divisible by heads={self.heads}")
        if self.patch_size <= 0 or self.image_size % self.patch_size:
            raise ValueError(f"image_size={self.image_size} is not a multiple of patch_size={self.patch_size}")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        return self

    @property
    def grid(self) -> Tuple[int, int]:
        side = self.image_size // self.patch_size
        return side, side


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        q, k, v = map(
            lambda t: rearrange(t, "b n (h d) -> b h n d", h=self.heads),
            self.qkv(x).chunk(3, dim=-1),
        )
        attn = (torch.matmul(q, k.transpose(-1, -2)) * self.scale).softmax(dim=-1)
        out = rearrange(torch.matmul(attn, v), "b h n d -> b n (h d)")
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VisionTransformer(nn.Module):
    """ViT backbone returning the class token and the patch-token grid."""

    arch = "vit"

    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        self.patch_size = config.patch_size
        self.embed_dim = config.embed_dim
        patch_dim = config.input_channels * config.patch_size**2

        self.patch_embed = nn.Sequential(
            Rearrange("b c (h p1) (w p2) -> b (h w) (p1 p2 c)", p1=config.patch_size, p2=config.patch_size),
            nn.Linear(patch_dim, config.embed_dim),
        )
        grid_h, grid_w = config.grid
        self.cls_token = nn.Parameter(torch.zeros(1, 1, config.embed_dim))
        self.mask_token = nn.Parameter(torch.zeros(1, 1, config.embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, grid_h * grid_w + 1, config.embed_dim))
        self.blocks = nn.ModuleList(
            [Block(config.embed_dim, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.norm = nn.LayerNorm(config.embed_dim)
        self._init_parameters()

    @staticmethod
    def _init_module(module: nn.Module) -> None:
        if isinstance(module, nn.Linear):
            nn.init.trunc_normal_(module.weight, mean=0.0, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LayerNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)

    def _init_parameters(self) -> None:
        self.apply(self._init_module)
        nn.init.trunc_normal_(self.cls_token, mean=0.0, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, mean=0.0, std=0.02)
        nn.init.trunc_normal_(self.mask_token, mean=0.0, std=0.02)

    def _positional(self, height: int, width: int) -> torch.Tensor:
        base_h, base_w = self.config.grid
        if (height, width) == (base_h, base_w):
            return self.pos_embed
        cls_pos, patch_pos = self.pos_embed[:, :1], self.pos_embed[:, 1:]
        patch_pos = rearrange(patch_pos, "1 (h w) d -> 1 d h w", h=base_h, w=base_w)
        patch_pos = F.interpolate(patch_pos, size=(height, width), mode="bicubic", align_corners=False)
        patch_pos = rearrange(patch_pos, "1 d h w -> 1 (h w) d")
        return torch.cat([cls_pos, patch_pos], dim=1)

    def grid_for(self, size: int) -> Tuple[int, int]:
        side = size // self.patch_size
        return side, side

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> ViTOutput:
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeMismatch(f"expected (B, {self.config.input_channels}, H, W) input, got {tuple(x.shape)}")
        height, width = int(x.shape[-2]), int(x.shape[-1])
        if height % self.patch_size or width % self.patch_size:
            raise ShapeMismatch(f"input {height}x{width} is not divisible by patch size {self.patch_size}")
        grid = (height // self.patch_size, width // self.patch_size)

        tokens = self.patch_embed(x)
        if mask is not None:
            if tuple(mask.shape) != (x.shape[0], *grid):
                raise ShapeMismatch(f"mask shape {tuple(mask.shape)} does not match token grid {grid}")
            flat = rearrange(mask, "b h w -> b (h w) 1")
            tokens = torch.where(flat, self.mask_token.to(tokens.dtype), tokens)

        cls = repeat(self.cls_token, "1 1 d -> b 1 d", b=x.shape[0])
        tokens = torch.cat([cls, tokens], dim=1) + self._positional(*grid)
        for block in self.blocks:
            tokens = block(tokens)
        tokens = self.norm(tokens)
        return ViTOutput(cls=tokens[:, 0], patches=tokens[:, 1:], grid=grid)

    def encode(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> ViTOutput:
        return self(x, mask)


def vit_forward(
    model: VisionTransformer,
    image: torch.Tensor,
    mask: Optional[torch.Tensor] = None,
) -> ViTOutput:
    """Forward a single ``3xSxS`` view or a batch, with an optional patch mask."""

    if image.ndim == 3:
        image = image.unsqueeze(0)
        if mask is not None and mask.ndim == 2:
            mask = mask.unsqueeze(0)
    if mask is not None:
        mask = torch.as_tensor(mask, dtype=torch.bool)
    return model(image, mask)


__all__ = ["Attention", "Block", "ViTConfig", "VisionTransformer", "vit_forward"]
