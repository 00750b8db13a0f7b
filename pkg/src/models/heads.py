"""MLP projection heads mapping embeddings to prototype logits."""

from __future__ import annotations

from typing import List

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch.nn.utils.parametrizations import weight_norm

from .outputs import ShapeMismatch

LAST_LAYER_GAIN = "last_layer.parametrizations.weight.original0"


class HeadConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_dim: int = Field(256, gt=0)
    bottleneck_dim: int = Field(64, gt=0)
    layers: int = Field(3, ge=1)
    prototypes: int = Field(1024, gt=1)
    norm_last_layer: bool = True


class ProjectionHead(nn.Module):
    """MLP -> bottleneck -> L2 normalise -> weight-normalised prototype layer."""

    def __init__(self, in_dim: int, config: HeadConfig):
        super().__init__()
        self.in_dim = in_dim
        self.config = config

        layers: List[nn.Module] = []
        if config.layers == 1:
            layers.append(nn.Linear(in_dim, config.bottleneck_dim))
        else:
            layers.extend([nn.Linear(in_dim, config.hidden_dim), nn.GELU()])
            for _ in range(config.layers - 2):
                layers.extend([nn.Linear(config.hidden_dim, config.hidden_dim), nn.GELU()])
            layers.append(nn.Linear(config.hidden_dim, config.bottleneck_dim))
        self.mlp = nn.Sequential(*layers)
        for module in self.mlp:
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, mean=0.0, std=0.02)
                nn.init.zeros_(module.bias)

        self.last_layer = weight_norm(nn.Linear(config.bottleneck_dim, config.prototypes, bias=False))
        gain = self.last_layer.parametrizations.weight.original0
        with torch.no_grad():
            gain.fill_(1.0)
        if config.norm_last_layer:
            gain.requires_grad_(False)

    @property
    def prototypes(self) -> int:
        return self.config.prototypes

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.mlp(x)
        x = F.normalize(x, dim=-1, p=2)
        return self.last_layer(x)


def head_forward(head: ProjectionHead, embedding: torch.Tensor) -> torch.Tensor:
    if embedding.shape[-1] != head.in_dim:
        raise ShapeMismatch(f"embedding width {embedding.shape[-1]} does not match head input {head.in_dim}")
    return head(embedding)


__all__ = ["HeadConfig", "LAST_LAYER_GAIN", "ProjectionHead", "head_forward"]
