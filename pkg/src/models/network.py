"""Backbone plus DINO and iBOT heads: the unit that is trained, EMA'd and saved."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterator, Literal, Optional, Tuple, Union

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint
from .cnn import CNNBackbone, CNNConfig
from .heads import HeadConfig, ProjectionHead
from .outputs import EncoderOutput
from .vit import ViTConfig, VisionTransformer

logger = logging.getLogger(__name__)

Backbone = Union[VisionTransformer, CNNBackbone]


class ModelSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    arch: Literal["vit", "cnn"] = "vit"
    vit: ViTConfig = Field(default_factory=ViTConfig)
    cnn: CNNConfig = Field(default_factory=CNNConfig)
    head: HeadConfig = Field(default_factory=HeadConfig)


def build_backbone(settings: ModelSettings) -> Backbone:
    if settings.arch == "vit":
        return VisionTransformer(settings.vit)
    return CNNBackbone(settings.cnn)


class SSLNetwork(nn.Module):
    """Named parameter container for one network (backbone + two heads)."""

    def __init__(self, settings: ModelSettings):
        super().__init__()
        self.settings = settings
        self.backbone = build_backbone(settings)
        self.dino_head = ProjectionHead(self.backbone.embed_dim, settings.head)
        self.ibot_head = ProjectionHead(self.backbone.embed_dim, settings.head)

    @property
    def arch(self) -> str:
        return self.settings.arch

    @property
    def embed_dim(self) -> int:
        return self.backbone.embed_dim

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def grid_for(self, size: int) -> Tuple[int, int]:
        return self.backbone.grid_for(size)

    def encode(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> EncoderOutput:
        return self.backbone.encode(x, mask)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> EncoderOutput:
        return self.encode(x, mask)

    def model_params(self) -> Dict[str, torch.Tensor]:
        return {name: tensor.detach() for name, tensor in self.state_dict().items()}

    def decay_groups(self) -> Tuple[list, list]:
        """Split trainable parameters into (decayed, not decayed).

        Biases, normalisation affines, tokens, positional embeddings and fusion
        weights are excluded from weight decay.
        """

        decay, no_decay = [], []
        for name, param in self.named_parameters():
            if not param.requires_grad:
                continue
            if param.ndim <= 1 or name.endswith(("cls_token", "mask_token", "pos_embed")):
                no_decay.append(param)
            else:
                decay.append(param)
        return decay, no_decay

    def last_layer_parameters(self) -> Iterator[nn.Parameter]:
        for name, param in self.named_parameters():
            if ".last_layer." in name and param.requires_grad:
                yield param


def build_network(settings: ModelSettings, seed: Optional[int] = None, dtype: torch.dtype = torch.float32) -> SSLNetwork:
    if seed is not None:
        torch.manual_seed(seed)
    network = SSLNetwork(settings).to(dtype)
    logger.debug("Built %s network with %d parameters", settings.arch, parameter_count(network))
    return network


def parameter_count(module: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


# Distilled artifacts store "model"; pretraining runs store the EMA "teacher" next to the "student".
NETWORK_GROUPS = ("model", "teacher", "student")


def network_from_checkpoint(
    checkpoint: Checkpoint | str | Path,
    group: Optional[str] = None,
    dtype: torch.dtype = torch.float32,
) -> SSLNetwork:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    if "model" not in checkpoint.metadata:
        raise CheckpointError("checkpoint metadata carries no model settings")
    settings = ModelSettings.model_validate(checkpoint.metadata["model"])
    tensors: Dict[str, torch.Tensor] = {}
    for name in (group,) if group else NETWORK_GROUPS:
        tensors = checkpoint.group(name)
        if tensors:
            break
    if not tensors:
        raise CheckpointError(f"checkpoint has no network group among {group or NETWORK_GROUPS}")
    network = SSLNetwork(settings).to(dtype)
    try:
        network.load_state_dict({name: tensor.to(dtype) for name, tensor in tensors.items()})
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint tensors do not fit the {settings.arch} network: {exc}") from exc
    return network


__all__ = [
    "Backbone",
    "ModelSettings",
    "NETWORK_GROUPS",
    "SSLNetwork",
    "build_backbone",
    "build_network",
    "network_from_checkpoint",
    "parameter_count",
]
