from .checkpoint import (
    Checkpoint,
    CheckpointError,
    CorruptCheckpoint,
    decode_checkpoint,
    encode_checkpoint,
    flatten_groups,
    load_checkpoint,
    save_checkpoint,
    tensor_fingerprint,
)
from .cnn import CNNBackbone, CNNConfig, cnn_bifpn_forward
from .gradcheck import NonDeterministicClosure, grad_check
from .heads import HeadConfig, ProjectionHead, head_forward
from .network import ModelSettings, SSLNetwork, build_network, network_from_checkpoint, parameter_count
from .outputs import EncoderOutput, ModelError, PyramidFeatures, ShapeMismatch, ViTOutput
from .vit import ViTConfig, VisionTransformer, vit_forward

__all__ = [
    "CNNBackbone",
    "CNNConfig",
    "Checkpoint",
    "CheckpointError",
    "CorruptCheckpoint",
    "EncoderOutput",
    "HeadConfig",
    "ModelError",
    "ModelSettings",
    "NonDeterministicClosure",
    "ProjectionHead",
    "PyramidFeatures",
    "SSLNetwork",
    "ShapeMismatch",
    "ViTConfig",
    "ViTOutput",
    "VisionTransformer",
    "build_network",
    "cnn_bifpn_forward",
    "decode_checkpoint",
    "encode_checkpoint",
    "flatten_groups",
    "grad_check",
    "head_forward",
    "load_checkpoint",
    "network_from_checkpoint",
    "parameter_count",
    "save_checkpoint",
    "tensor_fingerprint",
    "vit_forward",
]
