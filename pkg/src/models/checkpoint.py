"""DFMC checkpoint codec.

Layout (all integers little-endian)::

    "DFMC" | u32 version | u32 blob length | JSON metadata blob
    u32 tensor count
    per tensor: u16 name length | name (utf-8) | u8 dtype tag | u8 rank
                | u32 dims[rank] | u64 payload offset | u64 payload bytes
    payloads, row-major little-endian, offsets relative to the payload start

Tensor names are ``group/parameter`` so one file can hold the student, the
teacher and optimizer moments side by side.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple

import numpy as np
import torch

from .outputs import ModelError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DFMC"
FORMAT_VERSION = 1

_PREAMBLE = struct.Struct("<4sII")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_TAG_RANK = struct.Struct("<BB")
_SPAN = struct.Struct("<QQ")

DTYPE_TAGS: Dict[torch.dtype, Tuple[int, str]] = {
    torch.float32: (0, "<f4"),
    torch.float64: (1, "<f8"),
    torch.int64: (2, "<i8"),
}
_TAG_LOOKUP = {tag: (dtype, fmt) for dtype, (tag, fmt) in DTYPE_TAGS.items()}


class CheckpointError(ModelError):
    pass


class CorruptCheckpoint(CheckpointError):
    """Bytes do not form a complete DFMC file."""


class UnsupportedDtype(CheckpointError):
    """Tensor dtype has no DFMC tag."""


@dataclass(frozen=True)
class Checkpoint:
    metadata: Dict[str, Any]
    tensors: Dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.metadata.get("step", 0))

    @property
    def groups(self) -> List[str]:
        return sorted({name.split("/", 1)[0] for name in self.tensors if "/" in name})

    def group(self, name: str) -> Dict[str, torch.Tensor]:
        prefix = f"{name}/"
        return {key[len(prefix) :]: value for key, value in self.tensors.items() if key.startswith(prefix)}


def flatten_groups(groups: Mapping[str, Mapping[str, torch.Tensor]]) -> Dict[str, torch.Tensor]:
    flat: Dict[str, torch.Tensor] = {}
    for group, tensors in groups.items():
        for name, tensor in tensors.items():
            flat[f"{group}/{name}"] = tensor
    return flat


def tensor_fingerprint(tensors: Mapping[str, torch.Tensor]) -> str:
    """sha256 over sorted names and raw little-endian tensor bytes."""

    digest = hashlib.sha256()
    for name in sorted(tensors):
        tensor = tensors[name].detach().cpu().contiguous()
        digest.update(name.encode("utf-8"))
        digest.update(_tensor_bytes(tensor))
    return digest.hexdigest()


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    try:
        _, fmt = DTYPE_TAGS[tensor.dtype]
    except KeyError as exc:
        raise UnsupportedDtype(f"cannot store dtype {tensor.dtype}") from exc
    return tensor.detach().cpu().contiguous().numpy().astype(fmt, copy=False).tobytes()


def encode_checkpoint(tensors: Mapping[str, torch.Tensor], metadata: Mapping[str, Any]) -> bytes:
    blob = json.dumps(dict(metadata), sort_keys=True).encode("utf-8")
    directory = bytearray(_COUNT.pack(len(tensors)))
    payloads: List[bytes] = []
    offset = 0
    for name, tensor in tensors.items():
        encoded_name = name.encode("utf-8")
        tag, _ = DTYPE_TAGS.get(tensor.dtype, (None, None))
        if tag is None:
            raise UnsupportedDtype(f"tensor {name!r} has unsupported dtype {tensor.dtype}")
        payload = _tensor_bytes(tensor)
        dims = tuple(int(size) for size in tensor.shape)
        directory += _NAME_LEN.pack(len(encoded_name)) + encoded_name
        directory += _TAG_RANK.pack(tag, len(dims))
        directory += struct.pack(f"<{len(dims)}I", *dims)
        directory += _SPAN.pack(offset, len(payload))
        payloads.append(payload)
        offset += len(payload)
    return _PREAMBLE.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(blob)) + blob + bytes(directory) + b"".join(payloads)


def decode_checkpoint(data: bytes) -> Checkpoint:
    try:
        magic, version, blob_len = _PREAMBLE.unpack_from(data, 0)
        if magic != CHECKPOINT_MAGIC:
            raise CorruptCheckpoint(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
        cursor = _PREAMBLE.size
        metadata = json.loads(data[cursor : cursor + blob_len].decode("utf-8"))
        cursor += blob_len
        (count,) = _COUNT.unpack_from(data, cursor)
        cursor += _COUNT.size

        entries = []
        for _ in range(count):
            (name_len,) = _NAME_LEN.unpack_from(data, cursor)
            cursor += _NAME_LEN.size
            name = data[cursor : cursor + name_len].decode("utf-8")
            cursor += name_len
            tag, rank = _TAG_RANK.unpack_from(data, cursor)
            cursor += _TAG_RANK.size
            dims = struct.unpack_from(f"<{rank}I", data, cursor)
            cursor += 4 * rank
            offset, nbytes = _SPAN.unpack_from(data, cursor)
            cursor += _SPAN.size
            entries.append((name, tag, dims, offset, nbytes))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint header: {exc}") from exc

    tensors: Dict[str, torch.Tensor] = {}
    for name, tag, dims, offset, nbytes in entries:
        if tag not in _TAG_LOOKUP:
            raise CorruptCheckpoint(f"tensor {name!r} has unknown dtype tag {tag}")
        _, fmt = _TAG_LOOKUP[tag]
        start = cursor + offset
        chunk = data[start : start + nbytes]
        expected = int(np.prod(dims, dtype=np.int64)) * np.dtype(fmt).itemsize
        if len(chunk) != nbytes or nbytes != expected:
            raise CorruptCheckpoint(f"tensor {name!r} payload is truncated")
        array = np.frombuffer(chunk, dtype=fmt).astype(fmt[1:], copy=True).reshape(dims)
        tensors[name] = torch.from_numpy(array)
    return Checkpoint(metadata=metadata, tensors=tensors)


def save_checkpoint(path: str | Path, tensors: Mapping[str, torch.Tensor], metadata: Mapping[str, Any]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = target.with_suffix(target.suffix + ".tmp")
    staging.write_bytes(encode_checkpoint(tensors, metadata))
    os.replace(staging, target)
    logger.info("Wrote checkpoint %s (%d tensors)", target, len(tensors))
    return target


def load_checkpoint(path: str | Path) -> Checkpoint:
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {source}: {exc}") from exc
    return decode_checkpoint(data)


__all__ = [
    "CHECKPOINT_MAGIC",
    "Checkpoint",
    "CheckpointError",
    "CorruptCheckpoint",
    "FORMAT_VERSION",
    "UnsupportedDtype",
    "decode_checkpoint",
    "encode_checkpoint",
    "flatten_groups",
    "load_checkpoint",
    "save_checkpoint",
    "tensor_fingerprint",
]
