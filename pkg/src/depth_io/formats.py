"""Readers and writers for the two supported metric depth file formats.

PFM ("Pf") is the interchange format: a text header followed by 32-bit floats
whose byte order is encoded by the sign of the scale field (negative means
little-endian) and whose rows are stored bottom-to-top.

DFM1 is the internal format: the magic ``DFM1``, height and width as unsigned
32-bit little-endian integers, then row-major little-endian float32 depths in
meters, top-to-bottom.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Tuple

import numpy as np

from src.errors import DepthFMError

logger = logging.getLogger(__name__)

DFM1_MAGIC = b"DFM1"
DFM1_HEADER = struct.Struct("<II")


class DepthIOError(DepthFMError):
    module = "depth_io"


class UnknownFormat(DepthIOError):
    """File does not start with a recognised magic."""


class TruncatedFile(DepthIOError):
    """File ends before its header or payload is complete."""


class NonpositiveDimensions(DepthIOError):
    """Header declares a zero or negative image dimension."""


class IoFailure(DepthIOError):
    """Underlying filesystem operation failed."""


class DepthFormat(str, Enum):
    PFM = "pfm"
    DFM1 = "dfm1"

    @classmethod
    def from_path(cls, path: Path) -> "DepthFormat":
        return cls.PFM if path.suffix.lower() == ".pfm" else cls.DFM1


@dataclass(frozen=True)
class DepthImage:
    """Metric depth map in meters with its validity mask.

    ``depth`` is float32, zero wherever ``valid`` is false.
    """

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        if self.depth.ndim != 2 or self.depth.shape != self.valid.shape:
            raise NonpositiveDimensions(f"depth/valid shapes disagree: {self.depth.shape} vs {self.valid.shape}")
        if self.depth.shape[0] < 1 or self.depth.shape[1] < 1:
            raise NonpositiveDimensions(f"image must be at least 1x1, got {self.depth.shape}")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "DepthImage":
        """Build an image from raw sensor values; zero/negative/non-finite entries become holes."""

        raw = np.asarray(values, dtype=np.float32)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(raw) & (raw > 0)
        depth = np.where(valid, raw, np.float32(0.0)).astype(np.float32)
        return cls(depth=depth, valid=valid)

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


def _read_header_line(data: bytes, offset: int) -> Tuple[str, int]:
    end = data.find(b"\n", offset)
    if end < 0:
        raise TruncatedFile("PFM header ended before a newline")
    return data[offset:end].decode("ascii", errors="replace").strip(), end + 1


def _parse_pfm(data: bytes) -> DepthImage:
    magic, offset = _read_header_line(data, 0)
    channels = 1 if magic == "Pf" else 3
    dims_line, offset = _read_header_line(data, offset)
    # Some writers split width and height over two lines.
    tokens = dims_line.split()
    if len(tokens) == 1:
        second, offset = _read_header_line(data, offset)
        tokens.append(second)
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except (ValueError, IndexError) as exc:
        raise UnknownFormat(f"unparseable PFM dimensions line {dims_line!r}") from exc
    if width <= 0 or height <= 0:
        raise NonpositiveDimensions(f"PFM declares {width}x{height}")
    scale_line, offset = _read_header_line(data, offset)
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise UnknownFormat(f"unparseable PFM scale {scale_line!r}") from exc

    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    if len(data) - offset < count * 4:
        raise TruncatedFile(f"PFM payload needs {count * 4} bytes, found {len(data) - offset}")
    values = np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(np.float32)
    values = values.reshape(height, width, channels)
    if channels == 3:
        logger.warning("PFM file has 3 channels; using the first as depth")
    # PFM stores rows bottom-to-top.
    return DepthImage.from_array(np.flipud(values[:, :, 0]))


def _parse_dfm1(data: bytes) -> DepthImage:
    header_end = len(DFM1_MAGIC) + DFM1_HEADER.size
    if len(data) < header_end:
        raise TruncatedFile(f"DFM1 header needs {header_end} bytes, found {len(data)}")
    height, width = DFM1_HEADER.unpack_from(data, len(DFM1_MAGIC))
    if height == 0 or width == 0:
        raise NonpositiveDimensions(f"DFM1 declares {height}x{width}")
    count = height * width
    if len(data) - header_end < count * 4:
        raise TruncatedFile(f"DFM1 payload needs {count * 4} bytes, found {len(data) - header_end}")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=header_end)
    return DepthImage.from_array(values.reshape(height, width))


def parse_depth_bytes(data: bytes) -> DepthImage:
    if data.startswith(DFM1_MAGIC):
        return _parse_dfm1(data)
    if data.startswith(b"Pf") or data.startswith(b"PF"):
        return _parse_pfm(data)
    if len(data) < len(DFM1_MAGIC):
        raise TruncatedFile(f"file of {len(data)} bytes is too short to carry a magic")
    raise UnknownFormat(f"unrecognised magic {data[:4]!r}")


def load_depth(path: str | Path) -> DepthImage:
    """Load a PFM or DFM1 depth file, deriving the validity mask from holes."""

    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_depth_bytes(data)


def encode_depth(image: DepthImage, fmt: DepthFormat, *, little_endian: bool = True) -> bytes:
    depth = np.where(image.valid, image.depth, np.float32(0.0)).astype(np.float32)
    if fmt is DepthFormat.DFM1:
        header = DFM1_MAGIC + DFM1_HEADER.pack(image.height, image.width)
        return header + depth.astype("<f4").tobytes(order="C")
    scale = -1.0 if little_endian else 1.0
    header = f"Pf\n{image.width} {image.height}\n{scale}\n".encode("ascii")
    payload = np.flipud(depth).astype("<f4" if little_endian else ">f4").tobytes(order="C")
    return header + payload


def save_depth(
    image: DepthImage,
    path: str | Path,
    fmt: DepthFormat | str | None = None,
    *,
    little_endian: bool = True,
) -> None:
    """Write ``image`` so that :func:`load_depth` reproduces depth and mask exactly."""

    path = Path(path)
    resolved = DepthFormat(fmt) if fmt is not None else DepthFormat.from_path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_depth(image, resolved, little_endian=little_endian))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


__all__ = [
    "DepthFormat",
    "DepthIOError",
    "DepthImage",
    "IoFailure",
    "NonpositiveDimensions",
    "TruncatedFile",
    "UnknownFormat",
    "encode_depth",
    "load_depth",
    "parse_depth_bytes",
    "save_depth",
]
