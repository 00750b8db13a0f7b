"""Depth file formats, dataset manifests, and global channel statistics."""

from .formats import (
    DepthFormat,
    DepthImage,
    DepthIOError,
    IoFailure,
    NonpositiveDimensions,
    TruncatedFile,
    UnknownFormat,
    load_depth,
    save_depth,
)
from .manifest import (
    EmptySource,
    ManifestError,
    ManifestRecord,
    MixtureSpec,
    SourceType,
    present_mixture,
    read_manifest,
    sample_batch,
    write_manifest,
)
from .stats import ChannelStats, EmptyManifest, NoValidPixels, RunningMoments, compute_channel_stats

__all__ = [
    "ChannelStats",
    "DepthFormat",
    "DepthIOError",
    "DepthImage",
    "EmptyManifest",
    "EmptySource",
    "IoFailure",
    "ManifestError",
    "ManifestRecord",
    "MixtureSpec",
    "NoValidPixels",
    "NonpositiveDimensions",
    "RunningMoments",
    "SourceType",
    "TruncatedFile",
    "UnknownFormat",
    "compute_channel_stats",
    "load_depth",
    "present_mixture",
    "read_manifest",
    "sample_batch",
    "save_depth",
    "write_manifest",
]
