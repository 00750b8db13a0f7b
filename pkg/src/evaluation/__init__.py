"""Frozen-feature evaluation: KNN, linear probes, segmentation, PCA and benchmarking."""

from .bench import BenchResult, bench, estimate_flops
from .features import DimensionMismatch, EvaluationError, FeatureSet, encode_images, extract_features
from .knn import KNNResult, KTooLarge, knn_eval
from .linear_probe import ProbeConfig, ProbeResult, SingleClassTrainSet, linear_probe
from .pca import DegenerateFeatures, PCAFit, fit_pca, pca_visualize, write_ppm
from .report import EvalReport, load_metrics, smoothed_loss
from .segmentation import (
    IGNORE_INDEX,
    IoUAccumulator,
    IoUResult,
    NoLabeledPixels,
    SegmentProbeConfig,
    SegmentationResult,
    compute_iou,
    segment_probe,
)

__all__ = [
    "BenchResult",
    "DegenerateFeatures",
    "DimensionMismatch",
    "EvalReport",
    "EvaluationError",
    "FeatureSet",
    "IGNORE_INDEX",
    "IoUAccumulator",
    "IoUResult",
    "KNNResult",
    "KTooLarge",
    "NoLabeledPixels",
    "PCAFit",
    "ProbeConfig",
    "ProbeResult",
    "SegmentProbeConfig",
    "SegmentationResult",
    "SingleClassTrainSet",
    "bench",
    "compute_iou",
    "encode_images",
    "estimate_flops",
    "extract_features",
    "fit_pca",
    "knn_eval",
    "linear_probe",
    "load_metrics",
    "pca_visualize",
    "segment_probe",
    "smoothed_loss",
    "write_ppm",
]
