"""Weighted k-nearest-neighbour classification on frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .features import DimensionMismatch, EvaluationError, FeatureSet

DEFAULT_K = 20
DEFAULT_TEMPERATURE = 0.07


class KTooLarge(EvaluationError):
    """k exceeds the number of training points."""


@dataclass(frozen=True)
class KNNResult:
    top1: float
    top5: float
    predictions: np.ndarray


def cosine_similarity_matrix(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Cosine similarities (n_queries, n_keys); zero vectors score 0 against everything."""

    similarity = 1.0 - cdist(queries, keys, metric="cosine")
    return np.nan_to_num(similarity, nan=0.0)


def knn_eval(
    train: FeatureSet,
    test: FeatureSet,
    k: int = DEFAULT_K,
    temperature: float = DEFAULT_TEMPERATURE,
) -> KNNResult:
    """Top-1/top-5 accuracy with class votes ``sum exp(sim / temperature)`` over k neighbours.

    Neighbour ties break toward the lower training index and class-score ties
    toward the lower class index.
    """

    if train.dim != test.dim:
        raise DimensionMismatch(f"train width {train.dim} != test width {test.dim}")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > train.n:
        raise KTooLarge(f"k={k} exceeds {train.n} training points")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    train_labels = train.require_labels()
    test_labels = test.require_labels()
    num_classes = int(max(train_labels.max(), test_labels.max())) + 1

    similarity = cosine_similarity_matrix(test.embeddings, train.embeddings)
    neighbours = np.argsort(-similarity, axis=1, kind="stable")[:, :k]
    neighbour_sims = np.take_along_axis(similarity, neighbours, axis=1)
    votes = np.exp(neighbour_sims / temperature)

    scores = np.zeros((test.n, num_classes), dtype=np.float64)
    rows = np.repeat(np.arange(test.n), k)
    np.add.at(scores, (rows, train_labels[neighbours].ravel()), votes.ravel())

    ranking = np.argsort(-scores, axis=1, kind="stable")
    predictions = ranking[:, 0]
    top1 = float(np.mean(predictions == test_labels))
    top5 = float(np.mean(np.any(ranking[:, : min(5, num_classes)] == test_labels[:, None], axis=1)))
    return KNNResult(top1=top1, top5=top5, predictions=predictions)


__all__ = ["DEFAULT_K", "DEFAULT_TEMPERATURE", "KNNResult", "KTooLarge", "cosine_similarity_matrix", "knn_eval"]
