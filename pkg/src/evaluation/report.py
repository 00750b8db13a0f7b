"""Evaluation reports and metrics-log analysis."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .features import EvaluationError

logger = logging.getLogger(__name__)

UNIT_INTERVAL_KEYS = ("top1", "top5", "linear_acc", "miou")
SMOOTHING_WINDOW = 50


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    task: str
    metrics: Dict[str, float]
    config_fingerprint: str = ""
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("metrics")
    @classmethod
    def _check_ranges(cls, value: Dict[str, float]) -> Dict[str, float]:
        for key, metric in value.items():
            if (key in UNIT_INTERVAL_KEYS or key.startswith("iou_")) and not 0.0 <= metric <= 1.0:
                raise ValueError(f"metric {key}={metric} must lie in [0, 1]")
        return value

    def save(self, directory: str | Path) -> Path:
        target = Path(directory) / f"{self.task}.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8")
        logger.info("Wrote %s report to %s", self.task, target)
        return target

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))


def load_metrics(path: str | Path, student: Optional[str] = None) -> pd.DataFrame:
    """Step records of a metrics log as a DataFrame indexed by step."""

    source = Path(path)
    if not source.exists():
        raise EvaluationError(f"metrics log {source} does not exist")
    frame = pd.read_json(source, lines=True)
    if frame.empty or "kind" not in frame:
        return pd.DataFrame()
    frame = frame[frame["kind"] == "step"].drop(columns=["kind"])
    if student is not None and "student" in frame:
        frame = frame[frame["student"] == student]
    if frame.empty:
        return pd.DataFrame()
    frame = frame.dropna(axis=1, how="all")
    return frame.set_index("step").sort_index()


def smoothed_loss(frame: pd.DataFrame, window: int = SMOOTHING_WINDOW, column: str = "loss_total") -> pd.Series:
    """Trailing rolling mean of a loss column."""

    return frame[column].rolling(window=window, min_periods=1).mean()


__all__ = ["EvalReport", "SMOOTHING_WINDOW", "load_metrics", "smoothed_loss"]
