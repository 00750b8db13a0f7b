"""Dataset manifests and mixture sampling."""

from __future__ import annotations

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .formats import DepthIOError, DepthImage, IoFailure, load_depth

logger = logging.getLogger(__name__)


class EmptySource(DepthIOError):
    """A source with positive mixture weight has no records."""


class ManifestError(DepthIOError):
    """A manifest line could not be parsed."""


class SourceType(str, Enum):
    MDE = "mde"
    SYNTHETIC = "synthetic"
    REAL = "real"


class ManifestRecord(BaseModel):
    """One depth file in a dataset manifest."""

    model_config = ConfigDict(frozen=True, extra="ignore")

    path: str
    source: SourceType
    domain: str = ""
    label: Optional[int] = None
    segmentation: Optional[str] = None

    def resolve(self, root: Path) -> "ManifestRecord":
        updates: Dict[str, str] = {}
        if not Path(self.path).is_absolute():
            updates["path"] = str(root / self.path)
        if self.segmentation and not Path(self.segmentation).is_absolute():
            updates["segmentation"] = str(root / self.segmentation)
        return self.model_copy(update=updates) if updates else self

    def load(self) -> DepthImage:
        return load_depth(self.path)

    def load_segmentation(self) -> np.ndarray:
        if not self.segmentation:
            raise ManifestError(f"record {self.path} has no segmentation labels")
        try:
            return np.load(self.segmentation)
        except OSError as exc:
            raise IoFailure(f"cannot read {self.segmentation}: {exc}") from exc


class MixtureSpec(BaseModel):
    """Sampling weight per source type; normalised on use."""

    weights: Dict[SourceType, float] = Field(
        default_factory=lambda: {SourceType.MDE: 1.0, SourceType.SYNTHETIC: 1.0, SourceType.REAL: 1.0}
    )

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, value: Dict[SourceType, float]) -> Dict[SourceType, float]:
        if any(weight < 0 for weight in value.values()):
            raise ValueError("mixture weights must be nonnegative")
        if sum(value.values()) <= 0:
            raise ValueError("at least one mixture weight must be positive")
        return value

    def normalized(self) -> Dict[SourceType, float]:
        total = float(sum(self.weights.values()))
        return {source: float(weight) / total for source, weight in self.weights.items()}


def read_manifest(path: str | Path) -> List[ManifestRecord]:
    """Read a line-delimited JSON manifest; relative paths resolve against its directory."""

    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc

    records: List[ManifestRecord] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = ManifestRecord.model_validate(json.loads(line))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise ManifestError(f"{path}:{number}: {exc}") from exc
        records.append(record.resolve(path.parent))
    logger.debug("Read %d records from %s", len(records), path)
    return records


def write_manifest(records: Iterable[ManifestRecord], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(record.model_dump_json(exclude_none=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc
    return path


def group_by_source(manifest: Sequence[ManifestRecord]) -> Dict[SourceType, List[ManifestRecord]]:
    groups: Dict[SourceType, List[ManifestRecord]] = {source: [] for source in SourceType}
    for record in manifest:
        groups[record.source].append(record)
    return groups


def sample_batch(
    manifest: Sequence[ManifestRecord],
    mixture: MixtureSpec,
    batch_size: int,
    rng_seed: int | Sequence[int],
) -> List[ManifestRecord]:
    """Draw records i.i.d.: a source by mixture weight, then a record uniformly within it."""

    groups = group_by_source(manifest)
    weights = mixture.normalized()
    sources = [source for source in SourceType if weights.get(source, 0.0) > 0]
    for source in sources:
        if not groups[source]:
            raise EmptySource(f"source '{source.value}' has weight {weights[source]:.3f} but no records")

    rng = np.random.default_rng(rng_seed)
    probs = np.array([weights[source] for source in sources], dtype=np.float64)
    probs /= probs.sum()
    choices = rng.choice(len(sources), size=batch_size, p=probs)
    batch: List[ManifestRecord] = []
    for choice in choices:
        group = groups[sources[int(choice)]]
        batch.append(group[int(rng.integers(len(group)))])
    return batch


def present_mixture(manifest: Sequence[ManifestRecord]) -> MixtureSpec:
    """Equal weight for every source that has at least one record."""

    groups = group_by_source(manifest)
    if not any(groups.values()):
        raise DepthIOError("manifest is empty")
    return MixtureSpec(weights={source: 1.0 if records else 0.0 for source, records in groups.items()})


__all__ = [
    "EmptySource",
    "ManifestError",
    "ManifestRecord",
    "MixtureSpec",
    "SourceType",
    "group_by_source",
    "present_mixture",
    "read_manifest",
    "sample_batch",
    "write_manifest",
]
