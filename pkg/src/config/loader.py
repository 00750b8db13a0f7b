"""Run configuration: in-code defaults, YAML files and dotted command-line overrides."""

from __future__ import annotations

import copy
import hashlib
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, MutableMapping, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.augmentation.crops import CropConfig
from src.augmentation.depth_noise import AugmentParams
from src.depth_io.manifest import MixtureSpec
from src.distillation.distill import DistillConfig, StudentConfig
from src.errors import ConfigError
from src.evaluation.features import InputNormalization
from src.evaluation.linear_probe import ProbeConfig
from src.evaluation.segmentation import SegmentProbeConfig
from src.harness.toy_data import ToyDatasetSpec
from src.models.network import ModelSettings
from src.objectives.losses import LossWeights
from src.objectives.pretrain import PretrainConfig
from src.objectives.schedules import Schedules

Mode = Literal["pretrain", "distill", "knn", "probe", "segment", "pca_viz", "stats", "bench", "gen_toy"]
MODES = ("pretrain", "distill", "knn", "probe", "segment", "pca_viz", "stats", "bench", "gen_toy")

WORKERS_VARIABLE = "DEFM_WORKERS"
CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"
DEFAULTS_FILE = CONFIG_DIR / "defaults.yaml"

DEFAULT_SETTINGS: Dict[str, Any] = {
    "mode": "pretrain",
    "seed": 0,
    "deterministic": True,
    "output_dir": "runs/default",
    "dtype": "float32",
    "device": "cpu",
    "data": {"manifest": None, "val_manifest": None, "stats": None},
    "model": {"arch": "vit"},
    "loss": {"student_temperature": 0.1, "sinkhorn_iterations": 3},
    "pretrain": {"batch_size": 64, "checkpoint_every": 100, "prefetch": 2, "resume": True},
    "distill": {"teacher_checkpoint": None, "batch_size": 64, "dense_loss": "sinkhorn_ce"},
    "eval": {"input_normalization": "log", "batch_size": 32},
    "toy": {},
}


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class DataSettings(_Section):
    manifest: Optional[str] = None
    val_manifest: Optional[str] = None
    stats: Optional[str] = None


class LossSettings(_Section):
    weights: LossWeights = Field(default_factory=LossWeights)
    student_temperature: float = Field(0.1, gt=0.0)
    sinkhorn_iterations: int = Field(3, ge=1)


class PretrainSettings(_Section):
    batch_size: int = Field(64, ge=1)
    grad_clip: Optional[float] = Field(3.0, gt=0.0)
    freeze_last_layer_steps: Optional[int] = Field(None, ge=0)
    checkpoint_every: int = Field(100, ge=1)
    prefetch: int = Field(2, ge=0)
    resume: bool = True
    mixture: Optional[MixtureSpec] = None


def _default_students() -> List[StudentConfig]:
    return [StudentConfig(name="cnn_small", model=ModelSettings(arch="cnn"))]


class DistillSettings(_Section):
    teacher_checkpoint: Optional[str] = None
    students: List[StudentConfig] = Field(default_factory=_default_students)
    teacher_crop_size: int = Field(224, ge=1)
    cnn_student_crop_size: int = Field(256, ge=16)
    cnn_local_crop_size: int = Field(112, ge=16)
    batch_size: int = Field(64, ge=1)
    dense_loss: Literal["sinkhorn_ce", "cosine"] = "sinkhorn_ce"
    w_dino: float = Field(1.0, ge=0.0)
    w_dense: float = Field(1.0, ge=0.0)
    grad_clip: Optional[float] = Field(3.0, gt=0.0)
    checkpoint_every: int = Field(100, ge=1)
    prefetch: int = Field(2, ge=0)
    mixture: Optional[MixtureSpec] = None
    agreement_images: int = Field(32, ge=0)


class KNNSettings(_Section):
    k: int = Field(20, ge=1)
    temperature: float = Field(0.07, gt=0.0)


class PCASettings(_Section):
    components: int = Field(3, ge=1)
    background_threshold: Optional[float] = 0.0
    images: int = Field(4, ge=1)
    binary: bool = True
    scale: int = Field(4, ge=1)


class BenchSettings(_Section):
    input_size: Optional[int] = Field(None, ge=1)
    batch_size: int = Field(1, ge=1)
    repetitions: int = Field(10, ge=1)
    warmup: int = Field(2, ge=0)


class EvalSettings(_Section):
    checkpoint: Optional[str] = None
    group: Optional[str] = None
    size: Optional[int] = Field(None, ge=1)
    input_normalization: InputNormalization = "log"
    batch_size: int = Field(32, ge=1)
    max_images: Optional[int] = Field(None, ge=1)
    knn: KNNSettings = Field(default_factory=KNNSettings)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    segment: SegmentProbeConfig = Field(default_factory=SegmentProbeConfig)
    pca: PCASettings = Field(default_factory=PCASettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)


def _default_workers() -> int:
    raw = os.getenv(WORKERS_VARIABLE, "").strip()
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_VARIABLE}={raw!r} is not an integer") from exc
    if workers < 1:
        raise ConfigError(f"{WORKERS_VARIABLE} must be at least 1, got {workers}")
    return workers


class RunConfig(BaseModel):
    """Fully resolved run configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Mode
    seed: int = 0
    deterministic: bool = True
    output_dir: str = "runs/default"
    workers: int = Field(1, ge=1)
    dtype: Literal["float32", "float64"] = "float32"
    device: str = "cpu"
    data: DataSettings = Field(default_factory=DataSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    crops: CropConfig = Field(default_factory=CropConfig)
    augment: AugmentParams = Field(default_factory=AugmentParams)
    schedules: Schedules = Field(default_factory=Schedules)
    loss: LossSettings = Field(default_factory=LossSettings)
    pretrain: PretrainSettings = Field(default_factory=PretrainSettings)
    distill: DistillSettings = Field(default_factory=DistillSettings)
    eval: EvalSettings = Field(default_factory=EvalSettings)
    toy: ToyDatasetSpec = Field(default_factory=ToyDatasetSpec)

    @field_validator("output_dir")
    @classmethod
    def _non_empty_output(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("output_dir must not be empty")
        return value

    @model_validator(mode="after")
    def _check_active_mode(self) -> "RunConfig":
        # Cross-module invariants are only enforced for the mode that will run.
        if self.mode == "pretrain":
            _nested("pretrain", self.pretrain_config)
        elif self.mode == "distill":
            if not self.distill.teacher_checkpoint:
                raise ValueError("distill.teacher_checkpoint is required in distill mode")
            _nested("distill", self.distill_config)
        return self

    @property
    def eval_size(self) -> int:
        return self.eval.size or self.crops.global_size

    def pretrain_config(self) -> PretrainConfig:
        section = self.pretrain
        return PretrainConfig(
            model=self.model,
            crops=self.crops,
            augment=self.augment,
            schedules=self.schedules,
            weights=self.loss.weights,
            mixture=section.mixture,
            batch_size=section.batch_size,
            student_temperature=self.loss.student_temperature,
            sinkhorn_iterations=self.loss.sinkhorn_iterations,
            grad_clip=section.grad_clip,
            freeze_last_layer_steps=section.freeze_last_layer_steps,
            checkpoint_every=section.checkpoint_every,
            prefetch=section.prefetch,
            workers=self.workers,
            seed=self.seed,
            deterministic=self.deterministic,
            dtype=self.dtype,
            device=self.device,
            resume=section.resume,
        )

    def distill_config(self) -> DistillConfig:
        section = self.distill
        return DistillConfig(
            teacher_checkpoint=section.teacher_checkpoint or "",
            students=section.students,
            teacher_crop_size=section.teacher_crop_size,
            cnn_student_crop_size=section.cnn_student_crop_size,
            cnn_local_crop_size=section.cnn_local_crop_size,
            crops=self.crops,
            augment=self.augment,
            schedules=self.schedules,
            mixture=section.mixture,
            batch_size=section.batch_size,
            student_temperature=self.loss.student_temperature,
            sinkhorn_iterations=self.loss.sinkhorn_iterations,
            dense_loss=section.dense_loss,
            w_dino=section.w_dino,
            w_dense=section.w_dense,
            grad_clip=section.grad_clip,
            checkpoint_every=section.checkpoint_every,
            prefetch=section.prefetch,
            workers=self.workers,
            seed=self.seed,
            deterministic=self.deterministic,
            dtype=self.dtype,
            device=self.device,
        )


def _nested(section: str, build: Any) -> None:
    try:
        build()
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ValueError(f"{section}: {first['msg']}") from exc


def _deep_merge(base: MutableMapping[str, Any], overrides: Mapping[str, Any]) -> MutableMapping[str, Any]:
    for key, value in overrides.items():
        if isinstance(value, Mapping):
            existing = base.get(key)
            if isinstance(existing, MutableMapping):
                base[key] = _deep_merge(copy.deepcopy(existing), value)
            else:
                base[key] = copy.deepcopy(value)
        else:
            base[key] = copy.deepcopy(value)
    return base


def _load_yaml(path: Path) -> Dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"configuration file {path} must contain a mapping at the root")
    return data


@lru_cache(maxsize=None)
def _cached_defaults(path: Path) -> Dict[str, Any]:
    merged = copy.deepcopy(DEFAULT_SETTINGS)
    if path.exists():
        merged = _deep_merge(merged, _load_yaml(path))
    return merged


def reset_settings_cache() -> None:
    """Clear the cached defaults file, primarily used during tests."""

    _cached_defaults.cache_clear()


def parse_override(text: str) -> Dict[str, Any]:
    """``a.b.c=value`` -> ``{"a": {"b": {"c": value}}}`` with ``value`` read as a YAML scalar."""

    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key or any(not part for part in key.split(".")):
        raise ConfigError(f"override {text!r} must look like dotted.key=value")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of override {key}: {exc}") from exc
    nested: Dict[str, Any] = {}
    cursor = nested
    parts = key.split(".")
    for part in parts[:-1]:
        cursor = cursor.setdefault(part, {})
    cursor[parts[-1]] = value
    return nested


def _error_key(error: Mapping[str, Any]) -> str:
    location = [str(part) for part in error.get("loc", ())]
    return ".".join(location) or "<root>"


def validate_run_config(raw: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        problems = "; ".join(f"{_error_key(error)}: {error['msg']}" for error in exc.errors())
        raise ConfigError(f"invalid configuration: {problems}") from exc


def load_run_config(
    path: str | Path | None = None,
    overrides: Sequence[str] = (),
    *,
    mode: Optional[str] = None,
    defaults_file: Path = DEFAULTS_FILE,
) -> RunConfig:
    """Defaults, then ``defaults_file``, then ``path``, then ``overrides``, then ``mode``."""

    merged = copy.deepcopy(_cached_defaults(Path(defaults_file)))
    merged.setdefault("workers", _default_workers())
    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"configuration file {config_path} not found")
        merged = _deep_merge(merged, _load_yaml(config_path))
    for override in overrides:
        merged = _deep_merge(merged, parse_override(override))
    if mode is not None:
        merged["mode"] = mode
    return validate_run_config(merged)


def snapshot_text(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)


def config_fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


__all__ = [
    "BenchSettings",
    "DEFAULT_SETTINGS",
    "DataSettings",
    "DistillSettings",
    "EvalSettings",
    "KNNSettings",
    "LossSettings",
    "MODES",
    "PCASettings",
    "PretrainSettings",
    "RunConfig",
    "WORKERS_VARIABLE",
    "config_fingerprint",
    "load_run_config",
    "parse_override",
    "reset_settings_cache",
    "snapshot_text",
    "validate_run_config",
]
