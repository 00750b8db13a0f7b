"""Run-directory layout, metrics log writer and reproducibility switches."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import torch

logger = logging.getLogger(__name__)

_CHECKPOINT_PATTERN = re.compile(r"^step_(\d+)\.dfmc$")

DTYPES: Dict[str, torch.dtype] = {"float32": torch.float32, "float64": torch.float64}


def torch_dtype(name: str) -> torch.dtype:
    try:
        return DTYPES[name]
    except KeyError as exc:
        raise ValueError(f"unsupported compute dtype {name!r}") from exc


def seed_everything(seed: int, deterministic: bool = True) -> None:
    """Seed torch and pin deterministic kernels.

    NumPy randomness is always drawn from explicit ``default_rng`` generators,
    so there is no global NumPy state to seed.
    """

    torch.manual_seed(seed)
    if deterministic:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True)
    else:
        torch.use_deterministic_algorithms(False)


@dataclass(frozen=True)
class RunLayout:
    """``<run>/config.snapshot``, ``checkpoints/step_N.dfmc``, ``metrics.log``, ``reports/``, ``logs/``."""

    root: Path

    @property
    def config_snapshot(self) -> Path:
        return self.root / "config.snapshot"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics.log"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def logs(self) -> Path:
        return self.root / "logs"

    def ensure(self) -> "RunLayout":
        for directory in (self.root, self.checkpoints, self.reports, self.logs):
            directory.mkdir(parents=True, exist_ok=True)
        return self

    def checkpoint_path(self, step: int, prefix: str = "step") -> Path:
        return self.checkpoints / f"{prefix}_{step}.dfmc"

    def latest_checkpoint(self) -> Optional[Path]:
        if not self.checkpoints.exists():
            return None
        found = []
        for path in self.checkpoints.iterdir():
            match = _CHECKPOINT_PATTERN.match(path.name)
            if match:
                found.append((int(match.group(1)), path))
        return max(found)[1] if found else None


class MetricsWriter:
    """Line-delimited JSON metrics: one header record then one record per step.

    Records carry no timestamps so two deterministic runs write identical bytes.
    When resuming, existing step records at or beyond ``resume_step`` are dropped.
    """

    def __init__(self, path: Path, header: Mapping[str, Any], resume_step: Optional[int] = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        kept = []
        if resume_step is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                record = json.loads(line)
                if record.get("kind") == "header" or int(record.get("step", 0)) < resume_step:
                    kept.append(line)
        if not kept:
            kept.append(self._dump({"kind": "header", **header}))
        self._handle = self.path.open("w", encoding="utf-8")
        self._handle.write("\n".join(kept) + "\n")
        self._handle.flush()

    @staticmethod
    def _dump(record: Mapping[str, Any]) -> str:
        return json.dumps(dict(record), sort_keys=True)

    def write(self, record: Mapping[str, Any]) -> None:
        self._handle.write(self._dump({"kind": "step", **record}) + "\n")
        self._handle.flush()

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


__all__ = ["DTYPES", "MetricsWriter", "RunLayout", "seed_everything", "torch_dtype"]
