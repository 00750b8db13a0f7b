from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from src.depth_io import (
    DepthImage,
    EmptySource,
    ManifestRecord,
    MixtureSpec,
    SourceType,
    read_manifest,
    sample_batch,
    save_depth,
    write_manifest,
)


def _records(count: int, source: SourceType) -> list[ManifestRecord]:
    return [ManifestRecord(path=f"{source.value}_{index}.dfm", source=source) for index in range(count)]


def test_single_source_mixture_only_samples_that_source():
    manifest = _records(5, SourceType.REAL) + _records(5, SourceType.SYNTHETIC) + _records(5, SourceType.MDE)
    mixture = MixtureSpec(weights={SourceType.REAL: 1.0, SourceType.SYNTHETIC: 0.0, SourceType.MDE: 0.0})

    batch = sample_batch(manifest, mixture, 64, rng_seed=7)

    assert len(batch) == 64
    assert {record.source for record in batch} == {SourceType.REAL}


def test_same_seed_gives_identical_batch():
    manifest = _records(10, SourceType.REAL) + _records(10, SourceType.SYNTHETIC)
    mixture = MixtureSpec(weights={SourceType.REAL: 1.0, SourceType.SYNTHETIC: 1.0})

    first = sample_batch(manifest, mixture, 32, rng_seed=[1, 2])
    second = sample_batch(manifest, mixture, 32, rng_seed=[1, 2])

    assert first == second


def test_empirical_mixture_frequencies():
    manifest = _records(3, SourceType.REAL) + _records(7, SourceType.SYNTHETIC)
    mixture = MixtureSpec(weights={SourceType.REAL: 0.5, SourceType.SYNTHETIC: 0.5})

    counts = Counter(record.source for record in sample_batch(manifest, mixture, 10_000, rng_seed=0))

    assert abs(counts[SourceType.REAL] / 10_000 - 0.5) < 0.02


def test_weighted_source_without_records_raises():
    manifest = _records(3, SourceType.REAL)

    with pytest.raises(EmptySource):
        sample_batch(manifest, MixtureSpec(), 4, rng_seed=0)


def test_mixture_rejects_negative_and_all_zero_weights():
    with pytest.raises(ValueError):
        MixtureSpec(weights={SourceType.REAL: -1.0})
    with pytest.raises(ValueError):
        MixtureSpec(weights={SourceType.REAL: 0.0})


def test_manifest_round_trip_resolves_relative_paths(tmp_path):
    save_depth(DepthImage.from_array(np.full((4, 4), 2.0)), tmp_path / "depth" / "a.dfm")
    np.save(tmp_path / "a_labels.npy", np.ones((4, 4), dtype=np.uint8))
    records = [
        ManifestRecord(
            path="depth/a.dfm", source=SourceType.SYNTHETIC, domain="toy", label=2, segmentation="a_labels.npy"
        )
    ]

    write_manifest(records, tmp_path / "train.jsonl")
    loaded = read_manifest(tmp_path / "train.jsonl")

    assert loaded[0].label == 2
    assert loaded[0].path == str(tmp_path / "depth" / "a.dfm")
    assert loaded[0].load().valid_count == 16
    assert loaded[0].load_segmentation().sum() == 16
