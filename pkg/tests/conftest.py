import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from src.depth_io import DepthImage, ManifestRecord, SourceType, save_depth  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the full-size toy preset tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size toy runs, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def depth_manifest(tmp_path):
    """Factory writing ``count`` random DFM1 depth images and returning their records."""

    def _make(count: int = 6, size: int = 32, seed: int = 0, labels: int = 0):
        rng = np.random.default_rng(seed)
        folder = tmp_path / f"depth_{seed}_{count}_{size}"
        folder.mkdir(exist_ok=True)
        records = []
        for index in range(count):
            path = folder / f"img_{index}.dfm"
            save_depth(DepthImage.from_array(rng.uniform(0.5, 6.0, size=(size, size))), path)
            records.append(
                ManifestRecord(
                    path=str(path),
                    source=SourceType.SYNTHETIC,
                    label=index % labels if labels else None,
                )
            )
        return records

    return _make
