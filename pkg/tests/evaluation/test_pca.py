from __future__ import annotations

import numpy as np
import pytest
from scipy import linalg

from src.evaluation import DegenerateFeatures, fit_pca, pca_visualize, write_ppm


def test_components_match_symmetric_eigensolver():
    rng = np.random.default_rng(0)
    tokens = rng.normal(size=(200, 6)) @ np.diag([5.0, 3.0, 2.0, 1.0, 0.5, 0.1])

    fit = fit_pca(tokens, 3)

    covariance = np.cov(tokens, rowvar=False)
    values, vectors = linalg.eigh(covariance)
    for index in range(3):
        expected = vectors[:, -1 - index]
        assert abs(float(fit.components[index] @ expected)) == pytest.approx(1.0, abs=1e-9)
        assert fit.eigenvalues[index] == pytest.approx(values[-1 - index])


def test_rank_one_tokens():
    direction = np.array([1.0, 2.0, -1.0, 0.5])
    grid = (np.arange(16, dtype=np.float64)[:, None] * direction).reshape(4, 4, 4)

    fit = fit_pca(grid.reshape(-1, 4), 3)
    (image,) = pca_visualize([grid], background_threshold=None)

    assert fit.explained_ratio[0] == pytest.approx(1.0)
    assert image.shape == (4, 4, 3)
    assert image[..., 0].min() == 0.0 and image[..., 0].max() == 1.0
    assert np.all(image[..., 1] == image[0, 0, 1])
    assert np.all(image[..., 2] == image[0, 0, 2])


def test_planted_clusters_split_on_first_component():
    rng = np.random.default_rng(1)
    centre = rng.normal(size=8) * 4
    tokens = np.concatenate([rng.normal(size=(30, 8)) * 0.1 + centre, rng.normal(size=(30, 8)) * 0.1 - centre])

    scores = fit_pca(tokens, 1).transform(tokens)[:, 0]

    _, vectors = linalg.eigh(np.cov(tokens, rowvar=False))
    oracle = (tokens - tokens.mean(axis=0)) @ vectors[:, -1]
    assert np.all(np.sign(scores[:30]) == -np.sign(scores[30:]))
    assert np.all(np.sign(scores) == np.sign(oracle)) or np.all(np.sign(scores) == -np.sign(oracle))


def test_output_shape_follows_token_grid():
    rng = np.random.default_rng(2)
    grids = [rng.normal(size=(3, 5, 8)), rng.normal(size=(3, 5, 8))]

    images = pca_visualize(grids)

    assert [image.shape for image in images] == [(3, 5, 3), (3, 5, 3)]
    assert all(image.min() >= 0.0 and image.max() <= 1.0 for image in images)


def test_rotation_of_feature_space_leaves_images_unchanged():
    rng = np.random.default_rng(3)
    grids = [rng.normal(size=(4, 4, 6)) for _ in range(2)]
    rotation, _ = np.linalg.qr(rng.normal(size=(6, 6)))

    plain = pca_visualize(grids, background_threshold=None)
    rotated = pca_visualize([grid @ rotation for grid in grids], background_threshold=None)

    for a, b in zip(plain, rotated):
        np.testing.assert_allclose(a, b, atol=1e-8)


def test_background_tokens_are_black():
    rng = np.random.default_rng(4)
    grid = np.zeros((6, 6, 4)) + rng.normal(size=(6, 6, 4)) * 0.01
    grid[2:4, 2:4] += 5.0

    (image,) = pca_visualize([grid])

    assert np.all(image[0] == 0.0)
    assert np.any(image[2:4, 2:4] > 0.0)


def test_degenerate_inputs():
    with pytest.raises(DegenerateFeatures):
        fit_pca(np.ones((5, 3)), 2)
    with pytest.raises(DegenerateFeatures):
        pca_visualize([])


def test_ascii_ppm_is_exact(tmp_path):
    rgb = np.array([[[1.0, 0.0, 0.0], [0.0, 0.5, 1.0]]])

    path = write_ppm(tmp_path / "tiny.ppm", rgb, binary=False)

    assert path.read_text() == "P3\n2 1\n255\n255 0 0 0 128 255\n"


def test_binary_ppm_with_scale(tmp_path):
    rgb = np.ones((1, 1, 3))

    data = write_ppm(tmp_path / "tiny.ppm", rgb, scale=2).read_bytes()

    assert data == b"P6\n2 2\n255\n" + bytes([255] * 12)
