"""PSNR, SSIM, and error maps."""

import numpy as np
import pytest

from dmsr.metrics import error_map, psnr, ssim
from dmsr.tensor import DimensionError


def test_psnr_closed_form_20db():
    # mse 0.01 against unit range: -10 log10(0.01) = 20 dB
    x = np.zeros((10, 10))
    y = np.full((10, 10), 0.1)
    np.testing.assert_allclose(psnr(x, y), 20.0, rtol=1e-12)


def test_psnr_identical_capped_at_100():
    x = np.random.default_rng(0).uniform(0, 1, (8, 8))
    assert psnr(x, x) == 100.0


def test_psnr_monotone_under_noise():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.2, 0.8, (32, 32))
    values = [psnr(x + rng.normal(0, s, x.shape), x)
              for s in (0.005, 0.02, 0.08)]
    assert values[0] > values[1] > values[2]


def test_ssim_self_is_one():
    x = np.random.default_rng(2).uniform(0, 1, (16, 16))
    np.testing.assert_allclose(ssim(x, x), 1.0, atol=1e-12)


def test_ssim_decreases_with_noise():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.2, 0.8, (32, 32))
    noisy = x + rng.normal(0, 0.1, x.shape)
    assert ssim(x, noisy) < 0.95


def test_ssim_rejects_images_smaller_than_window():
    x = np.zeros((8, 8))
    with pytest.raises(DimensionError):
        ssim(x, x)


def test_error_map_normalized():
    a = np.array([[0.0, 0.5], [1.0, 0.25]])
    b = np.array([[0.5, 0.5], [0.5, 0.25]])
    m = error_map(a, b)
    np.testing.assert_allclose(m, [[1.0, 0.0], [1.0, 0.0]])
    same = error_map(a, a)
    np.testing.assert_array_equal(same, np.zeros((2, 2)))
