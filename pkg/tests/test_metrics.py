import numpy as np
import pytest

from jointrecon.errors import DimensionError, ParameterError
from jointrecon.metrics import MetricRow, nrmse, psnr, ssim


def test_psnr_known_value():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.5)
    # MSE = 0.25, peak 1 -> 10 log10(4) ~ 6.0206
    assert psnr(a, b, peak=1.0) == pytest.approx(6.0206, abs=1e-3)


def test_psnr_identical_capped():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a, peak=1.0) == 99.0


def test_psnr_peak_scaling():
    rng = np.random.default_rng(1)
    a, b = rng.random((8, 8)), rng.random((8, 8))
    assert psnr(a, b, peak=2.0) == pytest.approx(psnr(a, b, peak=1.0) + 20 * np.log10(2))


def test_psnr_rejects_bad_peak():
    a = np.zeros((4, 4))
    with pytest.raises(ParameterError):
        psnr(a, a, peak=0.0)


def test_complex_inputs_compared_by_magnitude():
    rng = np.random.default_rng(2)
    mag = rng.random((8, 8)) + 0.1
    phase = np.exp(1j * rng.uniform(-np.pi, np.pi, (8, 8)))
    assert psnr(mag * phase, mag, peak=1.0) == 99.0
    assert nrmse(mag * phase, mag) < 1e-15


def test_shape_and_dim_rejections():
    with pytest.raises(DimensionError):
        psnr(np.zeros((4, 4)), np.zeros((5, 4)), peak=1.0)
    with pytest.raises(DimensionError):
        nrmse(np.zeros(4), np.zeros(4))


def test_ssim_identical_is_one():
    a = np.random.default_rng(3).random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_degrades_with_noise():
    rng = np.random.default_rng(4)
    a = rng.random((32, 32))
    s1 = ssim(a + 0.05 * rng.standard_normal(a.shape), a)
    s2 = ssim(a + 0.3 * rng.standard_normal(a.shape), a)
    assert 0 < s2 < s1 < 1


def test_ssim_window_size_floor():
    with pytest.raises(DimensionError):
        ssim(np.zeros((6, 6)), np.zeros((6, 6)))


def test_ssim_constant_images():
    # Flat reference: dynamic range 0 falls back to L = 1, and equal
    # flats should still score 1.
    a = np.full((8, 8), 2.0)
    assert ssim(a, a) == pytest.approx(1.0)


def test_ssim_explicit_dynamic_range_symmetry():
    rng = np.random.default_rng(5)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    L = max(a.max() - a.min(), b.max() - b.min())
    assert ssim(a, b, dynamic_range=L) == pytest.approx(ssim(b, a, dynamic_range=L))


def test_nrmse_known_value():
    ref = np.ones((4, 4))
    x = np.full((4, 4), 1.5)
    assert nrmse(x, ref) == pytest.approx(0.5)


def test_nrmse_zero_reference_rejected():
    with pytest.raises(ParameterError):
        nrmse(np.ones((4, 4)), np.zeros((4, 4)))


def test_metric_row_validation():
    MetricRow("0001", "joint", "pet", 24.0, 0.9, 0.1)
    with pytest.raises(ParameterError):
        MetricRow("0001", "joint", "pet", float("nan"), 0.9, 0.1)
    with pytest.raises(ParameterError):
        MetricRow("0001", "joint", "pet", 120.0, 0.9, 0.1)
