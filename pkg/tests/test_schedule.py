import numpy as np
import pytest

from jointrecon.errors import ParameterError
from jointrecon.grids import ImagePair
from jointrecon.rng import RandomStream
from jointrecon.schedule import NoiseSchedule, forward_diffuse, sigma_at


def test_endpoints():
    sched = NoiseSchedule(0.01, 10.0, 100)
    assert sched.sigma(0) == pytest.approx(0.01)
    assert sched.sigma(100) == pytest.approx(10.0)


def test_geometric_spacing():
    sched = NoiseSchedule(0.5, 8.0, 4)
    s = sched.sigmas()
    ratios = s[1:] / s[:-1]
    np.testing.assert_allclose(ratios, ratios[0])
    assert s[0] == pytest.approx(0.5)
    assert s[-1] == pytest.approx(8.0)


def test_sigmas_ascending_with_n_plus_one_entries():
    sched = NoiseSchedule(0.1, 2.0, 7)
    s = sched.sigmas()
    assert len(s) == 8
    assert np.all(np.diff(s) > 0)


def test_level_bounds_checked():
    sched = NoiseSchedule(0.1, 1.0, 5)
    with pytest.raises(ParameterError):
        sched.sigma(-1)
    with pytest.raises(ParameterError):
        sched.sigma(6)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        NoiseSchedule(0.0, 1.0, 5)
    with pytest.raises(ParameterError):
        NoiseSchedule(2.0, 1.0, 5)
    with pytest.raises(ParameterError):
        NoiseSchedule(0.1, 1.0, 0)


def test_sigma_at_matches_method():
    sched = NoiseSchedule(0.2, 5.0, 9)
    assert sigma_at(3, sched) == sched.sigma(3)


def test_forward_diffuse_statistics():
    m = 24
    pair = ImagePair(np.zeros((m, m)), np.zeros((m, m), complex))
    sched = NoiseSchedule(0.1, 4.0, 10)
    noisy = forward_diffuse(pair, 10, sched, RandomStream(0, "d"))
    samples = np.concatenate(
        [noisy.pet.ravel(), noisy.mri.real.ravel(), noisy.mri.imag.ravel()]
    )
    assert abs(samples.std() - 4.0) < 0.15
    assert abs(samples.mean()) < 0.3


def test_forward_diffuse_deterministic():
    pair = ImagePair(np.ones((4, 4)), np.ones((4, 4), complex))
    sched = NoiseSchedule(0.1, 1.0, 3)
    a = forward_diffuse(pair, 2, sched, RandomStream(5, "x"))
    b = forward_diffuse(pair, 2, sched, RandomStream(5, "x"))
    assert np.array_equal(a.pet, b.pet)
    assert np.array_equal(a.mri, b.mri)


def test_forward_diffuse_channels_get_independent_noise():
    pair = ImagePair(np.zeros((16, 16)), np.zeros((16, 16), complex))
    sched = NoiseSchedule(0.1, 1.0, 1)
    noisy = forward_diffuse(pair, 1, sched, RandomStream(2, "ind"))
    corr = np.corrcoef(noisy.pet.ravel(), noisy.mri.real.ravel())[0, 1]
    assert abs(corr) < 0.2
