import numpy as np
import pytest

from jointrecon.baselines import (
    MlemConfig,
    TvConfig,
    _tv_value_grad,
    mlem,
    tv_cs,
    zero_filled,
)
from jointrecon.errors import GeometryError, ParameterError
from jointrecon.fourier import KSpaceData, SamplingMask, fourier_forward
from jointrecon.phantoms import PhantomSpec, make_phantom_pair
from jointrecon.radon import RadonGeometry, Sinogram, radon_forward
from jointrecon.rng import RandomStream
from jointrecon.sampler import poisson_objective


def phantom(m=32, seed=0):
    return make_phantom_pair(PhantomSpec(m, (3, 5), (1, 2), RandomStream(seed, "b")))


def test_config_validation():
    with pytest.raises(ParameterError):
        MlemConfig(iterations=0)
    with pytest.raises(ParameterError):
        MlemConfig(floor=0.0)
    with pytest.raises(ParameterError):
        TvConfig(iterations=0)
    with pytest.raises(ParameterError):
        TvConfig(step_size=0.0)
    with pytest.raises(ParameterError):
        TvConfig(tv_weight=-1.0)


def test_mlem_nonnegative_and_monotone():
    pair = phantom()
    geom = RadonGeometry.uniform(32, 32, 24)
    f = radon_forward(pair.pet, geom)
    u, objectives = mlem(f, geom, MlemConfig(iterations=40))
    assert np.all(u >= 0)
    assert len(objectives) == 40
    diffs = np.diff(objectives)
    assert np.all(diffs <= 1e-9), f"objective increased by {diffs.max()}"


def test_mlem_fixed_point():
    # Consistent data with the true image as the start: the
    # multiplicative update has ratio 1 everywhere it matters.
    geom = RadonGeometry.uniform(16, 16, 10)
    rng = np.random.default_rng(1)
    u0 = rng.random((16, 16)) + 0.5
    coords = np.arange(16) - 7.5
    in_circle = coords[None, :] ** 2 + coords[:, None] ** 2 <= 64.0
    u0 = np.where(in_circle, u0, 0.0)
    f = radon_forward(u0, geom)

    # Run one manual update from u0 and confirm it stays put.
    from jointrecon.radon import radon_adjoint

    sens = radon_adjoint(Sinogram(geom, np.ones(f.shape)))
    proj = radon_forward(u0, geom)
    ratio = f.data / np.maximum(proj.data, 1e-12)
    back = radon_adjoint(Sinogram(geom, ratio))
    fov = sens > 0
    u1 = np.where(fov, u0 * back / np.where(fov, sens, 1.0), 0.0)
    assert np.abs(u1 - u0).max() < 1e-10


def test_mlem_approaches_truth_on_clean_data():
    pair = phantom()
    geom = RadonGeometry.uniform(32, 48, 40)
    f = radon_forward(pair.pet, geom)
    u, _ = mlem(f, geom, MlemConfig(iterations=60))
    err = np.linalg.norm(u - pair.pet) / np.linalg.norm(pair.pet)
    assert err < 0.25


def test_mlem_rejects_negative_counts():
    geom = RadonGeometry.uniform(8, 8, 4)
    with pytest.raises(ParameterError):
        mlem(Sinogram(geom, -np.ones((8, 4))), geom, MlemConfig())


def test_mlem_geometry_error_on_uncovered_circle(monkeypatch):
    # The detector span always covers the inscribed circle for the
    # geometries this package builds, so the guard is defensive.  Force
    # a zero-sensitivity map to confirm the check fires before iterating.
    import jointrecon.baselines as bl

    geom = RadonGeometry(16, 20, (0.0,))
    f = Sinogram(geom, np.ones((20, 1)))
    monkeypatch.setattr(bl, "radon_adjoint", lambda s: np.zeros((16, 16)))
    with pytest.raises(GeometryError):
        mlem(f, geom, MlemConfig())


def test_zero_filled_exact_on_full_mask():
    pair = phantom()
    mask = SamplingMask(32, 32, np.ones(32, dtype=bool))
    g = fourier_forward(pair.mri, mask)
    v = zero_filled(g)
    assert np.abs(v - pair.mri).max() < 1e-10


def test_zero_filled_undersampled_keeps_kept_lines():
    pair = phantom()
    kept = np.zeros(32, dtype=bool)
    kept[10:23] = True
    mask = SamplingMask(32, 32, kept)
    g = fourier_forward(pair.mri, mask)
    v = zero_filled(g)
    from jointrecon.fourier import fft_centered

    k = fft_centered(v)
    np.testing.assert_allclose(k[:, kept], g.data[:, kept], atol=1e-10)
    assert np.abs(k[:, ~kept]).max() < 1e-10


def test_tv_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    val, grad = _tv_value_grad(v, 1e-6)
    h = 1e-7
    for _ in range(8):
        r, c = rng.integers(0, 8, 2)
        for part, comp in ((1.0, np.real), (1j, np.imag)):
            vp = v.copy()
            vp[r, c] += part * h
            vm = v.copy()
            vm[r, c] -= part * h
            fd = (_tv_value_grad(vp, 1e-6)[0] - _tv_value_grad(vm, 1e-6)[0]) / (2 * h)
            assert comp(grad[r, c]) == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_tv_value_of_constant_image_is_minimal():
    v = np.full((8, 8), 3.0 + 1.0j)
    val, grad = _tv_value_grad(v, 1e-6)
    assert val == pytest.approx(64 * 1e-3, rel=0.01)  # just the eps floor
    assert np.abs(grad).max() < 1e-9


def test_tv_cs_objective_non_increasing():
    pair = phantom()
    kept = np.zeros(32, dtype=bool)
    kept[::3] = True
    kept[14:19] = True
    mask = SamplingMask(32, 32, kept)
    g = fourier_forward(pair.mri, mask)
    v, history = tv_cs(g, TvConfig(iterations=30))
    assert len(history) == 31
    assert np.all(np.diff(history) <= 1e-9)
    assert np.all(np.isfinite(v))


def test_tv_cs_improves_on_zero_fill():
    pair = phantom(seed=3)
    kept = np.zeros(32, dtype=bool)
    kept[::4] = True
    kept[13:20] = True
    mask = SamplingMask(32, 32, kept)
    g = fourier_forward(pair.mri, mask)
    v, _ = tv_cs(g, TvConfig(iterations=60, tv_weight=3e-3))
    zf = zero_filled(g)
    err_tv = np.linalg.norm(v - pair.mri)
    err_zf = np.linalg.norm(zf - pair.mri)
    assert err_tv < err_zf
