import math

import numpy as np
import pytest

from jointrecon.errors import DimensionError, ParameterError
from jointrecon.grids import inner_product
from jointrecon.radon import (
    RadonGeometry,
    Sinogram,
    radon_adjoint,
    radon_forward,
    system_matrix,
)


def test_geometry_validation():
    with pytest.raises(ParameterError):
        RadonGeometry(0, 4, (0.0,))
    with pytest.raises(ParameterError):
        RadonGeometry(4, 0, (0.0,))
    with pytest.raises(ParameterError):
        RadonGeometry(4, 4, ())
    with pytest.raises(ParameterError):
        RadonGeometry(4, 4, (0.0, math.pi))
    with pytest.raises(ParameterError):
        RadonGeometry(4, 4, (0.5, 0.5))


def test_uniform_angles_cover_half_turn():
    geom = RadonGeometry.uniform(8, 8, 4)
    assert geom.angles == (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)


def test_detector_spacing_spans_diagonal():
    geom = RadonGeometry(64, 16, (0.0,))
    assert geom.detector_spacing == pytest.approx(math.sqrt(2) * 64 / 16)


def test_sinogram_shape_enforced():
    geom = RadonGeometry.uniform(8, 10, 3)
    with pytest.raises(DimensionError):
        Sinogram(geom, np.zeros((3, 10)))
    ok = Sinogram(geom, np.zeros((10, 3)))
    assert ok.shape == (10, 3)


def test_sinogram_scale_positive():
    geom = RadonGeometry(2, 2, (0.0,))
    with pytest.raises(ParameterError):
        Sinogram(geom, np.zeros((2, 1)), scale=0.0)


def test_forward_rejects_wrong_image_shape():
    geom = RadonGeometry.uniform(8, 8, 4)
    with pytest.raises(DimensionError):
        radon_forward(np.zeros((7, 7)), geom)


def test_impulse_splats_to_two_bins():
    # Oracle: recompute the projected position of one pixel by hand and
    # check the two-bin linear split at every angle.
    m, nd = 16, 20
    geom = RadonGeometry.uniform(m, nd, 5)
    r, c = 4, 11
    img = np.zeros((m, m))
    img[r, c] = 1.0
    sino = radon_forward(img, geom).data
    spacing = math.sqrt(2) * m / nd
    x = c - (m - 1) / 2.0
    y = r - (m - 1) / 2.0
    for a, ang in enumerate(geom.angles):
        t = math.cos(ang) * x + math.sin(ang) * y
        s = t / spacing + (nd - 1) / 2.0
        i0 = math.floor(s)
        frac = s - i0
        expect = np.zeros(nd)
        expect[i0] = 1.0 - frac
        expect[i0 + 1] = frac
        np.testing.assert_allclose(sino[:, a], expect, atol=1e-12)


def test_mass_preserved_for_interior_support():
    # Every pixel of an interior-supported image splats fully inside the
    # detector range, so each view integrates to the image sum.
    rng = np.random.default_rng(3)
    m = 32
    geom = RadonGeometry.uniform(m, m, 9)
    img = np.zeros((m, m))
    img[8:24, 8:24] = rng.random((16, 16))
    sino = radon_forward(img, geom).data
    np.testing.assert_allclose(sino.sum(axis=0), img.sum(), rtol=1e-12)


def test_nonnegative_images_project_nonnegative():
    rng = np.random.default_rng(4)
    geom = RadonGeometry.uniform(16, 16, 7)
    sino = radon_forward(rng.random((16, 16)), geom)
    assert np.all(sino.data >= 0)


def test_linearity():
    rng = np.random.default_rng(5)
    geom = RadonGeometry.uniform(12, 14, 6)
    u = rng.standard_normal((12, 12))
    v = rng.standard_normal((12, 12))
    lhs = radon_forward(2.5 * u - v, geom).data
    rhs = 2.5 * radon_forward(u, geom).data - radon_forward(v, geom).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_adjoint_identity_machine_exact():
    rng = np.random.default_rng(6)
    geom = RadonGeometry.uniform(24, 20, 11)
    for _ in range(5):
        u = rng.standard_normal((24, 24))
        s = Sinogram(geom, rng.standard_normal((20, 11)))
        lhs = inner_product(radon_forward(u, geom).data, s.data)
        rhs = inner_product(u, radon_adjoint(s))
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_adjoint_of_impulse_sinogram_hits_weighted_pixels():
    # Backprojecting a one-bin sinogram must smear that bin's weights
    # back into the image: A* e_b = row b of the system matrix.
    m, nd, na = 8, 10, 3
    geom = RadonGeometry.uniform(m, nd, na)
    mat = system_matrix(geom)
    data = np.zeros((nd, na))
    data[4, 1] = 1.0
    back = radon_adjoint(Sinogram(geom, data))
    row = 1 * nd + 4
    np.testing.assert_allclose(back.ravel(), mat.getrow(row).toarray()[0], atol=0)


def test_system_matrix_cached():
    geom_a = RadonGeometry.uniform(8, 8, 4)
    geom_b = RadonGeometry.uniform(8, 8, 4)
    assert system_matrix(geom_a) is system_matrix(geom_b)


def test_rotationally_symmetric_blob_gives_angle_uniform_sinogram():
    # Linear two-bin splatting leaves a small angle-dependent ripple, so
    # the bins must stay coarse relative to the grid for this to hold.
    for m, nd, na in [(64, 8, 16), (128, 16, 8)]:
        geom = RadonGeometry.uniform(m, nd, na)
        c = (m - 1) / 2.0
        yy, xx = np.mgrid[0:m, 0:m]
        img = np.exp(-((xx - c) ** 2 + (yy - c) ** 2) / (2 * (m / 8.0) ** 2))
        sino = radon_forward(img, geom).data
        dev = np.abs(sino - sino.mean(axis=1)[:, None]).max() / sino.max()
        assert dev <= 1e-3, f"m={m} nd={nd} na={na}: ripple {dev:.2e}"
