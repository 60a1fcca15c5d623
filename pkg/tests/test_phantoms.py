import numpy as np
import pytest

from jointrecon.errors import ParameterError
from jointrecon.phantoms import PhantomSpec, make_phantom_pair
from jointrecon.rng import RandomStream


def spec_for(seed, size=32):
    return PhantomSpec(size, (3, 6), (1, 3), RandomStream(seed, "phantom"))


def test_size_floor_enforced():
    with pytest.raises(ParameterError):
        spec_for(0, size=8)


def test_count_range_validation():
    with pytest.raises(ParameterError):
        PhantomSpec(32, (0, 3), (1, 2), RandomStream(0))
    with pytest.raises(ParameterError):
        PhantomSpec(32, (3, 2), (1, 2), RandomStream(0))


def test_deterministic_per_spec():
    a = make_phantom_pair(spec_for(7))
    b = make_phantom_pair(spec_for(7))
    assert np.array_equal(a.pet, b.pet)
    assert np.array_equal(a.mri, b.mri)


def test_stream_position_does_not_leak_into_phantom():
    s = RandomStream(7, "phantom")
    s.normal(100)  # advance the stream before use
    spec = PhantomSpec(32, (3, 6), (1, 3), s)
    a = make_phantom_pair(spec)
    b = make_phantom_pair(spec_for(7))
    assert np.array_equal(a.pet, b.pet)


def test_seeds_differ():
    a = make_phantom_pair(spec_for(1))
    b = make_phantom_pair(spec_for(2))
    assert not np.array_equal(a.pet, b.pet)


def test_clean_pair_contract():
    for seed in range(5):
        pair = make_phantom_pair(spec_for(seed))
        assert np.all(pair.pet >= 0)
        assert np.all(np.isfinite(pair.pet))
        assert np.all(np.isfinite(pair.mri))
        assert pair.pet.max() <= 1.0 + 1e-12
        assert np.abs(pair.mri).max() <= 1.0 + 1e-12


def test_supports_coincide():
    # Shared anatomy: thresholded PET and MRI-magnitude supports overlap
    # almost perfectly (the 5% inside-boundary floor guarantees this).
    for seed in range(10):
        pair = make_phantom_pair(spec_for(seed, size=48))
        sup_p = pair.pet > 0.01 * pair.pet.max()
        sup_m = np.abs(pair.mri) > 0.01 * np.abs(pair.mri).max()
        dice = 2 * (sup_p & sup_m).sum() / (sup_p.sum() + sup_m.sum())
        assert dice > 0.99, f"seed {seed}: dice {dice:.4f}"


def test_phase_is_nontrivial():
    pair = make_phantom_pair(spec_for(3, size=48))
    support = np.abs(pair.mri) > 0
    phases = np.angle(pair.mri[support])
    assert phases.std() > 0.05


def test_background_is_zero():
    pair = make_phantom_pair(spec_for(4, size=48))
    # Image corners lie outside every allowed boundary ellipse.
    for r, c in [(0, 0), (0, 47), (47, 0), (47, 47)]:
        assert pair.pet[r, c] == 0.0
        assert pair.mri[r, c] == 0.0


def test_interior_contrast_varies():
    pair = make_phantom_pair(spec_for(5, size=48))
    inside = pair.pet[pair.pet > 0]
    assert inside.std() > 0.02
