import numpy as np
import pytest

from jointrecon.rng import RandomStream


def test_same_seed_label_same_sequence():
    a = RandomStream(7, "x").normal(100)
    b = RandomStream(7, "x").normal(100)
    assert np.array_equal(a, b)


def test_different_labels_differ():
    a = RandomStream(7, "x").normal(100)
    b = RandomStream(7, "y").normal(100)
    assert not np.array_equal(a, b)


def test_different_seeds_differ():
    a = RandomStream(7, "x").normal(100)
    b = RandomStream(8, "x").normal(100)
    assert not np.array_equal(a, b)


def test_child_labels_join_with_slash():
    root = RandomStream(3, "run")
    kid = root.child("noise")
    assert kid.label == "run/noise"
    assert kid.seed == 3


def test_child_of_unlabelled_root():
    kid = RandomStream(3).child("noise")
    assert kid.label == "noise"


def test_child_independent_of_parent_position():
    # Drawing from the parent first must not shift the child's sequence.
    p1 = RandomStream(5, "a")
    c1 = p1.child("b").normal(10)
    p2 = RandomStream(5, "a")
    p2.normal(1000)
    c2 = p2.child("b").normal(10)
    assert np.array_equal(c1, c2)


def test_fresh_rewinds():
    s = RandomStream(11, "t")
    first = s.normal(5)
    s.normal(50)
    again = s.fresh().normal(5)
    assert np.array_equal(first, again)


def test_poisson_returns_float64():
    s = RandomStream(0, "p")
    out = s.poisson(np.full(1000, 4.0))
    assert out.dtype == np.float64
    assert np.all(out == np.round(out))
    assert abs(out.mean() - 4.0) < 0.3


def test_choice_distinct():
    s = RandomStream(2, "c")
    picks = s.choice(20, 20)
    assert sorted(picks) == list(range(20))


def test_negative_draw_count_rejected():
    with pytest.raises(ValueError):
        RandomStream(0).normal(-1)


def test_normal_moments():
    x = RandomStream(1, "m").normal(200_000)
    assert abs(x.mean()) < 0.01
    assert abs(x.std() - 1.0) < 0.01
