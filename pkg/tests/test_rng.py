"""Seeded stream reproducibility and substream independence."""
import numpy as np

from minidream.rng import RngStream


def test_same_seed_same_draws():
    a = RngStream(42, "x").normal(100)
    b = RngStream(42, "x").normal(100)
    assert np.array_equal(a, b)


def test_different_names_differ():
    a = RngStream(42, "x").normal(100)
    b = RngStream(42, "y").normal(100)
    assert not np.array_equal(a, b)


def test_substream_names_compose():
    direct = RngStream(7, "root/a/b").normal(10)
    nested = RngStream(7, "root").substream("a").substream("b").normal(10)
    assert np.array_equal(direct, nested)


def test_substream_does_not_advance_parent():
    root = RngStream(3, "root")
    before = RngStream(3, "root").normal(5)
    root.substream("child").normal(1000)
    assert np.array_equal(root.normal(5), before)


def test_substreams_look_independent():
    # correlation between sibling streams should be tiny
    root = RngStream(11, "root")
    a = root.substream("a").normal(20000)
    b = root.substream("b").normal(20000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_uniform_and_integers_respect_bounds():
    s = RngStream(5, "bounds")
    u = s.uniform(-2.0, 3.0, size=1000)
    assert (u >= -2.0).all() and (u < 3.0).all()
    i = s.integers(0, 10, size=1000)
    assert (i >= 0).all() and (i < 10).all()
