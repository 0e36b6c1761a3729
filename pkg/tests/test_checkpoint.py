"""Checkpoint file format round-trips."""
import numpy as np
import pytest

from minidream.checkpoint import load_checkpoint, save_checkpoint


def test_round_trip_values_and_meta(tmp_path):
    p = tmp_path / "m.ckpt"
    tensors = {"w": np.random.default_rng(0).standard_normal((3, 4)),
               "b": np.zeros(4), "s": np.array(2.5)}
    meta = {"kind": "test", "config": {"n": 3, "flag": True}}
    save_checkpoint(p, tensors, meta)
    loaded, m2 = load_checkpoint(p)
    assert m2 == meta
    for k in tensors:
        assert loaded[k].shape == np.asarray(tensors[k]).shape
        assert loaded[k].dtype == np.float64
        # values survive up to one float32 quantization
        assert np.allclose(loaded[k], tensors[k], atol=1e-6)


def test_second_save_is_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    tensors = {"w": np.random.default_rng(1).standard_normal((5, 5))}
    save_checkpoint(p1, tensors, {"kind": "t"})
    loaded, meta = load_checkpoint(p1)
    save_checkpoint(p2, loaded, meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_tensor_order_is_canonical(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    a, b = np.ones(2), np.zeros(3)
    save_checkpoint(p1, {"a": a, "b": b})
    save_checkpoint(p2, {"b": b, "a": a})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.ckpt"
    p.write_bytes(b"NOPE 9\n---\n")
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(p)
