"""Backend parity: the compiled kernels must match the numpy reference."""
import numpy as np
import pytest

from minidream import kernels

try:
    from minidream import _ckernels
    HAVE_CYTHON = True
except ImportError:
    HAVE_CYTHON = False


def arrs(seed, n=2, ci=3, co=4, h=9, w=9, k=3):
    g = np.random.default_rng(seed)
    return (g.standard_normal((n, ci, h, w)),
            g.standard_normal((co, ci, k, k)))


@pytest.mark.parametrize("stride", [1, 2, 3])
@pytest.mark.parametrize("seed", range(3))
def test_numpy_fwd_matches_direct_loops(seed, stride):
    x, w = arrs(seed)
    y = kernels.corr_fwd_numpy(x, w, stride)
    n, ci, h, ww = x.shape
    co, _, k, _ = w.shape
    ho = (h - k) // stride + 1
    ref = np.zeros((n, co, ho, ho))
    for i in range(ho):
        for j in range(ho):
            patch = x[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            ref[:, :, i, j] = np.einsum("ncuv,ocuv->no", patch, w)
    assert np.allclose(y, ref, atol=1e-12)


@pytest.mark.skipif(not HAVE_CYTHON, reason="compiled extension not built")
@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_cython_matches_numpy(seed, stride):
    x, w = arrs(seed)
    k = w.shape[2]
    y_np = kernels.corr_fwd_numpy(x, w, stride)
    y_cy = _ckernels.corr_fwd(np.ascontiguousarray(x), np.ascontiguousarray(w), stride)
    assert np.allclose(y_np, y_cy, atol=1e-12)

    gy = np.random.default_rng(seed + 9).standard_normal(y_np.shape)
    gx_np = kernels.corr_grad_x_numpy(gy, w, stride, x.shape[2], x.shape[3])
    gx_cy = _ckernels.corr_grad_x(np.ascontiguousarray(gy),
                                  np.ascontiguousarray(w), stride,
                                  x.shape[2], x.shape[3])
    assert np.allclose(gx_np, gx_cy, atol=1e-12)

    gw_np = kernels.corr_grad_w_numpy(x, gy, stride, k)
    gw_cy = _ckernels.corr_grad_w(np.ascontiguousarray(x),
                                  np.ascontiguousarray(gy), stride, k)
    assert np.allclose(gw_np, gw_cy, atol=1e-12)


def test_grad_x_transposes_fwd():
    """corr_grad_x is the adjoint of corr_fwd: <y, Ax> == <A^T y, x>."""
    g = np.random.default_rng(3)
    x = g.standard_normal((1, 2, 8, 8))
    w = g.standard_normal((3, 2, 4, 4))
    y = kernels.corr_fwd_numpy(x, w, 2)
    gy = g.standard_normal(y.shape)
    gx = kernels.corr_grad_x_numpy(gy, w, 2, 8, 8)
    assert np.isclose((y * gy).sum(), (x * gx).sum(), atol=1e-10)


def test_backend_constant_is_valid():
    assert kernels.BACKEND in ("numpy", "cython")
