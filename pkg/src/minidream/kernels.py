"""Correlation kernels used by conv2d/deconv2d, with backend selection.

Three primitives cover both layers and their gradients (NCHW, valid padding,
square filters):

    corr_fwd(x, w, s)              forward cross-correlation
    corr_grad_x(gy, w, s, H, W)    scatter-add, i.e. transposed convolution
    corr_grad_w(x, gy, s, K)       filter gradient

A compiled Cython backend is used when the ``minidream._ckernels`` extension
imported cleanly; otherwise the im2col-based numpy implementations below are
used. Set MINIDREAM_KERNELS=numpy or =cython to force a backend.
"""
from __future__ import annotations

import os

import numpy as np


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Strided view (N, CI, HO, WO, K, K) of all filter-sized windows."""
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride, :, :]


def corr_fwd_numpy(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    n, ci, h, ww = x.shape
    co, _, k, _ = w.shape
    win = _windows(x, k, stride)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, ci * k * k)
    y = cols @ w.reshape(co, ci * k * k).T
    return np.ascontiguousarray(y.reshape(n, ho, wo, co).transpose(0, 3, 1, 2))


def corr_grad_x_numpy(gy: np.ndarray, w: np.ndarray, stride: int,
                      h: int, width: int) -> np.ndarray:
    n, co, ho, wo = gy.shape
    _, ci, k, _ = w.shape
    # g_cols[n, c, ho, wo, u, v] = sum_o gy[n, o, ho, wo] * w[o, c, u, v]
    g_cols = np.tensordot(gy, w, axes=([1], [0]))  # (n, ho, wo, ci, k, k)
    gx = np.zeros((n, ci, h, width), dtype=np.float64)
    for u in range(k):
        for v in range(k):
            gx[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += \
                g_cols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return gx


def corr_grad_w_numpy(x: np.ndarray, gy: np.ndarray, stride: int, k: int) -> np.ndarray:
    n, ci, h, ww = x.shape
    _, co, ho, wo = gy.shape
    win = _windows(x, k, stride)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, ci * k * k)
    g = gy.transpose(1, 0, 2, 3).reshape(co, n * ho * wo)
    return (g @ cols).reshape(co, ci, k, k)


# benchmarks/bench_kernels.py: the BLAS-backed im2col path outperforms the
# compiled loops at every size this package uses, so numpy is the default
# and the extension is opt-in.
_forced = os.environ.get("MINIDREAM_KERNELS", "numpy").lower()
_ck = None
if _forced == "cython":
    from minidream import _ckernels as _ck

if _ck is not None:
    BACKEND = "cython"

    def corr_fwd(x, w, stride):
        return _ck.corr_fwd(np.ascontiguousarray(x), np.ascontiguousarray(w), stride)

    def corr_grad_x(gy, w, stride, h, width):
        return _ck.corr_grad_x(np.ascontiguousarray(gy), np.ascontiguousarray(w),
                               stride, h, width)

    def corr_grad_w(x, gy, stride, k):
        return _ck.corr_grad_w(np.ascontiguousarray(x), np.ascontiguousarray(gy),
                               stride, k)
else:
    BACKEND = "numpy"
    corr_fwd = corr_fwd_numpy
    corr_grad_x = corr_grad_x_numpy
    corr_grad_w = corr_grad_w_numpy
