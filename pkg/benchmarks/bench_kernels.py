"""Benchmark the two convolution-kernel backends.

Run:  python3 benchmarks/bench_kernels.py

Compares the compiled Cython loops against the im2col/BLAS numpy
implementations on the layer shapes this package actually uses. The numpy
backend wins at every size here (BLAS matmul beats scalar loops), which is
why it is the default and the extension is opt-in via MINIDREAM_KERNELS.
"""
import time

import numpy as np

from minidream.kernels import (corr_fwd_numpy, corr_grad_w_numpy,
                               corr_grad_x_numpy)

try:
    from minidream import _ckernels
except ImportError:
    _ckernels = None

# (label, N, CI, CO, H, K, stride): encoder layers of the two presets
CASES = [
    ("desk  enc0 32x32", 64, 3, 16, 32, 4, 2),
    ("desk  enc1 15x15", 64, 16, 32, 15, 4, 2),
    ("desk  enc2  6x6 ", 64, 32, 64, 6, 4, 2),
    ("paper enc0 64x64", 64, 3, 32, 64, 4, 2),
    ("paper enc1 31x31", 64, 32, 64, 31, 4, 2),
    ("paper enc2 14x14", 64, 64, 128, 14, 4, 2),
]


def bench(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3  # ms


def main():
    g = np.random.default_rng(0)
    print(f"{'case':22} {'op':9} {'numpy ms':>9} {'cython ms':>10} {'ratio':>7}")
    for label, n, ci, co, h, k, s in CASES:
        x = g.standard_normal((n, ci, h, h))
        w = g.standard_normal((co, ci, k, k))
        y = corr_fwd_numpy(x, w, s)
        gy = g.standard_normal(y.shape)
        ops = [
            ("fwd", corr_fwd_numpy, (x, w, s),
             lambda: _ckernels.corr_fwd(x, w, s)),
            ("grad_x", corr_grad_x_numpy, (gy, w, s, h, h),
             lambda: _ckernels.corr_grad_x(gy, w, s, h, h)),
            ("grad_w", corr_grad_w_numpy, (x, gy, s, k),
             lambda: _ckernels.corr_grad_w(x, gy, s, k)),
        ]
        for op, np_fn, np_args, cy_fn in ops:
            t_np = bench(np_fn, *np_args)
            if _ckernels is None:
                print(f"{label:22} {op:9} {t_np:9.3f} {'n/a':>10} {'n/a':>7}")
            else:
                t_cy = bench(cy_fn)
                print(f"{label:22} {op:9} {t_np:9.3f} {t_cy:10.3f} "
                      f"{t_cy / t_np:7.2f}x")


if __name__ == "__main__":
    main()
