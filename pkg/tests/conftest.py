import numpy as np
import pytest

from minidream import autodiff as ad
from minidream.autodiff import Tensor


def central_diff(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def gradcheck(build_loss, arrays, rtol: float = 1e-4, eps: float = 1e-6):
    """Compare autodiff grads of build_loss(*tensors) against central
    differences for every input array. Returns worst relative error."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    ad.backward(loss)
    worst = 0.0
    for j, t in enumerate(tensors):
        def f(x, j=j):
            args = [tt.data for tt in tensors]
            args[j] = x
            with ad.no_grad():
                return float(build_loss(*[Tensor(a) for a in args]).data)
        num = central_diff(f, t.data.copy(), eps)
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        denom = max(np.abs(num).max(), np.abs(got).max(), 1e-8)
        err = np.abs(got - num).max() / denom
        assert err < rtol, f"input {j}: rel err {err:.3e} >= {rtol}"
        worst = max(worst, err)
    return worst


def gradcheck_sampled(build_loss, arrays, n_coords: int = 8,
                      rtol: float = 1e-4, eps: float = 1e-6, seed: int = 0):
    """Like gradcheck but compares central differences only at `n_coords`
    randomly chosen coordinates per input (tractable for full models)."""
    pick = np.random.default_rng(seed)
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    ad.backward(loss)

    def f_at(j, x):
        args = [tt.data for tt in tensors]
        args[j] = x
        with ad.no_grad():
            return float(build_loss(*[Tensor(a) for a in args]).data)

    worst = 0.0
    for j, t in enumerate(tensors):
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat_idx = pick.choice(t.data.size, size=min(n_coords, t.data.size),
                               replace=False)
        scale = max(np.abs(got).max(), 1e-6)
        for fi in flat_idx:
            x = t.data.copy()
            xf = x.reshape(-1)
            orig = xf[fi]
            xf[fi] = orig + eps
            fp = f_at(j, x)
            xf[fi] = orig - eps
            fm = f_at(j, x)
            num = (fp - fm) / (2 * eps)
            err = abs(got.reshape(-1)[fi] - num) / max(abs(num), scale)
            assert err < rtol, f"input {j} coord {fi}: rel err {err:.3e} >= {rtol}"
            worst = max(worst, err)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)
