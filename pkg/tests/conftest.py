import numpy as np
import pytest


def numeric_grad(f, x, h=1e-5, stencil=3):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (mutated and restored).

    ``stencil=5`` uses the fourth-order five-point rule, for checks tighter
    than the ~1e-11 roundoff floor of the three-point rule at h=1e-5.
    """
    offsets = {3: ((1, 0.5), (-1, -0.5)), 5: ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))}[stencil]
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        acc = 0.0
        for k, c in offsets:
            flat[i] = old + k * h
            acc += c * f()
        flat[i] = old
        gflat[i] = acc / h
    return g


def max_rel_error(a, n, floor=1e-8):
    a, n = np.asarray(a), np.asarray(n)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor), initial=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
