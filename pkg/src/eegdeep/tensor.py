"""Dense float64 tensors and the seeded generator shared by every module.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 laid out
row-major with the time axis last.  The helpers here add the shape checks
the rest of the package relies on.
"""

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x):
    """Return ``x`` as a C-contiguous float64 array (no copy if already one)."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def matmul(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def reduce_mean(x, axis):
    x = np.asarray(x, dtype=DTYPE)
    if not 0 <= axis < x.ndim:
        raise DimensionError(f"reduce_mean: axis {axis} out of range for shape {x.shape}")
    return x.mean(axis=axis)


def add(a, b):
    return np.add(a, b, dtype=DTYPE)


def mul(a, b):
    return np.multiply(a, b, dtype=DTYPE)


def scale(x, alpha):
    return np.multiply(x, alpha, dtype=DTYPE)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def exp(x):
    return np.exp(np.asarray(x, dtype=DTYPE))


class Rng:
    """Seeded generator over numpy's PCG64 bit stream.

    PCG64 (O'Neill 2014, 128-bit LCG with XSL-RR output) is fixed here
    rather than left to the platform default, so a given seed produces the
    same stream everywhere.  Permutations are drawn with an explicit
    Fisher-Yates pass on top of it.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def permutation(self, n):
        return rng_permutation(self, n)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def random(self, size=None):
        return self._gen.random(size=size)

    def spawn(self, key):
        """Independent child generator derived from this seed and an integer key."""
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, int(key)])
        return Rng(int(ss.generate_state(1, dtype=np.uint64)[0]))


def rng_permutation(rng, n):
    """Uniform permutation of ``range(n)`` by Fisher-Yates, deterministic per seed."""
    if n < 0:
        raise ValueError("n must be non-negative")
    perm = list(range(n))
    if n < 2:
        return perm
    # j_i uniform on [0, i] for i = n-1 .. 1
    js = rng.integers(0, np.arange(n, 1, -1))
    for i, j in zip(range(n - 1, 0, -1), js.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm
