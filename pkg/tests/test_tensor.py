import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegdeep.tensor import DimensionError, Rng, add, exp, matmul, mul, reduce_mean, rng_permutation, scale, tanh


def triple_loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[p, j]
            c[i, j] = s
    return c


def test_matmul_identity():
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(matmul(np.eye(3), x), x)


def test_matmul_hand_example():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    np.testing.assert_allclose(matmul(a, b), triple_loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_matmul_associative(m, k, n, p, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(m, k)), rng.normal(size=(k, n)), rng.normal(size=(n, p))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-12)


def test_reduce_mean():
    np.testing.assert_array_equal(reduce_mean(np.array([[1.0, 3.0], [5.0, 7.0]]), 0), [3.0, 5.0])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3), st.floats(-1e6, 1e6), st.data())
def test_reduce_mean_of_constant_is_exact(shape, value, data):
    axis = data.draw(st.integers(0, len(shape) - 1))
    out = reduce_mean(np.full(shape, value), axis)
    assert out.shape == tuple(d for i, d in enumerate(shape) if i != axis)
    assert np.all(out == value) or np.allclose(out, value, rtol=1e-15)


def test_reduce_mean_axis_out_of_range():
    with pytest.raises(DimensionError):
        reduce_mean(np.ones((2, 3)), 2)


def test_elementwise_ops_match_scalar_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=50), rng.normal(size=50)
    import math
    np.testing.assert_allclose(add(a, b), [x + y for x, y in zip(a, b)], atol=1e-15)
    np.testing.assert_allclose(mul(a, b), [x * y for x, y in zip(a, b)], atol=1e-15)
    np.testing.assert_allclose(scale(a, 2.5), [2.5 * x for x in a], atol=1e-15)
    np.testing.assert_allclose(tanh(a), [math.tanh(x) for x in a], atol=1e-15)
    np.testing.assert_allclose(exp(a), [math.exp(x) for x in a], rtol=1e-15)


def test_permutation_edge_cases():
    assert rng_permutation(Rng(1), 0) == []
    assert rng_permutation(Rng(1), 1) == [0]


def test_permutation_deterministic_per_seed():
    assert Rng(123).permutation(1000) == Rng(123).permutation(1000)
    assert Rng(123).permutation(1000) != Rng(124).permutation(1000)


def test_rng_stream_is_pinned():
    # pinned PCG64 output: guards against a silent change of generator
    # first draw of PCG64(0) is the value numpy documents for default_rng(0)
    assert Rng(0).random(3).tolist() == [0.6369616873214543, 0.2697867137638703, 0.04097352393619469]
    assert Rng(12345).integers(0, 1000, size=5).tolist() == [699, 227, 788, 316, 204]
    assert Rng(0).permutation(10) == [9, 2, 3, 7, 0, 6, 1, 4, 5, 8]
    assert Rng(0).spawn(1).seed == 5836529245451711556


@given(st.integers(0, 300), st.integers(0, 2**63 - 1))
def test_permutation_is_bijection(n, seed):
    assert sorted(rng_permutation(Rng(seed), n)) == list(range(n))


def test_permutation_is_roughly_uniform():
    counts = np.zeros((3, 3))
    rng = Rng(7)
    for _ in range(6000):
        p = rng.permutation(3)
        for pos, v in enumerate(p):
            counts[pos, v] += 1
    np.testing.assert_allclose(counts / 6000, 1 / 3, atol=0.03)


def test_spawn_is_deterministic_and_distinct():
    a, b = Rng(5).spawn(1), Rng(5).spawn(1)
    assert a.seed == b.seed
    assert Rng(5).spawn(1).seed != Rng(5).spawn(2).seed
