import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import eegdeep.recurrent as recurrent
from conftest import max_rel_error, numeric_grad
from eegdeep.models import Model, build_stacked
from eegdeep.recurrent import GRU, LSTM, gru_cell, lstm_cell
from eegdeep.tensor import DimensionError, Rng

BPTT_TOL = 1e-5


def _layer(cls, d, units, seed, return_sequences=True, p=0.0, recurrent_p=0.0):
    layer = cls(units, return_sequences=return_sequences, p=p, recurrent_p=recurrent_p)
    layer.init_params(Rng(seed), (None, d))
    # nonzero biases so every gate path carries gradient
    layer.params["b"][...] = np.random.default_rng(seed).normal(scale=0.3, size=layer.params["b"].shape)
    return layer


def _unroll_oracle(kind, x, params, mx=None, mh=None):
    """Step the free cell functions over time, masking the way the layer documents."""
    w, u, b = params["W"], params["U"], params["b"]
    bsz, t, _ = x.shape
    n = u.shape[0]
    h = np.zeros((bsz, n))
    c = np.zeros((bsz, n))
    out = []
    for s in range(t):
        xt = x[:, s] if mx is None else x[:, s] * mx
        hm = h if mh is None else h * mh
        if kind == "lstm":
            h_new, c = lstm_cell(xt, hm, c, w, u, b)
        else:
            # carried state is unmasked; only the gate inputs see the mask
            h_new = _gru_step_masked(xt, h, hm, w, u, b)
        h = h_new
        out.append(h)
    return np.stack(out, axis=1)


def _gru_step_masked(xt, h, hm, w, u, b):
    n = h.shape[1]
    if hm is h:
        return gru_cell(xt, h, w, u, b)
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    z = sig(xt @ w[:, :n] + hm @ u[:, :n] + b[:n])
    r = sig(xt @ w[:, n : 2 * n] + hm @ u[:, n : 2 * n] + b[n : 2 * n])
    ht = np.tanh(xt @ w[:, 2 * n :] + (r * hm) @ u[:, 2 * n :] + b[2 * n :])
    return (1.0 - z) * h + z * ht


# --- cells -----------------------------------------------------------------

def test_lstm_zero_weights_zero_state():
    w, u, b = np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8)
    h, c = lstm_cell(np.ones((1, 3)), np.zeros((1, 2)), np.zeros((1, 2)), w, u, b)
    assert np.all(h == 0.0) and np.all(c == 0.0)


def test_lstm_zero_weights_unit_cell():
    w, u, b = np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8)
    h, c = lstm_cell(np.ones((1, 3)), np.zeros((1, 2)), np.ones((1, 2)), w, u, b)
    np.testing.assert_allclose(c, 0.5, atol=1e-15)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5), atol=1e-15)
    assert abs(h[0, 0] - 0.2310586) < 1e-7


def test_gru_zero_weights():
    w, u, b = np.zeros((3, 6)), np.zeros((2, 6)), np.zeros(6)
    assert np.all(gru_cell(np.ones((1, 3)), np.zeros((1, 2)), w, u, b) == 0.0)
    np.testing.assert_allclose(gru_cell(np.ones((1, 3)), np.ones((1, 2)), w, u, b), 0.5, atol=1e-15)


def test_lstm_cell_matches_scalar_equations(rng):
    d, n = 3, 2
    x, h, c = rng.normal(size=(1, d)), rng.normal(size=(1, n)), rng.normal(size=(1, n))
    w, u, b = rng.normal(size=(d, 4 * n)), rng.normal(size=(n, 4 * n)), rng.normal(size=4 * n)
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    hn, cn = lstm_cell(x, h, c, w, u, b)
    for j in range(n):
        pre = [sum(x[0, p] * w[p, g * n + j] for p in range(d))
               + sum(h[0, q] * u[q, g * n + j] for q in range(n)) + b[g * n + j] for g in range(4)]
        i, f, g, o = sig(pre[0]), sig(pre[1]), np.tanh(pre[2]), sig(pre[3])
        c_ref = f * c[0, j] + i * g
        assert abs(cn[0, j] - c_ref) < 1e-12
        assert abs(hn[0, j] - o * np.tanh(c_ref)) < 1e-12


# --- layers ----------------------------------------------------------------

@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_single_step_equals_cell(cls, rng):
    layer = _layer(cls, 3, 4, 0, return_sequences=False)
    x = rng.normal(size=(2, 1, 3))
    y, _ = layer.forward(x)
    p = layer.params
    if cls is LSTM:
        ref, _ = lstm_cell(x[:, 0], np.zeros((2, 4)), np.zeros((2, 4)), p["W"], p["U"], p["b"])
    else:
        ref = gru_cell(x[:, 0], np.zeros((2, 4)), p["W"], p["U"], p["b"])
    np.testing.assert_allclose(y, ref, atol=1e-14)


@pytest.mark.parametrize("cls, kind", [(LSTM, "lstm"), (GRU, "gru")])
def test_layer_matches_unrolled_cells(cls, kind, rng):
    layer = _layer(cls, 3, 4, 1)
    x = rng.normal(size=(2, 6, 3))
    np.testing.assert_allclose(layer.forward(x)[0], _unroll_oracle(kind, x, layer.params), atol=1e-13)


@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_eval_mode_ignores_dropout(cls, rng):
    plain = _layer(cls, 3, 4, 2)
    dropped = _layer(cls, 3, 4, 2, p=0.6, recurrent_p=0.6)
    x = rng.normal(size=(2, 5, 3))
    assert np.array_equal(plain.forward(x)[0], dropped.forward(x, train=False, rng=Rng(0))[0])


@pytest.mark.parametrize("cls, kind", [(LSTM, "lstm"), (GRU, "gru")])
def test_dropout_masks_fixed_per_sequence(cls, kind, rng, monkeypatch):
    drawn = []
    real = recurrent.dropout_mask

    def spy(shape, p, r):
        m = real(shape, p, r)
        drawn.append(m)
        return m

    monkeypatch.setattr(recurrent, "dropout_mask", spy)
    layer = _layer(cls, 3, 4, 3, p=0.5, recurrent_p=0.4)
    x = rng.normal(size=(3, 6, 3))
    y, ctx = layer.forward(x, train=True, rng=Rng(7))
    # one input mask and one recurrent mask for the whole sequence, not one per step
    assert [m.shape for m in drawn] == [(3, 3), (3, 4)]
    mx, mh = drawn
    np.testing.assert_allclose(y, _unroll_oracle(kind, x, layer.params, mx, mh), atol=1e-13)
    # instrumented: every step's masked hidden input is the carried state times the same mask
    hm_all = ctx[3]
    states = np.concatenate([np.zeros((3, 1, 4)), y[:, :-1]], axis=1)
    np.testing.assert_allclose(hm_all, states * mh[:, None, :], atol=1e-15)


@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_causality_under_truncation(cls, rng):
    layer = _layer(cls, 3, 4, 4)
    x = rng.normal(size=(2, 6, 3))
    full = layer.forward(x)[0]
    for t in range(1, 6):
        np.testing.assert_allclose(layer.forward(x[:, :t])[0], full[:, :t], rtol=0, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 20.0))
def test_lstm_outputs_bounded(seed, scale):
    layer = _layer(LSTM, 3, 4, seed % 1000)
    for k in layer.params:
        layer.params[k] *= scale
    x = np.random.default_rng(seed).normal(scale=scale, size=(2, 6, 3))
    assert np.max(np.abs(layer.forward(x)[0])) <= 1.0


def test_rejects_wrong_feature_size():
    layer = _layer(LSTM, 3, 4, 0)
    with pytest.raises(DimensionError):
        layer.forward(np.zeros((1, 5, 2)))
    with pytest.raises(DimensionError):
        layer.forward(np.zeros((1, 0, 3)))


def test_recurrent_kernel_blocks_orthogonal():
    layer = _layer(LSTM, 3, 5, 0)
    u = layer.params["U"]
    for g in range(4):
        blk = u[:, g * 5 : (g + 1) * 5]
        np.testing.assert_allclose(blk.T @ blk, np.eye(5), atol=1e-12)


# --- BPTT ------------------------------------------------------------------

def _bptt_case(cls, seed, return_sequences, dropout):
    r = np.random.default_rng(seed)
    bsz, t, d, n = int(r.integers(1, 4)), int(r.integers(1, 7)), int(r.integers(1, 5)), int(r.integers(1, 5))
    p = 0.3 if dropout else 0.0
    layer = _layer(cls, d, n, seed, return_sequences=return_sequences, p=p, recurrent_p=p)
    x = r.normal(size=(bsz, t, d))
    out_shape = (bsz, t, n) if return_sequences else (bsz, n)
    proj = r.normal(size=out_shape)

    def loss():
        return float(np.sum(layer.forward(x, train=True, rng=Rng(seed))[0] * proj))

    _, ctx = layer.forward(x, train=True, rng=Rng(seed))
    gx, grads = layer.backward(proj, ctx)
    errs = {"x": max_rel_error(gx, numeric_grad(loss, x))}
    for name, arr in layer.params.items():
        errs[name] = max_rel_error(grads[name], numeric_grad(loss, arr))
    return errs


@pytest.mark.parametrize("cls", [LSTM, GRU])
@pytest.mark.parametrize("seed", range(12))
def test_bptt_matches_finite_differences(cls, seed):
    errs = _bptt_case(cls, seed, return_sequences=bool(seed % 2), dropout=seed % 3 != 0)
    assert max(errs.values()) < BPTT_TOL, errs


@pytest.mark.parametrize("cls", [LSTM, GRU])
def test_bptt_length_five_three_units(cls):
    r = np.random.default_rng(11)
    layer = _layer(cls, 2, 3, 11)
    x = r.normal(size=(2, 5, 2))
    proj = r.normal(size=(2, 5, 3))
    loss = lambda: float(np.sum(layer.forward(x)[0] * proj))
    gx, grads = layer.backward(proj, layer.forward(x)[1])
    assert max_rel_error(gx, numeric_grad(loss, x)) < BPTT_TOL
    for name, arr in layer.params.items():
        assert max_rel_error(grads[name], numeric_grad(loss, arr)) < BPTT_TOL


def test_gradient_does_not_flow_backwards_in_time(rng):
    layer = _layer(GRU, 2, 3, 5)
    x = rng.normal(size=(1, 6, 2))
    grad = np.zeros((1, 6, 3))
    grad[:, 2] = 1.0
    gx, _ = layer.backward(grad, layer.forward(x)[1])
    assert np.all(gx[:, 3:] == 0.0)
    assert np.any(gx[:, :3] != 0.0)


# --- stacks ----------------------------------------------------------------

def test_stacked_shape_chain():
    model = Model(build_stacked("lstm", n_steps=50), seed=0)
    x = np.random.default_rng(0).normal(size=(2, 22, 50))
    h = x
    shapes = []
    for layer in model.layers:
        h, _ = layer.forward(h)
        shapes.append(h.shape)
    assert shapes[1:4] == [(2, 50, 200), (2, 50, 100), (2, 50, 50)]
    assert shapes[-1] == (2, 4)
