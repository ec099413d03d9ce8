"""LSTM and GRU layers with backpropagation through time.

Gate blocks are stored concatenated along the last axis:
LSTM ``[i | f | g | o]``, GRU ``[z | r | h]``, so ``W`` is [D, G*U],
``U`` is [U, G*U] and ``b`` is [G*U].

Dropout is variational: one input mask [B, D] and one recurrent mask
[B, U] are drawn per sequence and reused at every time step.  The
recurrent mask applies to the hidden state where it enters the gate
pre-activations; the carried state itself is never masked.
"""

from dataclasses import dataclass

import numpy as np

from .layers import Layer, dropout_mask, glorot_uniform, sigmoid
from .tensor import DimensionError


@dataclass
class RecurrentDropoutSpec:
    p: float = 0.0
    recurrent_p: float = 0.0


def lstm_cell(x_t, h, c, w, u, b):
    """One LSTM step; returns ``(h', c')``."""
    n = h.shape[1]
    a = x_t @ w + h @ u + b
    i = sigmoid(a[:, :n])
    f = sigmoid(a[:, n : 2 * n])
    g = np.tanh(a[:, 2 * n : 3 * n])
    o = sigmoid(a[:, 3 * n :])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def gru_cell(x_t, h, w, u, b):
    """One GRU step, ``h' = (1 - z) * h + z * h_tilde``."""
    n = h.shape[1]
    ax = x_t @ w + b
    ah = h @ u[:, : 2 * n]
    z = sigmoid(ax[:, :n] + ah[:, :n])
    r = sigmoid(ax[:, n : 2 * n] + ah[:, n:])
    h_tilde = np.tanh(ax[:, 2 * n :] + (r * h) @ u[:, 2 * n :])
    return (1.0 - z) * h + z * h_tilde


def _orthogonal(rng, n, cols):
    """Orthogonal init for the recurrent kernel, one orthogonal block per gate."""
    blocks = []
    for _ in range(cols // n):
        q, r = np.linalg.qr(rng.normal(size=(n, n)))
        blocks.append(q * np.sign(np.diag(r)))
    return np.concatenate(blocks, axis=1)


class _Recurrent(Layer):
    gates = 0

    def __init__(self, units, return_sequences=True, p=0.0, recurrent_p=0.0):
        super().__init__()
        self.units = units
        self.return_sequences = return_sequences
        self.drop = RecurrentDropoutSpec(p, recurrent_p)

    def init_params(self, rng, in_shape):
        t, d = in_shape
        g = self.gates * self.units
        self.params = {
            "W": glorot_uniform(rng, (d, g), d, g),
            "U": _orthogonal(rng, self.units, g),
            "b": np.zeros(g),
        }
        return (t, self.units) if self.return_sequences else (self.units,)

    def config(self):
        return {
            "units": self.units,
            "return_sequences": self.return_sequences,
            "p": self.drop.p,
            "recurrent_p": self.drop.recurrent_p,
        }

    def _masks(self, bsz, d, train, rng):
        if not train:
            return None, None
        mx = dropout_mask((bsz, d), self.drop.p, rng) if self.drop.p else None
        mh = dropout_mask((bsz, self.units), self.drop.recurrent_p, rng) if self.drop.recurrent_p else None
        return mx, mh

    def _check(self, x):
        if x.ndim != 3 or x.shape[2] != self.params["W"].shape[0]:
            raise DimensionError(
                f"{self.kind}: input {x.shape} does not match input size {self.params['W'].shape[0]}"
            )
        if x.shape[1] < 1:
            raise DimensionError(f"{self.kind}: empty sequence")

    def _seq_grad(self, grad, t):
        if self.return_sequences:
            return grad
        full = np.zeros((grad.shape[0], t, grad.shape[1]))
        full[:, -1] = grad
        return full


class LSTM(_Recurrent):
    kind = "lstm"
    gates = 4

    def forward(self, x, train=False, rng=None):
        self._check(x)
        w, u, b = self.params["W"], self.params["U"], self.params["b"]
        bsz, t, d = x.shape
        n = self.units
        mx, mh = self._masks(bsz, d, train, rng)
        xin = x if mx is None else x * mx[:, None, :]
        ax = xin @ w + b  # [B, T, 4U]
        h = np.zeros((bsz, n))
        c = np.zeros((bsz, n))
        hs = np.empty((bsz, t, n))
        cs = np.empty((bsz, t + 1, n))
        hm_all = np.empty((bsz, t, n))
        gates = np.empty((bsz, t, 4 * n))
        cs[:, 0] = c
        for s in range(t):
            hm = h if mh is None else h * mh
            a = ax[:, s] + hm @ u
            gi = sigmoid(a[:, :n])
            gf = sigmoid(a[:, n : 2 * n])
            gg = np.tanh(a[:, 2 * n : 3 * n])
            go = sigmoid(a[:, 3 * n :])
            c = gf * c + gi * gg
            h = go * np.tanh(c)
            hm_all[:, s] = hm
            gates[:, s] = np.concatenate([gi, gf, gg, go], axis=1)
            cs[:, s + 1] = c
            hs[:, s] = h
        out = hs if self.return_sequences else hs[:, -1].copy()
        return out, (xin, mx, mh, hm_all, gates, cs)

    def backward(self, grad, ctx):
        xin, mx, mh, hm_all, gates, cs = ctx
        w, u = self.params["W"], self.params["U"]
        bsz, t, _ = xin.shape
        n = self.units
        gy = self._seq_grad(grad, t)
        da_all = np.empty((bsz, t, 4 * n))
        dh_next = np.zeros((bsz, n))
        dc_next = np.zeros((bsz, n))
        for s in range(t - 1, -1, -1):
            gi, gf, gg, go = np.split(gates[:, s], 4, axis=1)
            tc = np.tanh(cs[:, s + 1])
            dh = gy[:, s] + dh_next
            dc = dc_next + dh * go * (1.0 - tc * tc)
            da = np.concatenate([
                dc * gg * gi * (1.0 - gi),
                dc * cs[:, s] * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ], axis=1)
            da_all[:, s] = da
            dc_next = dc * gf
            dhm = da @ u.T
            dh_next = dhm if mh is None else dhm * mh
        grads = {
            "W": np.tensordot(xin, da_all, axes=([0, 1], [0, 1])),
            "U": np.tensordot(hm_all, da_all, axes=([0, 1], [0, 1])),
            "b": da_all.sum(axis=(0, 1)),
        }
        dx = da_all @ w.T
        if mx is not None:
            dx = dx * mx[:, None, :]
        return dx, grads


class GRU(_Recurrent):
    kind = "gru"
    gates = 3

    def forward(self, x, train=False, rng=None):
        self._check(x)
        w, u, b = self.params["W"], self.params["U"], self.params["b"]
        bsz, t, d = x.shape
        n = self.units
        mx, mh = self._masks(bsz, d, train, rng)
        xin = x if mx is None else x * mx[:, None, :]
        ax = xin @ w + b  # [B, T, 3U]
        u_zr, u_h = u[:, : 2 * n], u[:, 2 * n :]
        h = np.zeros((bsz, n))
        hs = np.empty((bsz, t + 1, n))
        hm_all = np.empty((bsz, t, n))
        gates = np.empty((bsz, t, 3 * n))
        hs[:, 0] = h
        for s in range(t):
            hm = h if mh is None else h * mh
            azr = ax[:, s, : 2 * n] + hm @ u_zr
            z = sigmoid(azr[:, :n])
            r = sigmoid(azr[:, n:])
            ht = np.tanh(ax[:, s, 2 * n :] + (r * hm) @ u_h)
            h = (1.0 - z) * h + z * ht
            hm_all[:, s] = hm
            gates[:, s] = np.concatenate([z, r, ht], axis=1)
            hs[:, s + 1] = h
        seq = hs[:, 1:]
        out = np.ascontiguousarray(seq) if self.return_sequences else hs[:, -1].copy()
        return out, (xin, mx, mh, hm_all, gates, hs)

    def backward(self, grad, ctx):
        xin, mx, mh, hm_all, gates, hs = ctx
        w, u = self.params["W"], self.params["U"]
        n = self.units
        u_zr, u_h = u[:, : 2 * n], u[:, 2 * n :]
        bsz, t, _ = xin.shape
        gy = self._seq_grad(grad, t)
        da_all = np.empty((bsz, t, 3 * n))
        d_uh = np.zeros_like(u_h)
        dh_next = np.zeros((bsz, n))
        for s in range(t - 1, -1, -1):
            z, r, ht = np.split(gates[:, s], 3, axis=1)
            h_prev = hs[:, s]
            hm = hm_all[:, s]
            dh = gy[:, s] + dh_next
            dah = dh * z * (1.0 - ht * ht)
            daz = dh * (ht - h_prev) * z * (1.0 - z)
            drh = dah @ u_h.T
            dar = drh * hm * r * (1.0 - r)
            d_uh += (r * hm).T @ dah
            dazr = np.concatenate([daz, dar], axis=1)
            dhm = drh * r + dazr @ u_zr.T
            dh_next = dh * (1.0 - z) + (dhm if mh is None else dhm * mh)
            da_all[:, s] = np.concatenate([daz, dar, dah], axis=1)
        d_uzr = np.tensordot(hm_all, da_all[:, :, : 2 * n], axes=([0, 1], [0, 1]))
        grads = {
            "W": np.tensordot(xin, da_all, axes=([0, 1], [0, 1])),
            "U": np.concatenate([d_uzr, d_uh], axis=1),
            "b": da_all.sum(axis=(0, 1)),
        }
        dx = da_all @ w.T
        if mx is not None:
            dx = dx * mx[:, None, :]
        return dx, grads
