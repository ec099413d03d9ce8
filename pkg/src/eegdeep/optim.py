"""Softmax cross-entropy, Adam / RMSProp, and a finite-difference gradient checker."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Rng


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    bsz, k = logits.shape
    if labels.shape != (bsz,):
        raise ValueError(f"{bsz} logit rows but labels shape {labels.shape}")
    if bsz and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in 0..{k - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(bsz)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / bsz


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` (dicts keyed alike)."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RMSProp:
    def __init__(self, lr=1e-3, rho=0.9, eps=1e-7):
        self.lr, self.rho, self.eps = lr, rho, eps
        self.v = {}

    def step(self, params, grads):
        for name, g in grads.items():
            if name not in self.v:
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            v *= self.rho
            v += (1.0 - self.rho) * (g * g)
            params[name] -= self.lr * g / (np.sqrt(v) + self.eps)


def make_optimizer(name, lr):
    if name == "adam":
        return Adam(lr)
    if name == "rmsprop":
        return RMSProp(lr)
    raise ValueError(f"unknown optimizer {name!r}")


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.tol


def relative_error(a, n, floor=1e-8):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(model, x, y, h=1e-5, tol=1e-4, max_coords=200, seed=0, train=True, floor=1e-6):
    """Compare backprop gradients of the batch loss with central differences.

    Every forward pass reuses the same dropout seed, so the loss is a fixed
    smooth function of the parameters.  Up to ``max_coords`` coordinates
    per parameter tensor are sampled.  Returns the max relative error per
    tensor.

    ``floor`` bounds the relative-error denominator from below.  Central
    differences of an O(1) loss carry ~1e-11 of roundoff, so exactly-zero
    gradients (a bias feeding train-mode batchnorm) need a floor well above
    1e-8 to read as agreement.
    """
    def loss_at():
        logits, _ = model.forward(x, train=train, rng=Rng(seed))
        return softmax_xent(logits, y)[0]

    logits, ctxs = model.forward(x, train=train, rng=Rng(seed))
    _, g = softmax_xent(logits, y)
    grads = model.backward(g, ctxs)
    pick = Rng(seed + 1)
    report = GradCheckReport(tol=tol)
    for name, p in model.params.items():
        flat = p.reshape(-1)
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.asarray(pick.permutation(flat.size)[:max_coords])
        analytic = grads[name].reshape(-1)[coords]
        numeric = np.empty(len(coords))
        for j, idx in enumerate(coords):
            old = flat[idx]
            flat[idx] = old + h
            up = loss_at()
            flat[idx] = old - h
            down = loss_at()
            flat[idx] = old
            numeric[j] = (up - down) / (2.0 * h)
        report.errors[name] = float(relative_error(analytic, numeric, floor).max(initial=0.0))
    return report
