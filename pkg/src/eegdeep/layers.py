"""Feed-forward layers with explicit forward and backward passes.

Each kernel is a pair of free functions: ``*_forward`` returns the output
and a context holding what the backward pass needs; ``*_backward`` maps the
upstream gradient and that context to the input gradient plus parameter
gradients.  The ``Layer`` classes below bind parameters to the kernels so
models can be composed as plain lists.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import ConfigError
from .tensor import DimensionError


# --- kernels ---------------------------------------------------------------

def conv_output_length(t, filter_size, stride):
    return (t - filter_size) // stride + 1


def conv1d_forward(x, weight, bias, stride):
    """Valid cross-correlation of ``x`` [B, C, T] with ``weight`` [F, C, K]."""
    b, c, t = x.shape
    f, wc, k = weight.shape
    if wc != c:
        raise DimensionError(f"conv1d: input has {c} channels, weight expects {wc}")
    if t < k:
        raise DimensionError(f"conv1d: sequence length {t} shorter than filter size {k}")
    win = sliding_window_view(x, k, axis=2)[:, :, ::stride]  # [B, C, L, K]
    y = np.tensordot(win, weight, axes=([1, 3], [1, 2]))  # [B, L, F]
    y = y.transpose(0, 2, 1) + bias[None, :, None]
    return np.ascontiguousarray(y), (x.shape, win, weight, stride)


def conv1d_backward(grad_out, ctx):
    x_shape, win, weight, stride = ctx
    if grad_out.shape[:2] != (x_shape[0], weight.shape[0]) or grad_out.shape[2] != win.shape[2]:
        raise DimensionError(f"conv1d backward: gradient shape {grad_out.shape} does not match forward")
    l = grad_out.shape[2]
    k = weight.shape[2]
    grad_b = grad_out.sum(axis=(0, 2))
    grad_w = np.tensordot(grad_out, win, axes=([0, 2], [0, 2]))  # [F, C, K]
    dwin = np.tensordot(grad_out, weight, axes=([1], [0]))  # [B, L, C, K]
    grad_x = np.zeros(x_shape)
    span = stride * (l - 1) + 1
    for j in range(k):
        grad_x[:, :, j : j + span : stride] += dwin[:, :, :, j].transpose(0, 2, 1)
    return grad_x, grad_w, grad_b


def maxpool1d_forward(x, pool_size, stride):
    if x.shape[-1] < pool_size:
        raise DimensionError(f"maxpool: length {x.shape[-1]} shorter than pool size {pool_size}")
    win = sliding_window_view(x, pool_size, axis=-1)[..., ::stride, :]
    arg = win.argmax(axis=-1)  # first maximum wins ties
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, (x.shape, arg, stride)


def maxpool1d_backward(grad_out, ctx):
    x_shape, arg, stride = ctx
    grad_x = np.zeros(x_shape)
    l = arg.shape[-1]
    span = stride * (l - 1) + 1
    for j in range(int(arg.max(initial=0)) + 1):
        grad_x[..., j : j + span : stride] += np.where(arg == j, grad_out, 0.0)
    return grad_x


def _bn_axes(ndim, axis):
    axis = axis % ndim
    return tuple(a for a in range(ndim) if a != axis), axis


def _bn_view(v, ndim, axis):
    shape = [1] * ndim
    shape[axis] = -1
    return v.reshape(shape)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train,
                      axis=1, momentum=0.1, eps=1e-5):
    """Per-feature normalization; statistics pool over every axis except ``axis``.

    Uses the biased (population) variance both for normalizing and for the
    running estimate.  In train mode ``running_mean`` / ``running_var`` are
    updated in place.
    """
    red, axis = _bn_axes(x.ndim, axis)
    if train:
        if x.shape[0] < 2:
            raise ConfigError("batchnorm in train mode needs a batch of at least 2")
        mu = x.mean(axis=red)
        var = x.var(axis=red)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_view(mu, x.ndim, axis)) * _bn_view(inv_std, x.ndim, axis)
    y = xhat * _bn_view(gamma, x.ndim, axis) + _bn_view(beta, x.ndim, axis)
    return y, (xhat, inv_std, gamma, axis, red, train)


def batchnorm_backward(grad_out, ctx):
    xhat, inv_std, gamma, axis, red, train = ctx
    nd = grad_out.ndim
    grad_gamma = (grad_out * xhat).sum(axis=red)
    grad_beta = grad_out.sum(axis=red)
    dxhat = grad_out * _bn_view(gamma, nd, axis)
    if not train:
        return dxhat * _bn_view(inv_std, nd, axis), grad_gamma, grad_beta
    m = grad_out.size // grad_out.shape[axis]
    s1 = _bn_view(dxhat.sum(axis=red), nd, axis)
    s2 = _bn_view((dxhat * xhat).sum(axis=red), nd, axis)
    grad_x = _bn_view(inv_std, nd, axis) / m * (m * dxhat - s1 - xhat * s2)
    return grad_x, grad_gamma, grad_beta


def dropout_mask(shape, p, rng):
    """Inverted-dropout mask: 0 with probability ``p``, else ``1 / (1 - p)``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability {p} outside [0, 1)")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def dropout_forward(x, p, rng, train):
    if not train or p == 0.0:
        return x, None
    mask = dropout_mask(x.shape, p, rng)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask


def dense_forward(x, weight, bias):
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense: input {x.shape} does not match weight {weight.shape}")
    return x @ weight + bias, x


def dense_backward(grad_out, x, weight):
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_backward(grad_out, y):
    return grad_out * y * (1.0 - y)


def tanh_backward(grad_out, y):
    return grad_out * (1.0 - y * y)


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# --- layer objects ---------------------------------------------------------

class Layer:
    """Base layer: no parameters, identity shapes."""

    kind = "layer"

    def __init__(self):
        self.params = {}
        self.buffers = {}

    def init_params(self, rng, in_shape):
        """Allocate parameters for a per-sample input shape; return the output shape."""
        return in_shape

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad, ctx):
        raise NotImplementedError

    def config(self):
        return {}


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, filter_num, filter_size, stride=1):
        super().__init__()
        self.filter_num, self.filter_size, self.stride = filter_num, filter_size, stride

    def init_params(self, rng, in_shape):
        c, t = in_shape
        f, k = self.filter_num, self.filter_size
        if t < k:
            raise DimensionError(f"conv1d: sequence length {t} shorter than filter size {k}")
        self.params = {
            "weight": glorot_uniform(rng, (f, c, k), c * k, f * k),
            "bias": np.zeros(f),
        }
        return (f, conv_output_length(t, k, self.stride))

    def forward(self, x, train=False, rng=None):
        return conv1d_forward(x, self.params["weight"], self.params["bias"], self.stride)

    def backward(self, grad, ctx):
        gx, gw, gb = conv1d_backward(grad, ctx)
        return gx, {"weight": gw, "bias": gb}

    def config(self):
        return {"filter_num": self.filter_num, "filter_size": self.filter_size, "stride": self.stride}


class MaxPool1d(Layer):
    kind = "maxpool1d"

    def __init__(self, pool_size, stride=None):
        super().__init__()
        self.pool_size = pool_size
        self.stride = pool_size if stride is None else stride

    def init_params(self, rng, in_shape):
        *lead, l = in_shape
        if l < self.pool_size:
            raise DimensionError(f"maxpool: length {l} shorter than pool size {self.pool_size}")
        return (*lead, conv_output_length(l, self.pool_size, self.stride))

    def forward(self, x, train=False, rng=None):
        return maxpool1d_forward(x, self.pool_size, self.stride)

    def backward(self, grad, ctx):
        return maxpool1d_backward(grad, ctx), {}

    def config(self):
        return {"pool_size": self.pool_size, "stride": self.stride}


class BatchNorm(Layer):
    """Batch normalization over feature axis ``axis`` (1 for [B,F] and [B,F,L],
    -1 for sequences [B,T,U])."""

    kind = "batchnorm"

    def __init__(self, axis=1, momentum=0.1, eps=1e-5):
        super().__init__()
        self.axis, self.momentum, self.eps = axis, momentum, eps

    def init_params(self, rng, in_shape):
        n = in_shape[self.axis - 1] if self.axis > 0 else in_shape[self.axis]
        self.params = {"gamma": np.ones(n), "beta": np.zeros(n)}
        self.buffers = {"running_mean": np.zeros(n), "running_var": np.ones(n)}
        return in_shape

    def forward(self, x, train=False, rng=None):
        return batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"],
            train, self.axis, self.momentum, self.eps,
        )

    def backward(self, grad, ctx):
        gx, gg, gb = batchnorm_backward(grad, ctx)
        return gx, {"gamma": gg, "beta": gb}

    def config(self):
        return {"axis": self.axis, "momentum": self.momentum, "eps": self.eps}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, p):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout probability {p} outside [0, 1)")
        self.p = p

    def forward(self, x, train=False, rng=None):
        return dropout_forward(x, self.p, rng, train)

    def backward(self, grad, ctx):
        return dropout_backward(grad, ctx), {}

    def config(self):
        return {"p": self.p}


class Dense(Layer):
    kind = "dense"

    def __init__(self, units):
        super().__init__()
        self.units = units

    def init_params(self, rng, in_shape):
        (d,) = in_shape
        self.params = {
            "weight": glorot_uniform(rng, (d, self.units), d, self.units),
            "bias": np.zeros(self.units),
        }
        return (self.units,)

    def forward(self, x, train=False, rng=None):
        return dense_forward(x, self.params["weight"], self.params["bias"])

    def backward(self, grad, ctx):
        gx, gw, gb = dense_backward(grad, ctx, self.params["weight"])
        return gx, {"weight": gw, "bias": gb}

    def config(self):
        return {"units": self.units}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        return relu(x), x

    def backward(self, grad, ctx):
        return relu_backward(grad, ctx), {}


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, train=False, rng=None):
        y = np.tanh(x)
        return y, y

    def backward(self, grad, ctx):
        return tanh_backward(grad, ctx), {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train=False, rng=None):
        y = sigmoid(x)
        return y, y

    def backward(self, grad, ctx):
        return sigmoid_backward(grad, ctx), {}


class Flatten(Layer):
    kind = "flatten"

    def init_params(self, rng, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad, ctx):
        return grad.reshape(ctx), {}


class SwapTimeFeature(Layer):
    """[B, F, L] <-> [B, L, F]: channels become per-step features for recurrent layers."""

    kind = "swap"

    def init_params(self, rng, in_shape):
        a, b = in_shape
        return (b, a)

    def forward(self, x, train=False, rng=None):
        return np.ascontiguousarray(x.transpose(0, 2, 1)), None

    def backward(self, grad, ctx):
        return np.ascontiguousarray(grad.transpose(0, 2, 1)), {}


class LastStep(Layer):
    """[B, T, U] -> [B, U], keeping the final time step."""

    kind = "last_step"

    def init_params(self, rng, in_shape):
        return (in_shape[-1],)

    def forward(self, x, train=False, rng=None):
        return x[:, -1, :].copy(), x.shape

    def backward(self, grad, ctx):
        gx = np.zeros(ctx)
        gx[:, -1, :] = grad
        return gx, {}
