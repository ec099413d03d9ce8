"""Declarative builders for the four architectures and the model runtime.

A :class:`ModelSpec` is a plain list of :class:`LayerSpec` entries; a
:class:`Model` instantiates it, initializes parameters from a seed, and
threads forward contexts back through ``backward``.
"""

from dataclasses import asdict, dataclass, field
import itertools
import json
from pathlib import Path

import numpy as np

from .data import N_CHANNELS, N_CLASSES, ConfigError
from .layers import (
    BatchNorm, Conv1d, Dense, Dropout, Flatten, LastStep, MaxPool1d, ReLU,
    Sigmoid, SwapTimeFeature, Tanh,
)
from .npyio import read_npy, write_npy
from .recurrent import GRU, LSTM
from .tensor import Rng

LAYER_TYPES = {
    cls.kind: cls
    for cls in (Conv1d, MaxPool1d, BatchNorm, Dropout, Dense, ReLU, Tanh, Sigmoid,
                Flatten, SwapTimeFeature, LastStep, LSTM, GRU)
}

CNN_GRID = {
    "filter_num": (30, 20, 10),
    "filter_size": (28, 20, 12, 4),
    "pool_size": (4, 2),
    "batch_size": (200, 100, 50),
    "lr": (1e-3, 5e-4, 1e-4),
}
CNN_STRIDE = 4
STACKED_UNITS = (200, 100, 50)
STACKED_DROPOUT = (0.6, 0.5, 0.4)
MIXED_DEFAULT_UNITS = {1: (50,), 2: (30, 20), 3: (20, 15, 15)}
DOWNSAMPLE_SIZES = (25, 50, 100, 200, 400, 600, 800)


@dataclass
class LayerSpec:
    kind: str
    options: dict = field(default_factory=dict)


@dataclass
class ModelSpec:
    name: str
    layers: list
    input_shape: tuple
    n_classes: int = N_CLASSES

    def to_json(self):
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_json(cls, d):
        return cls(
            name=d["name"],
            layers=[LayerSpec(l["kind"], dict(l["options"])) for l in d["layers"]],
            input_shape=tuple(d["input_shape"]),
            n_classes=d.get("n_classes", N_CLASSES),
        )

    def kinds(self):
        return [l.kind for l in self.layers]


@dataclass
class CnnHyper:
    filter_num: int = 30
    filter_size: int = 28
    pool_size: int = 4
    batch_size: int = 50
    lr: float = 1e-3

    def on_grid(self):
        return all(getattr(self, k) in v for k, v in CNN_GRID.items())

    def label(self):
        return f"CNN_{self.filter_num}_{self.filter_size}"


def cnn_grid(restrict=None):
    """All CnnHyper points of the search grid, optionally with some axes overridden."""
    axes = dict(CNN_GRID)
    axes.update(restrict or {})
    keys = list(axes)
    return [CnnHyper(**dict(zip(keys, combo))) for combo in itertools.product(*(axes[k] for k in keys))]


@dataclass
class MixedSpec:
    lstm_layers: int = 2
    units: tuple = None
    filter_num: int = 40
    filter_size: int = 20
    stride: int = 4
    pool_size: int = 4

    def __post_init__(self):
        if self.units is None:
            if self.lstm_layers not in MIXED_DEFAULT_UNITS:
                raise ConfigError(f"no default units for {self.lstm_layers} LSTM layers")
            self.units = MIXED_DEFAULT_UNITS[self.lstm_layers]
        self.units = tuple(self.units)
        if len(self.units) != self.lstm_layers:
            raise ConfigError(
                f"units {self.units} has {len(self.units)} entries for {self.lstm_layers} LSTM layers"
            )


def build_cnn(h, n_samples=1000, n_channels=N_CHANNELS, dense_units=20, dropout=0.5):
    layers = [
        LayerSpec("conv1d", {"filter_num": h.filter_num, "filter_size": h.filter_size, "stride": CNN_STRIDE}),
        LayerSpec("batchnorm", {"axis": 1}),
        LayerSpec("relu"),
        LayerSpec("dropout", {"p": dropout}),
        LayerSpec("maxpool1d", {"pool_size": h.pool_size, "stride": h.pool_size}),
        LayerSpec("flatten"),
        LayerSpec("dense", {"units": dense_units}),
        LayerSpec("relu"),
        LayerSpec("dense", {"units": N_CLASSES}),
    ]
    return ModelSpec(h.label(), layers, (n_channels, n_samples))


def build_stacked(kind, n_steps=50, n_channels=N_CHANNELS, units=STACKED_UNITS,
                  dropouts=STACKED_DROPOUT, head_units=100, head_dropout=0.5):
    """Three stacked recurrent layers then a dense / batchnorm / relu / dropout head.

    The head reads the last time step of the final (sequence-returning) layer.
    """
    if kind not in ("lstm", "gru"):
        raise ConfigError(f"recurrent kind must be 'lstm' or 'gru', got {kind!r}")
    if len(units) != len(dropouts):
        raise ConfigError("units and dropouts must have the same length")
    layers = [LayerSpec("swap")]
    for u, p in zip(units, dropouts):
        layers.append(LayerSpec(kind, {"units": u, "return_sequences": True, "p": p, "recurrent_p": p}))
    layers += [
        LayerSpec("last_step"),
        LayerSpec("dense", {"units": head_units}),
        LayerSpec("batchnorm", {"axis": 1}),
        LayerSpec("relu"),
        LayerSpec("dropout", {"p": head_dropout}),
        LayerSpec("dense", {"units": N_CLASSES}),
    ]
    return ModelSpec(f"{kind.upper()}_t{n_steps}", layers, (n_channels, n_steps))


def build_mixed(s, n_samples=1000, n_channels=N_CHANNELS, dropout=0.5):
    """Conv decoder whose filter maps become per-step features of an LSTM stack."""
    layers = [
        LayerSpec("conv1d", {"filter_num": s.filter_num, "filter_size": s.filter_size, "stride": s.stride}),
        LayerSpec("batchnorm", {"axis": 1}),
        LayerSpec("relu"),
        LayerSpec("dropout", {"p": dropout}),
        LayerSpec("maxpool1d", {"pool_size": s.pool_size, "stride": s.pool_size}),
        LayerSpec("swap"),
    ]
    for i, u in enumerate(s.units):
        last = i == len(s.units) - 1
        layers.append(LayerSpec("lstm", {
            "units": u, "return_sequences": True, "p": dropout, "recurrent_p": dropout if last else 0.0,
        }))
        layers.append(LayerSpec("batchnorm", {"axis": -1}))
    layers += [LayerSpec("flatten"), LayerSpec("dense", {"units": N_CLASSES})]
    name = f"MixLSTM_{s.lstm_layers}"
    if s.units != MIXED_DEFAULT_UNITS.get(s.lstm_layers):
        name += f", units_num in LSTM = ({','.join(map(str, s.units))})"
    return ModelSpec(name, layers, (n_channels, n_samples))


class Model:
    """Parameters plus layer stack for one ModelSpec."""

    def __init__(self, spec, seed=0):
        self.spec = spec
        self.layers = []
        self.params = {}
        self.buffers = {}
        rng = Rng(seed)
        shape = tuple(spec.input_shape)
        for i, ls in enumerate(spec.layers):
            layer = LAYER_TYPES[ls.kind](**ls.options)
            shape = layer.init_params(rng, shape)
            self.layers.append(layer)
            for name, arr in layer.params.items():
                self.params[f"{i}.{ls.kind}.{name}"] = arr
            for name, arr in layer.buffers.items():
                self.buffers[f"{i}.{ls.kind}.{name}"] = arr
        self.output_shape = shape
        if shape != (spec.n_classes,):
            raise ConfigError(f"{spec.name}: final output shape {shape}, expected ({spec.n_classes},)")

    def forward(self, x, train=False, rng=None):
        ctxs = []
        for layer in self.layers:
            x, ctx = layer.forward(x, train=train, rng=rng)
            ctxs.append(ctx)
        return x, ctxs

    def backward(self, grad, ctxs):
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            grad, g = layer.backward(grad, ctxs[i])
            prefix = f"{i}.{layer.kind}."
            for name, arr in g.items():
                grads[prefix + name] = arr
        return grads

    def predict(self, x, batch_size=256):
        """Eval-mode logits, computed in chunks."""
        out = [self.forward(x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0, self.spec.n_classes))
        return np.concatenate(out, axis=0)

    def param_count(self):
        return int(sum(p.size for p in self.params.values()))

    def state(self):
        """Deep copy of parameters and buffers."""
        return {k: v.copy() for k, v in itertools.chain(self.params.items(), self.buffers.items())}

    def load_state(self, state):
        for k, v in itertools.chain(self.params.items(), self.buffers.items()):
            v[...] = state[k]

    def save(self, directory):
        """Checkpoint directory: one NPY per tensor plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for group, tensors in (("param", self.params), ("buffer", self.buffers)):
            for k, v in tensors.items():
                fname = k.replace(".", "_") + ".npy"
                write_npy(v, directory / fname)
                entries.append({"name": k, "group": group, "file": fname, "shape": list(v.shape)})
        manifest = {"spec": self.spec.to_json(), "tensors": entries}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        model = cls(ModelSpec.from_json(manifest["spec"]))
        model.load_state({e["name"]: read_npy(directory / e["file"]) for e in manifest["tensors"]})
        return model
