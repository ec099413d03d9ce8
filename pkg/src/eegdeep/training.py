"""Mini-batch training with snapshot-best early stopping, grid search and
the per-subject study."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math

import numpy as np

from .data import ConfigError, N_SUBJECTS, SplitSpec, split
from .models import Model, build_cnn, cnn_grid
from .optim import make_optimizer, softmax_xent
from .tensor import Rng


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 50
    lr: float = 1e-3
    optimizer: str = "adam"
    validation: str = "fixed"  # or "implicit"
    val_fraction: float = 0.1
    early_stop: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "rmsprop"):
            raise ConfigError(f"optimizer must be 'adam' or 'rmsprop', got {self.optimizer!r}")
        if self.validation not in ("fixed", "implicit"):
            raise ConfigError(f"validation must be 'fixed' or 'implicit', got {self.validation!r}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction {self.val_fraction} outside (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")


@dataclass
class RunRecord:
    name: str
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    best_state: dict = field(default=None, repr=False)
    val_indices: list = field(default_factory=list, repr=False)
    train_indices: list = field(default_factory=list, repr=False)

    @property
    def best_train_accuracy(self):
        return self.train_acc[self.best_epoch - 1] if self.best_epoch else float("nan")


def evaluate(model, ts):
    """Fraction of trials whose argmax logit (lowest index on ties) is the label."""
    if len(ts) == 0:
        return float("nan")
    pred = np.argmax(model.predict(ts.x), axis=1)
    return float(np.mean(pred == ts.y))


def _batches(order, batch_size):
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # a lone trailing trial cannot be batch-normalized; fold it into the previous batch
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _n_held_out(n, cfg):
    """Trials held out per epoch from an ``n``-trial pool (implicit validation only)."""
    if cfg.validation != "implicit":
        return 0
    return min(n - 1, max(1, round(cfg.val_fraction * n)))


def train(model, train_set, val_set, test_set, cfg, evaluator=evaluate):
    """Fit ``model`` in place and return its history.

    With ``cfg.early_stop`` the parameters from the epoch with the highest
    validation accuracy (earliest on ties) are restored before testing.
    In implicit-validation mode each epoch holds out a fresh random
    ``val_fraction`` of the training pool and ``val_set`` is ignored.
    """
    n = len(train_set)
    if n == 0:
        raise TrainingError("empty training set")
    n_val = _n_held_out(n, cfg)
    if cfg.batch_size > n - n_val:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds the {n - n_val} trials fitted per epoch")
    rng = Rng(cfg.seed)
    order_rng, drop_rng = rng.spawn(1), rng.spawn(2)
    opt = make_optimizer(cfg.optimizer, cfg.lr)
    record = RunRecord(model.spec.name)
    best = -math.inf

    for epoch in range(1, cfg.epochs + 1):
        perm = np.asarray(order_rng.permutation(n), dtype=np.int64)
        if cfg.validation == "implicit":
            val_idx, fit_idx = perm[:n_val], perm[n_val:]
            epoch_val = train_set.take(val_idx)
            record.val_indices.append(val_idx)
            record.train_indices.append(fit_idx)
        else:
            fit_idx, epoch_val = perm, val_set
        fit_set = train_set.take(fit_idx)

        total = 0.0
        for b, idx in enumerate(_batches(np.arange(len(fit_idx)), cfg.batch_size), start=1):
            logits, ctxs = model.forward(fit_set.x[idx], train=True, rng=drop_rng)
            loss, grad = softmax_xent(logits, fit_set.y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            opt.step(model.params, model.backward(grad, ctxs))
            total += loss * len(idx)

        record.train_loss.append(total / len(fit_idx))
        record.train_acc.append(evaluator(model, fit_set))
        val = evaluator(model, epoch_val)
        record.val_acc.append(val)
        # strict improvement keeps the earlier epoch on ties; without any
        # validation data the latest epoch stands in
        if val > best or (math.isnan(val) and best == -math.inf):
            best = val if not math.isnan(val) else best
            record.best_epoch = epoch
            record.best_state = model.state()

    record.best_val_accuracy = record.val_acc[record.best_epoch - 1]
    if cfg.early_stop:
        model.load_state(record.best_state)
    record.test_accuracy = evaluator(model, test_set)
    return record


def _run_cnn_point(args):
    h, base, data, n_samples = args
    train_set, val_set, test_set = data
    cfg = replace(base, batch_size=h.batch_size, lr=h.lr)
    model = Model(build_cnn(h, n_samples=n_samples), seed=cfg.seed)
    record = train(model, train_set, val_set, test_set, cfg)
    record.best_state = None
    return h, record


@dataclass
class GridRow:
    hyper: object
    record: RunRecord


def grid_search(base, data, restrict=None, jobs=1):
    """One CNN run per grid point; rows ranked by best validation accuracy.

    ``data`` is the (train, val, test) triple; ``restrict`` overrides grid
    axes, e.g. ``{"filter_size": (28,)}``.  Each run owns its model,
    optimizer and generator, so ``jobs > 1`` yields the same table.
    """
    points = cnn_grid(restrict)
    n_samples = data[0].x.shape[-1]
    n_fit = len(data[0]) - _n_held_out(len(data[0]), base)
    too_big = sorted({h.batch_size for h in points if h.batch_size > n_fit})
    if too_big:
        raise ConfigError(f"grid batch sizes {too_big} exceed the {n_fit} training trials")
    tasks = [(h, base, data, n_samples) for h in points]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cnn_point, tasks))
    else:
        results = [_run_cnn_point(t) for t in tasks]
    rows = [GridRow(h, rec) for h, rec in results]
    # stable sort keeps grid order among equal validation accuracies
    rows.sort(key=lambda r: -r.record.best_val_accuracy)
    return rows


@dataclass
class SubjectRow:
    subject: object  # int id, or "all" for the pooled run
    n_trials: int
    record: RunRecord


def subject_study(ts, spec, cfg, split_spec=None):
    """Train, validate and test on each subject's own trials, then on everything.

    Per-subject validation/test sizes are the pooled sizes scaled by the
    subject's share of the trials (at least one each).
    """
    split_spec = split_spec or SplitSpec(seed=cfg.seed)
    n = len(ts)
    rows = []
    for s in range(N_SUBJECTS):
        part = ts.take(np.flatnonzero(ts.subject == s))
        if len(part) < 3:
            continue
        scale = len(part) / n
        sub_split = SplitSpec(
            val_size=max(1, round(split_spec.val_size * scale)),
            test_size=max(1, round(split_spec.test_size * scale)),
            seed=split_spec.seed,
        )
        rows.append(SubjectRow(s, len(part), _fit(spec, part, sub_split, cfg)))
    rows.append(SubjectRow("all", n, _fit(spec, ts, split_spec, cfg)))
    return rows


def _fit(spec, ts, split_spec, cfg):
    train_set, val_set, test_set = split(ts, split_spec)
    cfg = replace(cfg, batch_size=min(cfg.batch_size, len(train_set)))
    record = train(Model(spec, seed=cfg.seed), train_set, val_set, test_set, cfg)
    record.best_state = None
    return record
