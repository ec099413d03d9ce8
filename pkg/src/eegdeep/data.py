"""Labeled trial collections: loading, NaN filtering, splitting, synthesis."""

from dataclasses import dataclass, field

import numpy as np

from .npyio import read_npy, write_npy
from .tensor import Rng, as_tensor

N_CHANNELS = 22
N_CLASSES = 4
N_SUBJECTS = 9
SAMPLE_RATE_HZ = 250.0


class ConfigError(ValueError):
    """Invalid sizes, options or combinations of options."""


class DataError(ValueError):
    """Input arrays that do not describe a valid trial set."""


@dataclass
class TrialSet:
    x: np.ndarray
    y: np.ndarray
    subject: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        self.x = as_tensor(self.x)
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        self.subject = np.asarray(self.subject, dtype=np.int64).reshape(-1)
        if self.x.ndim != 3:
            raise DataError(f"trials must be rank 3 (N, C, T), got shape {self.x.shape}")
        n, c, _ = self.x.shape
        if len(self.y) != n or len(self.subject) != n:
            raise DataError(
                f"{n} trials but {len(self.y)} labels and {len(self.subject)} subject ids"
            )
        if c != N_CHANNELS:
            raise DataError(f"expected {N_CHANNELS} EEG channels, got {c}")
        if n and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise DataError(f"labels must lie in 0..{N_CLASSES - 1}")
        if n and (self.subject.min() < 0 or self.subject.max() >= N_SUBJECTS):
            raise DataError(f"subject ids must lie in 0..{N_SUBJECTS - 1}")

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return TrialSet(self.x[idx], self.y[idx], self.subject[idx], self.sample_rate_hz)

    def with_x(self, x):
        return TrialSet(x, self.y, self.subject, self.sample_rate_hz)


@dataclass
class SplitSpec:
    val_size: int = 100
    test_size: int = 100
    seed: int = 0


def _exact_ints(values, what):
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    ints = np.rint(values)
    if not np.all(np.isfinite(values)) or np.any(ints != values):
        raise DataError(f"{what} file holds non-integer values")
    return ints.astype(np.int64)


def load_trialset(trials_path, labels_path, subjects_path=None, sample_rate_hz=SAMPLE_RATE_HZ):
    """Assemble a TrialSet from a trials NPY, a rank-1 labels NPY and optional subject ids."""
    x = read_npy(trials_path)
    labels = read_npy(labels_path)
    if labels.ndim != 1:
        raise DataError(f"labels file must be rank 1, got shape {labels.shape}")
    if x.ndim != 3 or x.shape[0] != labels.shape[0]:
        raise DataError(f"trials shape {x.shape} does not pair with labels shape {labels.shape}")
    y = _exact_ints(labels, "labels")
    if subjects_path is None:
        subject = np.zeros(len(y), dtype=np.int64)
    else:
        s = read_npy(subjects_path)
        if s.ndim == 2 and s.shape[1] == 1:
            s = s[:, 0]
        if s.shape != (len(y),):
            raise DataError(f"subjects shape {s.shape} does not pair with {len(y)} trials")
        subject = _exact_ints(s, "subjects")
    return TrialSet(x, y, subject, sample_rate_hz)


def save_trialset(ts, out_dir, prefix=""):
    """Write ``<prefix>trials.npy``, ``labels.npy`` and ``subjects.npy`` into ``out_dir``."""
    paths = {
        "trials": out_dir / f"{prefix}trials.npy",
        "labels": out_dir / f"{prefix}labels.npy",
        "subjects": out_dir / f"{prefix}subjects.npy",
    }
    write_npy(ts.x, paths["trials"])
    write_npy(ts.y.astype(np.float64), paths["labels"])
    write_npy(ts.subject.astype(np.float64), paths["subjects"])
    return paths


def remove_nan_trials(ts):
    keep = ~np.isnan(ts.x).any(axis=(1, 2))
    return ts.take(np.flatnonzero(keep))


def split(ts, spec):
    """Seeded shuffle, then carve (train, val, test) off the permutation in that order."""
    n = len(ts)
    if spec.val_size < 0 or spec.test_size < 0:
        raise ConfigError("val_size and test_size must be non-negative")
    if spec.val_size + spec.test_size >= n and (spec.val_size or spec.test_size):
        raise ConfigError(
            f"val_size + test_size = {spec.val_size + spec.test_size} leaves no training trials out of {n}"
        )
    perm = np.asarray(Rng(spec.seed).permutation(n), dtype=np.int64)
    n_train = n - spec.val_size - spec.test_size
    return (
        ts.take(perm[:n_train]),
        ts.take(perm[n_train : n_train + spec.val_size]),
        ts.take(perm[n_train + spec.val_size :]),
    )


def synth_trialset(n_per_class, seed=0, n_samples=1000, noise_by_subject=None, noise_sigma=0.5,
                   phase_per_trial=False):
    """Separable 4-class stand-in for the EEG recordings.

    Trial ``i`` has class ``i % 4`` and subject ``i % 9``.  Class ``k``
    carries a unit sinusoid at ``6 + 3k`` Hz on every channel, each channel
    with its own uniform random phase, plus white Gaussian noise.
    Channel phases are drawn once per dataset; ``phase_per_trial`` redraws
    them for every trial instead (a much harder, phase-jittered task).
    ``noise_by_subject`` (9 values) overrides ``noise_sigma`` per subject.
    """
    if n_per_class < 1:
        raise ConfigError("n_per_class must be >= 1")
    rng = Rng(seed)
    n = N_CLASSES * n_per_class
    y = np.arange(n) % N_CLASSES
    subject = np.arange(n) % N_SUBJECTS
    t = np.arange(n_samples) / SAMPLE_RATE_HZ
    freqs = 6.0 + 3.0 * y
    if phase_per_trial:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, N_CHANNELS))
    else:
        phases = np.broadcast_to(rng.uniform(0.0, 2.0 * np.pi, size=N_CHANNELS), (n, N_CHANNELS))
    x = np.sin(2.0 * np.pi * freqs[:, None, None] * t[None, None, :] + phases[:, :, None])
    if noise_by_subject is None:
        sigma = np.full(n, noise_sigma)
    else:
        sigma = np.asarray(noise_by_subject, dtype=np.float64)[subject]
    x += sigma[:, None, None] * rng.normal(size=(n, N_CHANNELS, n_samples))
    return TrialSet(x, y, subject, SAMPLE_RATE_HZ)
