"""Arbitrary-length FFT, spectral high-pass filtering and Fourier downsampling.

The transform is a recursive mixed-radix decimation-in-time FFT.  Small
prime radices use a dense butterfly; prime lengths above
``_DIRECT_MAX`` fall back to Bluestein's chirp-z algorithm over a
power-of-two FFT, so every length costs O(n log n).  All functions act on
the last axis and broadcast over leading axes.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from .data import ConfigError, TrialSet

_DIRECT_MAX = 16


class SpectrumSymmetryError(ValueError):
    """Spectrum is not the transform of a real signal."""


@dataclass
class Spectrum:
    re: np.ndarray
    im: np.ndarray
    n: int

    @classmethod
    def from_complex(cls, z):
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), z.shape[-1])

    def complex(self):
        return self.re + 1j * self.im

    def bin_hz(self, sample_rate_hz):
        """Frequency of bins 0..n//2."""
        return np.arange(self.n // 2 + 1) * sample_rate_hz / self.n


@dataclass
class DownsampleSpec:
    m: int
    cutoff_hz: float = 5.0
    sample_rate_hz: float = 250.0

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError(f"downsample size m={self.m} must be >= 2")


def _smallest_factor(n):
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


@lru_cache(maxsize=None)
def _dft_matrix(p):
    k = np.arange(p)
    return np.exp(-2j * np.pi * np.outer(k, k) / p)


@lru_cache(maxsize=None)
def _twiddles(p, m):
    n = p * m
    return np.exp(-2j * np.pi * np.outer(np.arange(p), np.arange(m)) / n)


@lru_cache(maxsize=None)
def _bluestein_tables(n):
    size = 1 << (2 * n - 2).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp angle small and exact
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(size, dtype=complex)
    b[:n] = chirp.conj()
    b[size - n + 1 :] = chirp[1:][::-1].conj()
    return size, chirp, _fft(b)


def _bluestein(x):
    n = x.shape[-1]
    size, chirp, b_hat = _bluestein_tables(n)
    a = np.zeros(x.shape[:-1] + (size,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft(_fft(a) * b_hat)
    return conv[..., :n] * chirp


def _fft(x):
    n = x.shape[-1]
    if n == 1:
        return x.astype(complex, copy=True)
    p = _smallest_factor(n)
    if p == n:
        if n <= _DIRECT_MAX:
            return x @ _dft_matrix(n).T
        return _bluestein(x)
    m = n // p
    # subsequences x[r::p], r = 0..p-1, each transformed at length m
    sub = _fft(np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2))
    y = sub * _twiddles(p, m)
    if p <= _DIRECT_MAX:
        out = np.einsum("qr,...rk->...qk", _dft_matrix(p), y)
    else:
        out = np.swapaxes(_fft(np.swapaxes(y, -1, -2)), -1, -2)
    return out.reshape(x.shape[:-1] + (n,))


def _ifft(z):
    n = z.shape[-1]
    return np.conj(_fft(np.conj(z))) / n


def fft(x):
    """Discrete Fourier transform of real signal(s) along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("fft needs at least one sample")
    return Spectrum.from_complex(_fft(x.astype(complex)))


def ifft(s, tol=1e-9):
    """Inverse transform of a conjugate-symmetric spectrum back to a real signal."""
    z = s.complex() if isinstance(s, Spectrum) else np.asarray(s, dtype=complex)
    n = z.shape[-1]
    scale = max(1.0, float(np.max(np.abs(z), initial=0.0)))
    mirror = np.conj(z[..., (-np.arange(n)) % n])
    asym = float(np.max(np.abs(z - mirror), initial=0.0))
    if asym > tol * scale:
        raise SpectrumSymmetryError(f"spectrum deviates from conjugate symmetry by {asym:.3g}")
    x = _ifft(z)
    return x.real.copy()


def highpass(x, cutoff_hz=5.0, sample_rate_hz=250.0):
    """Zero every bin below ``cutoff_hz`` (DC included) and its mirror; keep the rest."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    z = _fft(x.astype(complex))
    k = np.arange(n)
    # min(k, n-k) * fs / n < cutoff, compared without dividing
    z[..., np.minimum(k, n - k) * sample_rate_hz < cutoff_hz * n] = 0.0
    return _ifft(z).real


def fourier_downsample(x, m):
    """Resample to ``m`` points by truncating the spectrum; amplitudes are preserved."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if not 2 <= m <= n:
        raise ConfigError(f"target length m={m} must satisfy 2 <= m <= {n}")
    z = _fft(x.astype(complex))
    out = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    half = math.ceil(m / 2)
    out[..., :half] = z[..., :half]
    if half > 1:
        out[..., m - half + 1 :] = z[..., n - half + 1 :]
    if m % 2 == 0:
        # both source bins +-m/2 land on the target Nyquist bin
        nyq = m // 2
        out[..., nyq] = z[..., nyq] + z[..., n - nyq] if m < n else z[..., nyq]
    return _ifft(out).real * (m / n)


def preprocess_rnn(ts, spec):
    """High-pass then Fourier-downsample every channel of every trial."""
    n = ts.x.shape[-1]
    filtered = highpass(ts.x, spec.cutoff_hz, spec.sample_rate_hz)
    x = fourier_downsample(filtered, spec.m)
    return TrialSet(x, ts.y, ts.subject, ts.sample_rate_hz * spec.m / n)


def mean_subtract(x, axis="examples"):
    """``examples``: remove the per-(channel, time) mean over trials.
    ``time``: remove each trial-channel's own temporal mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"mean_subtract expects (N, C, T), got {x.shape}")
    if axis == "examples":
        return x - x.mean(axis=0, keepdims=True)
    if axis == "time":
        return x - x.mean(axis=2, keepdims=True)
    raise ConfigError(f"unknown mean-subtraction mode {axis!r}")
