"""Time-series error analysis: autocorrelation times and block bootstrap.

Samples produced by a dynamical run are serially correlated, so naive
standard errors are too small.  This module provides the two standard
remedies used throughout the package:

* an automatic windowed estimate of the integrated autocorrelation time
  of a scalar series, used to pick decorrelation strides, and
* a moving-block bootstrap whose block length is tied to that time, used
  for distribution-free error bars on arbitrary statistics.

Conventions: tau_int = 1/2 + sum_k rho(k), so an uncorrelated series has
tau_int = 1/2 and the variance of the mean is inflated by 2 tau_int.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples

DEFAULT_RESAMPLES = 200
_WINDOW_FACTOR = 6.0  # automatic windowing constant


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased sample autocovariance for all lags, FFT-based."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise TooFewSamples("autocovariance needs at least two samples")
    xc = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    fx = np.fft.rfft(xc, m)
    acov = np.fft.irfft(fx * np.conj(fx), m)[:n].real
    return acov / n


def autocorrelation_time(x: np.ndarray, c: float = _WINDOW_FACTOR) -> float:
    """Integrated autocorrelation time with automatic windowing.

    The running sum tau(W) = 1/2 + sum_{k<=W} rho(k) is truncated at the
    smallest window W >= c * tau(W); the window grows with the
    correlation time so the truncation bias and the noise from summing
    too many noisy lags are balanced.  A constant series, or one whose
    window never closes, returns a conservative large value capped at
    n / 2.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    acov = autocovariance(x)
    tiny = (1e-12 * (1.0 + abs(float(x.mean())))) ** 2
    if acov[0] <= tiny:
        return 0.5  # numerically constant series: no correlation information
    rho = acov / acov[0]
    tau = 0.5
    for w in range(1, n):
        tau += rho[w]
        if w >= c * tau:
            return float(max(tau, 0.5))
    return float(min(max(tau, 0.5), n / 2.0))


def decorrelation_stride(x: np.ndarray, c: float = _WINDOW_FACTOR) -> int:
    """Subsampling stride that leaves samples approximately independent."""
    return max(1, int(np.ceil(2.0 * autocorrelation_time(x, c))))


def effective_samples(x: np.ndarray) -> float:
    """Number of effectively independent samples in the series."""
    x = np.asarray(x, dtype=float).ravel()
    return x.size / (2.0 * autocorrelation_time(x))


@dataclass(frozen=True)
class BootstrapResult:
    """A point estimate with its resampling error."""

    value: float | np.ndarray
    error: float | np.ndarray
    block_length: int
    n_resamples: int


def _block_indices(n: int, block: int, n_resamples: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Index matrix (n_resamples, n) of moving-block resamples."""
    n_blocks = -(-n // block)  # ceil
    starts = rng.integers(0, n - block + 1, size=(n_resamples, n_blocks))
    offs = np.arange(block)
    idx = (starts[:, :, None] + offs[None, None, :]).reshape(n_resamples, -1)
    return idx[:, :n]


def block_bootstrap(x: np.ndarray, statistic, *,
                    n_resamples: int = DEFAULT_RESAMPLES,
                    block_length: int | None = None,
                    rng: np.random.Generator | None = None) -> BootstrapResult:
    """Moving-block bootstrap error for ``statistic`` of a series.

    ``x`` may be 1D (scalar samples) or 2D (one sample per row);
    ``statistic`` maps a same-shaped array to a float or a fixed-size
    vector.  Blocks of consecutive rows are resampled with replacement,
    preserving serial correlation within a block.  The default block
    length is the larger of the decorrelation stride (of the first
    column in the 2D case) and n**(1/3): blocks must span the
    correlation time for the error to be honest, and the cube-root
    growth keeps the O(stride/block) small-block bias negligible.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise TooFewSamples(f"bootstrap needs at least 4 samples, got {n}")
    if block_length is None:
        lead = x if x.ndim == 1 else x[:, 0]
        block_length = max(decorrelation_stride(lead),
                           int(np.ceil(n ** (1.0 / 3.0))))
    block_length = int(min(max(block_length, 1), n))
    if rng is None:
        rng = np.random.default_rng(0)

    idx = _block_indices(n, block_length, n_resamples, rng)
    reps = np.asarray([statistic(x[row]) for row in idx], dtype=float)
    value = np.asarray(statistic(x), dtype=float)
    error = reps.std(axis=0, ddof=1)
    if value.ndim == 0:
        return BootstrapResult(float(value), float(error),
                               block_length, n_resamples)
    return BootstrapResult(value, error, block_length, n_resamples)
