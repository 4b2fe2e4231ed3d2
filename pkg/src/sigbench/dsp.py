"""Shared signal-processing primitives.

All operations are pure functions on float64 arrays: a one-sided FFT spectrum
with zero padding, three-point parabolic peak interpolation, the analytic
signal (frequency-domain Hilbert transform), and a centered moving average
with edge replication.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_N_FFT = 4096


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectrum: complex bins, their magnitudes, and bin frequencies."""

    complex_bins: np.ndarray
    magnitudes: np.ndarray
    frequencies: np.ndarray
    sample_rate_hz: float
    n_fft: int


@dataclass(frozen=True)
class AnalyticSignal:
    """Real input, its Hilbert transform, and the instantaneous phase."""

    real: np.ndarray
    imag: np.ndarray
    phase: np.ndarray  # atan2(imag, real), per sample, in (-pi, pi]


def fft_spectrum(samples: np.ndarray, sample_rate_hz: float, n_fft: int = DEFAULT_N_FFT) -> Spectrum:
    """One-sided spectrum of ``samples`` zero-padded to ``n_fft``.

    ``n_fft`` must be a power of two and at least the input length. Bin k sits
    at k * fs / n_fft, up to and including Nyquist.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("samples must be a non-empty 1-D array")
    if n_fft < x.size:
        raise ValueError(f"n_fft={n_fft} is smaller than the input length {x.size}")
    if n_fft & (n_fft - 1) != 0:
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    bins = np.fft.rfft(x, n=n_fft)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    return Spectrum(bins, np.abs(bins), freqs, float(sample_rate_hz), int(n_fft))


def parabolic_peak(spectrum: Spectrum) -> float:
    """Sub-bin dominant frequency via a three-point parabola on magnitudes.

    The DC bin is excluded from the peak search. With the peak at bin k, the
    parabola through (k-1, k, k+1) gives the offset
    delta = 0.5 * (m[k-1] - m[k+1]) / (m[k-1] - 2 m[k] + m[k+1]), clamped to
    [-0.5, 0.5]. A peak at the edge of the searchable range, or a degenerate
    (flat) neighborhood, falls back to the bin center.
    """
    m = spectrum.magnitudes
    if m.size < 3:
        raise ValueError("spectrum needs at least 3 bins for peak interpolation")
    # Searchable bins: exclude DC and the Nyquist bin.
    k = 1 + int(np.argmax(m[1:-1]))
    bin_hz = spectrum.sample_rate_hz / spectrum.n_fft
    if k == 1 or k == m.size - 2:
        return k * bin_hz
    denom = m[k - 1] - 2.0 * m[k] + m[k + 1]
    if denom == 0.0 or not np.isfinite(denom):
        return k * bin_hz
    delta = 0.5 * (m[k - 1] - m[k + 1]) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    return (k + delta) * bin_hz


def analytic_signal(samples: np.ndarray) -> AnalyticSignal:
    """Analytic signal via the frequency-domain construction.

    FFT the input, zero the negative-frequency bins, double the strictly
    positive ones (DC, and Nyquist for even lengths, keep unit weight), then
    inverse FFT. The imaginary part is the Hilbert transform of the input.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("samples must be 1-D with at least 4 points")
    n = x.size
    spec = np.fft.fft(x)
    weights = np.zeros(n)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[1 : n // 2] = 2.0
        weights[n // 2] = 1.0
    else:
        weights[1 : (n + 1) // 2] = 2.0
    z = np.fft.ifft(spec * weights)
    return AnalyticSignal(real=x, imag=z.imag, phase=np.arctan2(z.imag, x))


def moving_average(samples: np.ndarray, kernel_size: int) -> np.ndarray:
    """Centered moving average with replication padding, along the last axis.

    ``kernel_size`` must be odd, at least 1, and no longer than the input.
    Output length equals input length.
    """
    x = np.asarray(samples, dtype=np.float64)
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    if kernel_size > x.shape[-1]:
        raise ValueError(f"kernel_size={kernel_size} exceeds input length {x.shape[-1]}")
    if kernel_size == 1:
        return x.copy()
    half = kernel_size // 2
    first = np.repeat(x[..., :1], half, axis=-1)
    last = np.repeat(x[..., -1:], half, axis=-1)
    padded = np.concatenate([first, x, last], axis=-1)
    csum = np.cumsum(padded, axis=-1, dtype=np.float64)
    zero = np.zeros(csum.shape[:-1] + (1,), dtype=np.float64)
    csum = np.concatenate([zero, csum], axis=-1)
    return (csum[..., kernel_size:] - csum[..., :-kernel_size]) / kernel_size
