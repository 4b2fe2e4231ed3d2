"""Forecast fidelity metrics: amplitude, dominant frequency, and phase.

Amplitude is plain MAE/MSE over the horizon. Frequency error compares
parabolically interpolated FFT peak frequencies of the mean-removed signals.
Phase error compares instantaneous phases of the analytic signals, with the
per-sample difference wrapped to (-180, 180] degrees before averaging its
absolute value, so the result always lies in [0, 180].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import DEFAULT_N_FFT, analytic_signal, fft_spectrum, parabolic_peak

METRIC_NAMES = ("mae", "mse", "freq_err_hz", "phase_err_deg")

MIN_METRIC_LENGTH = 16


@dataclass(frozen=True)
class WindowScore:
    """All four metrics for one forecast window."""

    mae: float
    mse: float
    freq_err_hz: float
    phase_err_deg: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class SeriesScore:
    """Per-window scores and their per-series arithmetic means."""

    series_id: str
    windows: tuple[WindowScore, ...]

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(w, metric) for w in self.windows]))

    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class AggregateScore:
    """Mean and median of per-series means, across a test set."""

    mean: dict[str, float]
    median: dict[str, float]
    n_series: int


def _check_pair(pred: np.ndarray, truth: np.ndarray, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.ndim != 1 or t.ndim != 1:
        raise ValueError("pred and truth must be 1-D")
    if p.size != t.size:
        raise ValueError(f"length mismatch: pred has {p.size}, truth has {t.size}")
    if p.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {p.size}")
    return p, t


def amplitude_errors(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """(MAE, MSE) over the horizon."""
    p, t = _check_pair(pred, truth)
    diff = p - t
    return float(np.mean(np.abs(diff))), float(np.mean(diff * diff))


def frequency_error(
    pred: np.ndarray, truth: np.ndarray, sample_rate_hz: float, n_fft: int = DEFAULT_N_FFT
) -> float:
    """Absolute difference of interpolated dominant frequencies, in Hz.

    Both signals are mean-removed first so offsets and trends do not leak into
    a DC peak (the DC bin is excluded from the search regardless).
    """
    p, t = _check_pair(pred, truth, MIN_METRIC_LENGTH)
    f_pred = parabolic_peak(fft_spectrum(p - p.mean(), sample_rate_hz, n_fft))
    f_truth = parabolic_peak(fft_spectrum(t - t.mean(), sample_rate_hz, n_fft))
    return abs(f_pred - f_truth)


def wrap_degrees(diff_deg: np.ndarray) -> np.ndarray:
    """Wrap angle differences (degrees) into (-180, 180]."""
    wrapped = np.mod(diff_deg, 360.0)
    return np.where(wrapped > 180.0, wrapped - 360.0, wrapped)


def phase_error(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute wrapped instantaneous-phase difference, in degrees."""
    p, t = _check_pair(pred, truth, MIN_METRIC_LENGTH)
    phase_p = analytic_signal(p).phase
    phase_t = analytic_signal(t).phase
    diff_deg = np.degrees(phase_p - phase_t)
    return float(np.mean(np.abs(wrap_degrees(diff_deg))))


def score_window(pred: np.ndarray, truth: np.ndarray, sample_rate_hz: float, n_fft: int = DEFAULT_N_FFT) -> WindowScore:
    """All four metrics for one (forecast, truth) horizon pair."""
    mae, mse = amplitude_errors(pred, truth)
    return WindowScore(
        mae=mae,
        mse=mse,
        freq_err_hz=frequency_error(pred, truth, sample_rate_hz, n_fft),
        phase_err_deg=phase_error(pred, truth),
    )


def aggregate(series_scores: list[SeriesScore]) -> AggregateScore:
    """Mean and median of per-series means; an even count medians the central pair."""
    if not series_scores:
        raise ValueError("cannot aggregate an empty list of series scores")
    mean: dict[str, float] = {}
    median: dict[str, float] = {}
    for name in METRIC_NAMES:
        values = np.array([s.mean(name) for s in series_scores])
        mean[name] = float(values.mean())
        median[name] = float(np.median(values))
    return AggregateScore(mean=mean, median=median, n_series=len(series_scores))
