"""Test-time perturbations: exact-SNR Gaussian noise and frequency shifts.

Noise is additive, zero-mean, and scaled so that the requested SNR holds
against the sample variance of the clean series (mean removed), which keeps
the ratio invariant to baseline offsets and trends. Shifted test sets reuse
the dataset builder with only the carrier-frequency interval replaced.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datasets import DatasetManifest, SeriesRecord, build_dataset
from .signals import FamilyRanges, SamplingGrid

DEFAULT_SNR_LEVELS_DB = (40.0, 30.0, 20.0)

SHIFT_IDS = ("shift1", "shift2", "none", "shift3", "shift4")

# Carrier-frequency intervals per family and shift, in Hz. "none" is the
# original training range; shift1/shift2 sit below it, shift3/shift4 above.
SHIFT_FREQUENCY_TABLE: dict[str, dict[str, tuple[float, float]]] = {
    "drift": {
        "shift1": (0.35, 0.60),
        "shift2": (0.60, 0.85),
        "none": (0.85, 1.10),
        "shift3": (1.10, 1.35),
        "shift4": (1.35, 1.60),
    },
    "spm": {
        "shift1": (0.00, 0.34),
        "shift2": (0.34, 0.68),
        "none": (0.68, 1.41),
        "shift3": (1.41, 2.14),
        "shift4": (2.14, 2.88),
    },
    "dpm": {
        "shift1": (0.00, 0.34),
        "shift2": (0.34, 0.68),
        "none": (0.68, 1.41),
        "shift3": (1.41, 2.14),
        "shift4": (2.14, 2.88),
    },
}


@dataclass(frozen=True)
class NoiseSpec:
    """Target SNR in dB plus the seed that fixes the noise realization."""

    snr_db: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")


@dataclass(frozen=True)
class ShiftSpec:
    """One of the tabulated frequency shifts for a family."""

    family: str
    shift_id: str

    def __post_init__(self) -> None:
        if self.family not in SHIFT_FREQUENCY_TABLE:
            raise ValueError(f"unknown family {self.family!r}")
        if self.shift_id not in SHIFT_IDS:
            raise ValueError(f"unknown shift id {self.shift_id!r}, expected one of {SHIFT_IDS}")

    @property
    def frequency_interval(self) -> tuple[float, float]:
        return SHIFT_FREQUENCY_TABLE[self.family][self.shift_id]


def noise_sigma(values: np.ndarray, snr_db: float) -> float:
    """Noise standard deviation achieving ``snr_db`` against Var(values)."""
    signal_var = float(np.var(values))
    if signal_var == 0.0:
        raise ValueError("series has zero variance; SNR is undefined")
    return float(np.sqrt(signal_var / 10.0 ** (snr_db / 10.0)))


def inject_noise(series: SeriesRecord, spec: NoiseSpec) -> SeriesRecord:
    """Add i.i.d. zero-mean Gaussian noise at the requested SNR.

    The input must be clean (no prior perturbation); the output carries the
    noise metadata and is deterministic given the spec's seed.
    """
    if series.perturbation is not None:
        raise ValueError(f"series {series.series_id} already carries a perturbation: {series.perturbation}")
    sigma = noise_sigma(series.values, spec.snr_db)
    rng = np.random.default_rng(int(spec.seed))
    noisy = series.values + rng.normal(0.0, sigma, size=series.values.shape)
    return replace(
        series,
        values=noisy,
        perturbation={"kind": "noise", "snr_db": float(spec.snr_db), "seed": int(spec.seed)},
    )


def shifted_ranges(train_ranges: FamilyRanges, shift: ShiftSpec) -> FamilyRanges:
    """Training ranges with only the carrier-frequency interval replaced."""
    if train_ranges.family != shift.family:
        raise ValueError(f"shift is for family {shift.family!r}, ranges for {train_ranges.family!r}")
    return train_ranges.with_frequency_interval(shift.frequency_interval)


def build_shifted_testset(
    family: str,
    shift: ShiftSpec,
    n_series: int = 20,
    master_seed: int = 0,
    train_ranges: FamilyRanges | None = None,
    grid: SamplingGrid | None = None,
) -> tuple[DatasetManifest, list[SeriesRecord]]:
    """Generate an all-test dataset over the shift's frequency interval.

    Every non-frequency interval is inherited from the training ranges.
    """
    from .signals import default_ranges

    base = train_ranges if train_ranges is not None else default_ranges(family)
    ranges = shifted_ranges(base, shift)
    manifest, records = build_dataset(
        family,
        ranges,
        split_sizes=(n_series,),
        master_seed=master_seed,
        grid=grid,
        split_labels=("test",),
    )
    manifest.perturbation = {"kind": "shift", "shift_id": shift.shift_id, "frequency_interval": list(shift.frequency_interval)}
    for record in records:
        record.perturbation = manifest.perturbation
    return manifest, records
