"""sigbench: synthetic harmonic time-series benchmarking.

Generators for three controlled signal families, reference forecasters with
hand-derived gradients, amplitude/frequency/phase fidelity metrics,
noise and frequency-shift evaluation protocols, and a REML mixed-effects
contrast model over the results.
"""

from .datasets import DatasetManifest, SeriesRecord, build_dataset, load_dataset, save_dataset
from .dsp import AnalyticSignal, Spectrum, analytic_signal, fft_spectrum, moving_average, parabolic_peak
from .harness import ExperimentPlan, Occasion, WindowingPolicy, make_windows, run_cell, run_plan
from .lmm import build_design, contrasts, fit_reml
from .metrics import aggregate, amplitude_errors, frequency_error, phase_error, score_window
from .models import DLinearModel, FitsModel, LinearModel, MlpModel, build_model
from .perturb import NoiseSpec, ShiftSpec, build_shifted_testset, inject_noise
from .signals import (
    DpmHarmonicParams,
    DriftHarmonicParams,
    FamilyRanges,
    SamplingGrid,
    SignalSpec,
    SpmHarmonicParams,
    default_ranges,
    sample_spec,
    synth_dpm_harmonic,
    synth_drift_harmonic,
    synth_spm_harmonic,
)
from .training import TrainConfig, least_squares_oracle, train

__version__ = "0.1.0"

__all__ = [
    "AnalyticSignal",
    "DatasetManifest",
    "DLinearModel",
    "DpmHarmonicParams",
    "DriftHarmonicParams",
    "ExperimentPlan",
    "FamilyRanges",
    "FitsModel",
    "LinearModel",
    "MlpModel",
    "NoiseSpec",
    "Occasion",
    "SamplingGrid",
    "SeriesRecord",
    "ShiftSpec",
    "SignalSpec",
    "Spectrum",
    "SpmHarmonicParams",
    "TrainConfig",
    "WindowingPolicy",
    "aggregate",
    "amplitude_errors",
    "analytic_signal",
    "build_dataset",
    "build_design",
    "build_model",
    "build_shifted_testset",
    "contrasts",
    "default_ranges",
    "fft_spectrum",
    "fit_reml",
    "frequency_error",
    "inject_noise",
    "least_squares_oracle",
    "load_dataset",
    "make_windows",
    "moving_average",
    "parabolic_peak",
    "phase_error",
    "run_cell",
    "run_plan",
    "sample_spec",
    "save_dataset",
    "score_window",
    "synth_dpm_harmonic",
    "synth_drift_harmonic",
    "synth_spm_harmonic",
    "train",
]
