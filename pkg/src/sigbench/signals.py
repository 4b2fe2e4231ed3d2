"""Closed-form harmonic signal families and random parameter sampling.

Three univariate families, all rendered on a uniform sampling grid:

* ``drift``: a sinusoid with a linearly drifting amplitude envelope plus an
  additive linear trend.
* ``spm``: a single carrier whose phase is sinusoidally modulated.
* ``dpm``: the sum of two independently phase-modulated carriers sharing one
  baseline offset.

Every generator is a pure function of (parameters, grid), so rendering is
deterministic and safe to parallelize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

FAMILIES = ("drift", "spm", "dpm")

# Smallest admissible carrier frequency when a shifted range reaches down to
# 0 Hz; draws below max(f_mod, this floor) are rejected and redrawn.
MIN_CARRIER_HZ = 0.01

_MAX_CONSTRAINT_REDRAWS = 1000


class GenerationError(RuntimeError):
    """Raised when constrained sampling cannot produce an admissible draw."""


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform time grid: ``n_samples`` points at ``sample_rate_hz``."""

    sample_rate_hz: float = 10.0
    duration_s: float = 300.0

    def __post_init__(self) -> None:
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")

    @property
    def n_samples(self) -> int:
        return round(self.sample_rate_hz * self.duration_s)

    def times(self) -> np.ndarray:
        """Timestamps t_k = k / sample_rate_hz, strictly increasing."""
        return np.arange(self.n_samples, dtype=np.float64) / self.sample_rate_hz


@dataclass(frozen=True)
class DriftHarmonicParams:
    """(1 + epsilon*t) * sin(2*pi*f*t + phi) + a*t."""

    epsilon: float  # amplitude drift rate, 1/s
    f: float        # base frequency, Hz
    phi: float      # phase offset, rad
    a: float        # linear trend slope, units/s

    def validate(self) -> None:
        for fld in fields(self):
            _require_finite(fld.name, getattr(self, fld.name))
        if self.f <= 0:
            raise ValueError(f"f must be positive, got {self.f}")


@dataclass(frozen=True)
class SpmHarmonicParams:
    """amplitude * sin(2*pi*f*t + beta*sin(2*pi*f_mod*t)) + offset."""

    amplitude: float
    f: float        # carrier frequency, Hz
    beta: float     # modulation depth, rad
    f_mod: float    # modulation frequency, Hz
    offset: float

    def validate(self, allow_zero_amplitude: bool = False) -> None:
        for fld in fields(self):
            _require_finite(fld.name, getattr(self, fld.name))
        if self.amplitude < 0 or (self.amplitude == 0 and not allow_zero_amplitude):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if self.f <= 0:
            raise ValueError(f"f must be positive, got {self.f}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.f_mod <= 0:
            raise ValueError(f"f_mod must be positive, got {self.f_mod}")
        if not self.f_mod < self.f:
            raise ValueError(f"modulation must be slower than the carrier: f_mod={self.f_mod} >= f={self.f}")


@dataclass(frozen=True)
class DpmHarmonicParams:
    """Sum of two phase-modulated components plus one shared offset.

    Rendering accepts a zero-amplitude component (switching it off) and equal
    carriers (which degenerate to a single doubled carrier); sampled specs
    never produce either, as the draw constraints reject them.
    """

    a1: float
    f1: float
    beta1: float
    f_mod1: float
    a2: float
    f2: float
    beta2: float
    f_mod2: float
    offset: float

    def components(self) -> tuple[SpmHarmonicParams, SpmHarmonicParams]:
        """The two components as zero-offset single-carrier parameter sets."""
        return (
            SpmHarmonicParams(self.a1, self.f1, self.beta1, self.f_mod1, 0.0),
            SpmHarmonicParams(self.a2, self.f2, self.beta2, self.f_mod2, 0.0),
        )

    def validate(self) -> None:
        _require_finite("offset", self.offset)
        for comp in self.components():
            comp.validate(allow_zero_amplitude=True)


Params = DriftHarmonicParams | SpmHarmonicParams | DpmHarmonicParams


def synth_drift_harmonic(params: DriftHarmonicParams, grid: SamplingGrid) -> np.ndarray:
    """Render a drifting-envelope sinusoid with linear trend on the grid.

    The envelope 1 + epsilon*t must stay strictly positive over the grid
    (it is linear in t, so both endpoints are checked).
    """
    params.validate()
    t = grid.times()
    for t_edge in (0.0, float(t[-1])):
        if 1.0 + params.epsilon * t_edge <= 0.0:
            raise ValueError(f"envelope 1 + epsilon*t crosses zero at t={t_edge} (epsilon={params.epsilon})")
    return (1.0 + params.epsilon * t) * np.sin(2.0 * np.pi * params.f * t + params.phi) + params.a * t


def synth_spm_harmonic(params: SpmHarmonicParams, grid: SamplingGrid) -> np.ndarray:
    """Render a single phase-modulated carrier on the grid."""
    params.validate()
    t = grid.times()
    inner = 2.0 * np.pi * params.f * t + params.beta * np.sin(2.0 * np.pi * params.f_mod * t)
    return params.amplitude * np.sin(inner) + params.offset


def synth_dpm_harmonic(params: DpmHarmonicParams, grid: SamplingGrid) -> np.ndarray:
    """Render two phase-modulated carriers; the shared offset is applied once."""
    params.validate()
    c1, c2 = params.components()
    return synth_spm_harmonic(c1, grid) + synth_spm_harmonic(c2, grid) + params.offset


@dataclass(frozen=True)
class SignalSpec:
    """One family's concrete parameter tuple plus its sampling grid."""

    family: str
    params: Params
    grid: SamplingGrid = field(default_factory=SamplingGrid)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")

    def render(self) -> np.ndarray:
        """Evaluate the family's closed form on the grid (float64)."""
        if self.family == "drift":
            return synth_drift_harmonic(self.params, self.grid)
        if self.family == "spm":
            return synth_spm_harmonic(self.params, self.grid)
        return synth_dpm_harmonic(self.params, self.grid)

    def param_tuple(self) -> tuple[float, ...]:
        """Flat parameter tuple in declaration order, for disjointness checks."""
        return tuple(float(getattr(self.params, fld.name)) for fld in fields(self.params))

    def param_dict(self) -> dict[str, float]:
        return {fld.name: float(getattr(self.params, fld.name)) for fld in fields(self.params)}


# Parameter names in sampling order, per family. Order is part of the
# determinism contract: a given seed always consumes draws in this order.
FAMILY_PARAM_NAMES: dict[str, tuple[str, ...]] = {
    "drift": ("epsilon", "f", "phi", "a"),
    "spm": ("amplitude", "f", "beta", "f_mod", "offset"),
    "dpm": ("a1", "f1", "beta1", "f_mod1", "a2", "f2", "beta2", "f_mod2", "offset"),
}

# Default sampling intervals. Frequency intervals are the original training
# ranges; the remaining intervals keep 300 s series bounded roughly within
# [-2.5, 2.5] and are overridable in config.
_DRIFT_DEFAULTS = {
    "epsilon": (0.0, 5e-4),
    "f": (0.85, 1.10),
    "phi": (0.0, 2.0 * math.pi),
    "a": (-1e-3, 1e-3),
}
_SPM_DEFAULTS = {
    "amplitude": (0.5, 1.5),
    "f": (0.68, 1.41),
    "beta": (0.1, 1.0),
    "f_mod": (0.05, 0.2),
    "offset": (-0.5, 0.5),
}
_DPM_COMPONENT_DEFAULTS = {
    "a": (0.5, 1.5),
    "f": (0.68, 1.41),
    "beta": (0.1, 1.0),
    "f_mod": (0.05, 0.2),
}


@dataclass(frozen=True)
class FamilyRanges:
    """Closed sampling intervals for one family, keyed by parameter name."""

    family: str
    intervals: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        expected = FAMILY_PARAM_NAMES[self.family]
        missing = [n for n in expected if n not in self.intervals]
        extra = [n for n in self.intervals if n not in expected]
        if missing or extra:
            raise ValueError(f"{self.family} ranges: missing {missing}, unexpected {extra}")
        for name, (lo, hi) in self.intervals.items():
            _require_finite(f"{name} lower bound", lo)
            _require_finite(f"{name} upper bound", hi)
            if lo > hi:
                raise ValueError(f"empty interval for {name}: [{lo}, {hi}]")

    def frequency_names(self) -> tuple[str, ...]:
        return ("f",) if self.family in ("drift", "spm") else ("f1", "f2")

    def with_frequency_interval(self, interval: tuple[float, float]) -> "FamilyRanges":
        """Same ranges with every carrier-frequency interval replaced."""
        lo, hi = float(interval[0]), float(interval[1])
        new = dict(self.intervals)
        for name in self.frequency_names():
            new[name] = (lo, hi)
        return FamilyRanges(self.family, new)

    def to_dict(self) -> dict[str, list[float]]:
        return {n: [float(lo), float(hi)] for n, (lo, hi) in self.intervals.items()}

    @classmethod
    def from_dict(cls, family: str, d: dict) -> "FamilyRanges":
        return cls(family, {k: (float(v[0]), float(v[1])) for k, v in d.items()})


def default_ranges(family: str) -> FamilyRanges:
    """Training-range defaults for one family."""
    if family == "drift":
        return FamilyRanges("drift", dict(_DRIFT_DEFAULTS))
    if family == "spm":
        return FamilyRanges("spm", dict(_SPM_DEFAULTS))
    if family == "dpm":
        intervals: dict[str, tuple[float, float]] = {}
        for i in (1, 2):
            intervals[f"a{i}"] = _DPM_COMPONENT_DEFAULTS["a"]
            intervals[f"f{i}"] = _DPM_COMPONENT_DEFAULTS["f"]
            intervals[f"beta{i}"] = _DPM_COMPONENT_DEFAULTS["beta"]
            intervals[f"f_mod{i}"] = _DPM_COMPONENT_DEFAULTS["f_mod"]
        intervals["offset"] = _SPM_DEFAULTS["offset"]
        return FamilyRanges("dpm", intervals)
    raise ValueError(f"unknown family {family!r}")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _admissible(family: str, draws: dict[str, float]) -> bool:
    # Carrier constraints only; interval membership holds by construction.
    if family == "spm":
        return draws["f"] > max(draws["f_mod"], MIN_CARRIER_HZ)
    if family == "dpm":
        return (
            draws["f1"] > max(draws["f_mod1"], MIN_CARRIER_HZ)
            and draws["f2"] > max(draws["f_mod2"], MIN_CARRIER_HZ)
            and draws["f1"] != draws["f2"]
        )
    return True


def sample_spec(family: str, ranges: FamilyRanges, rng_seed, grid: SamplingGrid | None = None) -> SignalSpec:
    """Draw one parameter tuple i.i.d. uniformly from the family's intervals.

    Deterministic given ``rng_seed`` (an int, a SeedSequence, or a Generator).
    Draws violating the carrier constraints (modulation slower than carrier,
    distinct carriers) are rejected and redrawn; shifted ranges that reach
    down to 0 Hz make such rejections routine.
    """
    if ranges.family != family:
        raise ValueError(f"ranges are for family {ranges.family!r}, not {family!r}")
    grid = grid or SamplingGrid()
    rng = _as_rng(rng_seed)
    names = FAMILY_PARAM_NAMES[family]
    for _ in range(_MAX_CONSTRAINT_REDRAWS):
        draws = {}
        for name in names:
            lo, hi = ranges.intervals[name]
            draws[name] = float(rng.uniform(lo, hi))
        if _admissible(family, draws):
            break
    else:
        raise GenerationError(
            f"no admissible {family} draw after {_MAX_CONSTRAINT_REDRAWS} attempts; "
            f"check the frequency intervals {[ranges.intervals[n] for n in ranges.frequency_names()]}"
        )
    if family == "drift":
        params: Params = DriftHarmonicParams(**draws)
    elif family == "spm":
        params = SpmHarmonicParams(**draws)
    else:
        params = DpmHarmonicParams(**draws)
    params.validate()
    return SignalSpec(family, params, grid)
