"""Run configuration: one nested human-readable document drives everything.

Any field left out of the config file falls back to the documented default
(the experiment constants: 10 Hz, 300 s, 70/10/20 splits, H=50, F=100, the
tabulated frequency ranges, and per-model training settings). The resolved
configuration is echoed into every output for provenance, and a run rebuilt
from its own echo reproduces the original byte-for-byte.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .datasets import DEFAULT_SPLIT_SIZES
from .harness import DEFAULT_OCCASIONS, ExperimentPlan, Occasion, WindowingPolicy
from .signals import FAMILIES, FamilyRanges, SamplingGrid, default_ranges
from .training import TrainConfig, default_train_config

OUTPUT_DIR_ENV = "TIMESYNTH_OUT"
DEFAULT_MODELS = ("linear", "dlinear", "fits", "mlp")


class ConfigError(ValueError):
    """A malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str | None = None
    families: list[str] = field(default_factory=lambda: list(FAMILIES))
    models: list[str] = field(default_factory=lambda: list(DEFAULT_MODELS))
    occasions: list[str] = field(default_factory=lambda: [o.label for o in DEFAULT_OCCASIONS])
    sample_rate_hz: float = 10.0
    duration_s: float = 300.0
    split_sizes: tuple[int, ...] = DEFAULT_SPLIT_SIZES
    n_shift_series: int = 20
    history: int = 50
    horizon: int = 100
    train_stride: int = 1
    eval_stride: int = 25
    n_fft: int = 4096
    jobs: int = 1
    training: dict[str, dict] = field(default_factory=dict)
    ranges: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = [f for f in self.families if f not in FAMILIES]
        if unknown:
            raise ConfigError(f"unknown families {unknown}; expected a subset of {list(FAMILIES)}")
        unknown = [m for m in self.models if m not in DEFAULT_MODELS]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; expected a subset of {list(DEFAULT_MODELS)}")
        for label in self.occasions:
            Occasion.parse(label)

    # -- construction --------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = copy.deepcopy(raw or {})
        flat: dict = {}
        nested_maps = {
            "dataset": ("sample_rate_hz", "duration_s", "split_sizes", "n_shift_series"),
            "windowing": ("history", "horizon", "train_stride", "eval_stride"),
            "metrics": ("n_fft",),
        }
        for section, keys in nested_maps.items():
            sub = raw.pop(section, {}) or {}
            bad = set(sub) - set(keys)
            if bad:
                raise ConfigError(f"unknown key(s) {sorted(bad)} in config section {section!r}")
            flat.update(sub)
        flat.update(raw)
        valid = {f.name for f in fields(cls)}
        bad = set(flat) - valid
        if bad:
            raise ConfigError(f"unknown config key(s): {sorted(bad)}")
        if "split_sizes" in flat:
            flat["split_sizes"] = tuple(int(s) for s in flat["split_sizes"])
        try:
            return cls(**flat)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping, got {type(raw).__name__}")
        return cls.from_dict(raw)

    def override(self, **kwargs) -> "RunConfig":
        """Copy with CLI-flag overrides applied (flags win over the file)."""
        provided = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **provided) if provided else self

    # -- resolution -----------------------------------------------------------
    def resolve_out_dir(self, flag_value: str | None = None) -> str:
        return flag_value or self.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "runs"

    def grid(self) -> SamplingGrid:
        return SamplingGrid(self.sample_rate_hz, self.duration_s)

    def family_ranges(self, family: str) -> FamilyRanges:
        base = default_ranges(family)
        overrides = self.ranges.get(family)
        if not overrides:
            return base
        merged = dict(base.intervals)
        for name, interval in overrides.items():
            if name not in merged:
                raise ConfigError(f"unknown range parameter {name!r} for family {family!r}")
            merged[name] = (float(interval[0]), float(interval[1]))
        return FamilyRanges(family, merged)

    def train_config(self, model: str) -> TrainConfig:
        base = default_train_config(model)
        overrides = self.training.get(model)
        if not overrides:
            return base
        valid = {f.name for f in fields(TrainConfig)}
        bad = set(overrides) - valid
        if bad:
            raise ConfigError(f"unknown training key(s) {sorted(bad)} for model {model!r}")
        return replace(base, **overrides)

    def echo(self) -> dict:
        """The fully resolved configuration, as embedded in outputs."""
        doc = asdict(self)
        doc["split_sizes"] = list(self.split_sizes)
        doc["training"] = {m: asdict(self.train_config(m)) for m in self.models}
        doc["ranges"] = {f: self.family_ranges(f).to_dict() for f in self.families}
        return doc

    def to_plan(self, out_dir: str | None = None) -> ExperimentPlan:
        resolved_out = self.resolve_out_dir(out_dir)
        return ExperimentPlan(
            families=list(self.families),
            models=list(self.models),
            occasions=[Occasion.parse(lbl) for lbl in self.occasions],
            policy=WindowingPolicy(self.history, self.horizon, self.train_stride, self.eval_stride),
            train_configs={m: self.train_config(m) for m in self.models},
            ranges={f: self.family_ranges(f) for f in self.families},
            grid=self.grid(),
            split_sizes=tuple(self.split_sizes),
            n_shift_series=self.n_shift_series,
            master_seed=self.seed,
            n_fft=self.n_fft,
            jobs=self.jobs,
            out_dir=resolved_out,
            data_dir=os.path.join(resolved_out, "datasets"),
            config_echo=self.echo(),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.echo(), fh, indent=2, sort_keys=True)
            fh.write("\n")
