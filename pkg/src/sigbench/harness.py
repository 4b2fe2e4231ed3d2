"""End-to-end experiment runner.

A *cell* is one (family, model, occasion) triple: the model is trained on the
family's clean train split, early-stopped on the clean validation split, and
evaluated on the occasion's test series (clean, noise-injected, or
frequency-shifted). Occasions never touch training: the clean-train rule and
the train/eval series-id disjointness are asserted for every cell.

All seeds are derived from the plan's master seed with string tags and
indices mixed in, so cells are order-free and reruns are byte-identical.
"""

from __future__ import annotations

import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import datasets as ds
from .metrics import METRIC_NAMES, AggregateScore, SeriesScore, aggregate, score_window
from .models import Forecaster, build_model
from .perturb import NoiseSpec, ShiftSpec, build_shifted_testset, inject_noise
from .signals import FamilyRanges, SamplingGrid, default_ranges
from .training import TrainConfig, TrainResult, default_train_config, train, with_seed

CSV_HEADER = "family,model,occasion,series_id,mae,mse,freq_err_hz,phase_err_deg"


def stable_seed(*parts) -> int:
    """Deterministic 32-bit seed from a mix of ints and strings."""
    entropy = [
        int(p) if isinstance(p, (int, np.integer)) else zlib.crc32(str(p).encode("utf-8"))
        for p in parts
    ]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class WindowingPolicy:
    """History/horizon lengths and strides for window extraction."""

    history: int = 50
    horizon: int = 100
    train_stride: int = 1
    eval_stride: int = 25

    def __post_init__(self) -> None:
        if self.history < 1 or self.horizon < 1:
            raise ValueError("history and horizon must be positive")
        if self.train_stride < 1 or self.eval_stride < 1:
            raise ValueError("strides must be >= 1")


def make_windows(values: np.ndarray, history: int, horizon: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """(history, future) window pairs stepping by ``stride``.

    Yields floor((len - history - horizon) / stride) + 1 pairs; a series
    shorter than history + horizon is rejected.
    """
    x = np.asarray(values, dtype=np.float64)
    span = history + horizon
    if x.ndim != 1 or x.size < span:
        raise ValueError(f"series of length {x.size} is too short for history+horizon={span}")
    view = np.lib.stride_tricks.sliding_window_view(x, span)[::stride]
    return np.ascontiguousarray(view[:, :history]), np.ascontiguousarray(view[:, history:])


def pool_windows(records: list[ds.SeriesRecord], history: int, horizon: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Window pairs pooled across series, ordered by series then offset."""
    xs, ys = [], []
    for rec in records:
        X, Y = make_windows(rec.values, history, horizon, stride)
        xs.append(X)
        ys.append(Y)
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)


@dataclass(frozen=True)
class Occasion:
    """One experimental condition: clean, a noise level, or a frequency shift."""

    kind: str  # "clean" | "noise" | "shift"
    snr_db: float | None = None
    shift_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "clean":
            if self.snr_db is not None or self.shift_id is not None:
                raise ValueError("clean occasion takes no parameters")
        elif self.kind == "noise":
            if self.snr_db is None:
                raise ValueError("noise occasion needs snr_db")
        elif self.kind == "shift":
            if self.shift_id is None:
                raise ValueError("shift occasion needs shift_id")
        else:
            raise ValueError(f"unknown occasion kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "clean":
            return "clean"
        if self.kind == "noise":
            return f"noise:{self.snr_db:g}"
        return f"shift:{self.shift_id}"

    @classmethod
    def parse(cls, label: str) -> "Occasion":
        label = label.strip()
        if label == "clean":
            return cls("clean")
        if label.startswith("noise:"):
            return cls("noise", snr_db=float(label.split(":", 1)[1]))
        if label.startswith("shift:"):
            return cls("shift", shift_id=label.split(":", 1)[1])
        raise ValueError(f"cannot parse occasion {label!r} (expected clean, noise:<db>, or shift:<id>)")


DEFAULT_OCCASIONS = tuple(
    Occasion.parse(s)
    for s in ("clean", "noise:40", "noise:30", "noise:20", "shift:shift1", "shift:shift2", "shift:shift3", "shift:shift4")
)


@dataclass
class ExperimentPlan:
    """The families x models x occasions grid plus everything needed to run it."""

    families: list[str] = field(default_factory=lambda: ["drift", "spm", "dpm"])
    models: list[str] = field(default_factory=lambda: ["linear", "dlinear", "fits", "mlp"])
    occasions: list[Occasion] = field(default_factory=lambda: list(DEFAULT_OCCASIONS))
    policy: WindowingPolicy = field(default_factory=WindowingPolicy)
    train_configs: dict[str, TrainConfig] = field(default_factory=dict)
    ranges: dict[str, FamilyRanges] = field(default_factory=dict)
    grid: SamplingGrid = field(default_factory=SamplingGrid)
    split_sizes: tuple[int, ...] = ds.DEFAULT_SPLIT_SIZES
    n_shift_series: int = 20
    master_seed: int = 0
    n_fft: int = 4096
    jobs: int = 1
    out_dir: str | None = None
    data_dir: str | None = None
    config_echo: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for family in self.families:
            self.ranges.setdefault(family, default_ranges(family))
        for model in self.models:
            self.train_configs.setdefault(model, default_train_config(model))

    def cells(self) -> list[tuple[str, str, Occasion]]:
        return [(f, m, o) for f in self.families for m in self.models for o in self.occasions]


class DatasetStore:
    """Resolves clean and shifted datasets, from disk when present.

    With a root directory, datasets are loaded from ``<root>/<name>/`` when
    the stored manifest matches the requested inputs and are generated (and
    saved) otherwise. Without a root, generation is in-memory.
    """

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.root = plan.data_dir
        self._cache: dict[str, tuple[ds.DatasetManifest, list[ds.SeriesRecord]]] = {}

    def dataset_seed(self, family: str, shift_id: str | None = None) -> int:
        if shift_id is None:
            return stable_seed(self.plan.master_seed, "dataset", family)
        return stable_seed(self.plan.master_seed, "dataset", family, "shift", shift_id)

    def dataset_dir(self, name: str) -> str | None:
        return os.path.join(self.root, name) if self.root else None

    def clean(self, family: str) -> tuple[ds.DatasetManifest, list[ds.SeriesRecord]]:
        if family in self._cache:
            return self._cache[family]
        ranges = self.plan.ranges[family]
        seed = self.dataset_seed(family)
        directory = self.dataset_dir(family)
        if directory and ds.matches_existing(directory, family, ranges, self.plan.split_sizes, seed):
            pair = ds.load_dataset(directory)
        else:
            pair = ds.build_dataset(family, ranges, self.plan.split_sizes, seed, self.plan.grid)
            if directory:
                ds.save_dataset(directory, *pair)
        self._cache[family] = pair
        return pair

    def shifted(self, family: str, shift_id: str) -> tuple[ds.DatasetManifest, list[ds.SeriesRecord]]:
        key = f"{family}__shift_{shift_id}"
        if key in self._cache:
            return self._cache[key]
        ranges = self.plan.ranges[family].with_frequency_interval(
            ShiftSpec(family, shift_id).frequency_interval
        )
        seed = self.dataset_seed(family, shift_id)
        directory = self.dataset_dir(key)
        if directory and ds.matches_existing(directory, family, ranges, (self.plan.n_shift_series,), seed):
            pair = ds.load_dataset(directory)
        else:
            pair = build_shifted_testset(
                family,
                ShiftSpec(family, shift_id),
                n_series=self.plan.n_shift_series,
                master_seed=seed,
                train_ranges=self.plan.ranges[family],
                grid=self.plan.grid,
            )
            if directory:
                ds.save_dataset(directory, *pair)
        self._cache[key] = pair
        return pair


def split_records(records: list[ds.SeriesRecord], split: str) -> list[ds.SeriesRecord]:
    return [r for r in records if r.split == split]


def train_cell_model(plan: ExperimentPlan, store: DatasetStore, family: str, model_name: str) -> tuple[Forecaster, TrainResult]:
    """Train one forecaster on a family's clean train split."""
    _, records = store.clean(family)
    policy = plan.policy
    train_recs = split_records(records, "train")
    val_recs = split_records(records, "val")
    train_w = pool_windows(train_recs, policy.history, policy.horizon, policy.train_stride)
    val_w = pool_windows(val_recs, policy.history, policy.horizon, policy.train_stride)
    seed = stable_seed(plan.master_seed, "train", family, model_name)
    kwargs = {"sample_rate_hz": plan.grid.sample_rate_hz} if model_name == "fits" else {}
    model = build_model(model_name, policy.history, policy.horizon, seed=seed, **kwargs)
    cfg = with_seed(plan.train_configs[model_name], seed)
    result = train(model, train_w, val_w, cfg)
    return model, result


def evaluation_records(plan: ExperimentPlan, store: DatasetStore, family: str, occasion: Occasion) -> list[ds.SeriesRecord]:
    """The occasion's evaluation series (never used for training)."""
    if occasion.kind == "shift" and occasion.shift_id != "none":
        _, records = store.shifted(family, occasion.shift_id)
        return list(records)
    _, records = store.clean(family)
    test_recs = split_records(records, "test")
    if occasion.kind == "noise":
        noisy = []
        for rec in test_recs:
            seed = stable_seed(plan.master_seed, "noise", family, int(round(occasion.snr_db * 1000)), rec.series_id)
            noisy.append(inject_noise(rec, NoiseSpec(occasion.snr_db, seed=seed)))
        return noisy
    return test_recs  # clean, or the identity shift


@dataclass
class ForecastReport:
    """Scores for one (family, model, occasion) cell."""

    family: str
    model: str
    occasion: str
    per_series: list[dict]
    aggregate_mean: dict[str, float]
    aggregate_median: dict[str, float]
    horizon_mse: list[float]
    train_info: dict
    seeds: dict
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "model": self.model,
            "occasion": self.occasion,
            "per_series": self.per_series,
            "aggregate": {"mean": self.aggregate_mean, "median": self.aggregate_median},
            "horizon_mse": self.horizon_mse,
            "train_info": self.train_info,
            "seeds": self.seeds,
            "config": self.config_echo,
        }


def score_records(
    model: Forecaster, records: list[ds.SeriesRecord], policy: WindowingPolicy, sample_rate_hz: float, n_fft: int
) -> tuple[list[SeriesScore], AggregateScore, np.ndarray]:
    """Score a frozen model over each series; also return horizon-wise MSE."""
    series_scores = []
    sq_sum = np.zeros(policy.horizon)
    n_windows = 0
    for rec in records:
        X, Y = make_windows(rec.values, policy.history, policy.horizon, policy.eval_stride)
        pred = model.forward(X)
        windows = tuple(
            score_window(pred[i], Y[i], sample_rate_hz, n_fft) for i in range(X.shape[0])
        )
        series_scores.append(SeriesScore(rec.series_id, windows))
        sq_sum += ((pred - Y) ** 2).sum(axis=0)
        n_windows += X.shape[0]
    return series_scores, aggregate(series_scores), sq_sum / n_windows


def run_cell(
    plan: ExperimentPlan,
    store: DatasetStore,
    family: str,
    model_name: str,
    occasion: Occasion,
    trained: tuple[Forecaster, TrainResult] | None = None,
) -> ForecastReport:
    """Train (unless given a trained model) and evaluate one cell."""
    try:
        if trained is None:
            trained = train_cell_model(plan, store, family, model_name)
        model, result = trained

        _, clean_records = store.clean(family)
        train_ids = {r.series_id for r in split_records(clean_records, "train")}
        val_ids = {r.series_id for r in split_records(clean_records, "val")}
        eval_recs = evaluation_records(plan, store, family, occasion)
        eval_ids = {r.series_id for r in eval_recs}
        leaked = (train_ids | val_ids) & eval_ids
        if leaked:
            raise RuntimeError(f"leakage guard tripped: series {sorted(leaked)} appear in training and evaluation")
        if any(r.perturbation is not None for r in split_records(clean_records, "train")):
            raise RuntimeError("clean-train rule violated: perturbed series in the train split")

        series_scores, agg, horizon_mse = score_records(
            model, eval_recs, plan.policy, plan.grid.sample_rate_hz, plan.n_fft
        )
        per_series = [
            {"series_id": s.series_id, "n_windows": s.n_windows, **{m: s.mean(m) for m in METRIC_NAMES}}
            for s in series_scores
        ]
        return ForecastReport(
            family=family,
            model=model_name,
            occasion=occasion.label,
            per_series=per_series,
            aggregate_mean=agg.mean,
            aggregate_median=agg.median,
            horizon_mse=[float(v) for v in horizon_mse],
            train_info={
                "epochs_run": result.epochs_run,
                "best_epoch": result.best_epoch,
                "best_val_mse": result.best_val_mse,
            },
            seeds={
                "master": plan.master_seed,
                "dataset": store.dataset_seed(family),
                "train": stable_seed(plan.master_seed, "train", family, model_name),
            },
            config_echo=plan.config_echo,
        )
    except Exception as exc:
        raise CellError(family, model_name, occasion.label, exc) from exc


class CellError(RuntimeError):
    """A cell failure, tagged with its grid coordinates."""

    def __init__(self, family: str, model: str, occasion: str, cause: Exception):
        super().__init__(f"cell ({family}, {model}, {occasion}) failed: {cause}")
        self.family = family
        self.model = model
        self.occasion = occasion
        self.cause = cause


def _atomic_write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _occasion_filename(label: str) -> str:
    return label.replace(":", "-")


def report_path(out_dir: str, report_or_cell) -> str:
    if isinstance(report_or_cell, ForecastReport):
        family, model, occ = report_or_cell.family, report_or_cell.model, report_or_cell.occasion
    else:
        family, model, occ = report_or_cell
    return os.path.join(out_dir, "cells", f"{family}__{model}__{_occasion_filename(occ)}.json")


def write_report(out_dir: str, report: ForecastReport) -> str:
    path = report_path(out_dir, report)
    _atomic_write(path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def combined_rows(reports: list[ForecastReport]) -> list[str]:
    """Long-format CSV rows, deterministically sorted."""
    rows = []
    for rep in reports:
        for entry in rep.per_series:
            rows.append(
                (
                    rep.family,
                    rep.model,
                    rep.occasion,
                    entry["series_id"],
                    *(repr(float(entry[m])) for m in METRIC_NAMES),
                )
            )
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return [",".join(r) for r in rows]


def write_combined_csv(out_dir: str, reports: list[ForecastReport]) -> str:
    path = os.path.join(out_dir, "metrics.csv")
    _atomic_write(path, "\n".join([CSV_HEADER, *combined_rows(reports)]) + "\n")
    return path


def run_plan(plan: ExperimentPlan) -> dict:
    """Execute every cell of the plan; cells are independent and order-free.

    Each (family, model) pair is trained once on the clean train split and
    reused across its occasions. Per-cell failures are recorded, not raised;
    the returned bundle marks incomplete cells.
    """
    store = DatasetStore(plan)
    pairs = [(f, m) for f in plan.families for m in plan.models]

    # Datasets are materialized up front so any worker threads only read.
    for family in plan.families:
        store.clean(family)
    for family, _, occ in plan.cells():
        if occ.kind == "shift" and occ.shift_id != "none":
            store.shifted(family, occ.shift_id)

    def _train(pair):
        return train_cell_model(plan, store, *pair)

    trained: dict[tuple[str, str], tuple[Forecaster, TrainResult]] = {}
    errors: dict[tuple[str, str], str] = {}
    if plan.jobs > 1:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(lambda p: _safe(_train, p), pairs))
    else:
        outcomes = [_safe(_train, p) for p in pairs]
    for pair, (result, err) in zip(pairs, outcomes):
        if err is None:
            trained[pair] = result
        else:
            errors[pair] = err

    reports: list[ForecastReport] = []
    statuses = []

    def _run(cell):
        family, model_name, occ = cell
        return run_cell(plan, store, family, model_name, occ, trained=trained[(family, model_name)])

    cells = plan.cells()
    runnable = [c for c in cells if (c[0], c[1]) in trained]
    if plan.jobs > 1:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(lambda c: _safe(_run, c), runnable))
    else:
        outcomes = [_safe(_run, c) for c in runnable]

    outcome_by_cell = dict(zip(runnable, outcomes))
    for cell in cells:
        family, model_name, occ = cell
        if (family, model_name) in errors:
            statuses.append(
                {"family": family, "model": model_name, "occasion": occ.label, "status": "failed", "error": errors[(family, model_name)]}
            )
            continue
        report, err = outcome_by_cell[cell]
        if err is not None:
            statuses.append({"family": family, "model": model_name, "occasion": occ.label, "status": "failed", "error": err})
            continue
        reports.append(report)
        statuses.append({"family": family, "model": model_name, "occasion": occ.label, "status": "ok"})
        if plan.out_dir:
            write_report(plan.out_dir, report)

    bundle = {
        "master_seed": plan.master_seed,
        "cells": statuses,
        "complete": all(s["status"] == "ok" for s in statuses),
        "config": plan.config_echo,
    }
    if plan.out_dir:
        bundle["metrics_csv"] = write_combined_csv(plan.out_dir, reports)
        _atomic_write(os.path.join(plan.out_dir, "run_summary.json"), json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    bundle["reports"] = reports
    return bundle


def _safe(fn, arg):
    try:
        return fn(arg), None
    except Exception as exc:  # noqa: BLE001 - cell isolation
        return None, str(exc)
