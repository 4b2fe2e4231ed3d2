"""Leakage-free dataset assembly and the on-disk dataset store.

A dataset is a set of rendered series split into train/val/test with strictly
disjoint parameter tuples. Per-series seeds are derived from the master seed
by mixing the series index (and redraw counter) into a ``SeedSequence``, so
enlarging a dataset never reshuffles existing series.

On disk, a dataset is one directory holding ``manifest.json`` plus one
``series_<id>.csv`` per series (header ``t,value``, ``%.17g`` precision).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .signals import (
    FAMILY_PARAM_NAMES,
    FamilyRanges,
    GenerationError,
    SamplingGrid,
    SignalSpec,
    sample_spec,
)

SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_SIZES = (70, 10, 20)

_MAX_COLLISION_REDRAWS = 100


@dataclass
class SeriesRecord:
    """A rendered series with its provenance."""

    series_id: str
    spec: SignalSpec
    split: str
    seed_key: tuple[int, ...]
    values: np.ndarray
    perturbation: dict | None = None


@dataclass
class DatasetManifest:
    """Everything needed to regenerate a dataset bit-identically."""

    family: str
    ranges: FamilyRanges
    master_seed: int
    split_sizes: tuple[int, ...]
    grid: SamplingGrid
    series: list[dict] = field(default_factory=list)  # {series_id, split, seed_key, params}
    perturbation: dict | None = None

    def ids_for(self, split: str) -> list[str]:
        return [e["series_id"] for e in self.series if e["split"] == split]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "ranges": self.ranges.to_dict(),
            "master_seed": self.master_seed,
            "split_sizes": list(self.split_sizes),
            "grid": {"sample_rate_hz": self.grid.sample_rate_hz, "duration_s": self.grid.duration_s},
            "perturbation": self.perturbation,
            "series": self.series,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            family=d["family"],
            ranges=FamilyRanges.from_dict(d["family"], d["ranges"]),
            master_seed=int(d["master_seed"]),
            split_sizes=tuple(int(s) for s in d["split_sizes"]),
            grid=SamplingGrid(float(d["grid"]["sample_rate_hz"]), float(d["grid"]["duration_s"])),
            series=d["series"],
            perturbation=d.get("perturbation"),
        )


def series_seed_key(master_seed: int, index: int, retry: int = 0) -> tuple[int, ...]:
    """Splittable per-series seed: master seed with index and retry mixed in."""
    return (int(master_seed), int(index), int(retry))


def build_dataset(
    family: str,
    ranges: FamilyRanges,
    split_sizes: tuple[int, ...] = DEFAULT_SPLIT_SIZES,
    master_seed: int = 0,
    grid: SamplingGrid | None = None,
    split_labels: tuple[str, ...] = SPLITS,
) -> tuple[DatasetManifest, list[SeriesRecord]]:
    """Generate ``sum(split_sizes)`` series with pairwise-distinct parameters.

    Series are assigned to splits by position (train block, then val, then
    test), so the multiset of parameter tuples is disjoint across splits by
    the stronger global-uniqueness guarantee. A tuple collision is redrawn up
    to 100 times with the retry counter mixed into the seed; persistent
    collisions indicate a degenerate (point-interval) configuration and fail
    loudly with the colliding seeds.
    """
    if any(s <= 0 for s in split_sizes):
        raise ValueError(f"split sizes must be positive, got {split_sizes}")
    if len(split_sizes) != len(split_labels):
        raise ValueError(f"{len(split_sizes)} split sizes for {len(split_labels)} labels")
    grid = grid or SamplingGrid()
    total = sum(split_sizes)
    boundaries = np.cumsum(split_sizes)

    seen: dict[tuple[float, ...], tuple[int, ...]] = {}
    manifest = DatasetManifest(family, ranges, int(master_seed), tuple(split_sizes), grid)
    records: list[SeriesRecord] = []
    for index in range(total):
        split = split_labels[int(np.searchsorted(boundaries, index, side="right"))]
        spec = None
        key = series_seed_key(master_seed, index)
        for retry in range(_MAX_COLLISION_REDRAWS + 1):
            key = series_seed_key(master_seed, index, retry)
            candidate = sample_spec(family, ranges, np.random.SeedSequence(key), grid)
            if candidate.param_tuple() not in seen:
                spec = candidate
                break
        if spec is None:
            raise GenerationError(
                f"parameter tuple collision persisted for series {index} after "
                f"{_MAX_COLLISION_REDRAWS} redraws (seed {key} collides with "
                f"{seen[candidate.param_tuple()]}); the ranges are degenerate"
            )
        seen[spec.param_tuple()] = key
        series_id = f"{family}-{index:03d}"
        manifest.series.append(
            {
                "series_id": series_id,
                "split": split,
                "seed_key": list(key),
                "params": spec.param_dict(),
            }
        )
        records.append(SeriesRecord(series_id, spec, split, key, spec.render()))
    return manifest, records


def save_dataset(directory: str, manifest: DatasetManifest, records: list[SeriesRecord]) -> str:
    """Write ``manifest.json`` and per-series CSVs; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    for rec in records:
        path = os.path.join(directory, f"series_{rec.series_id}.csv")
        t = rec.spec.grid.times()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,value\n")
            for tk, vk in zip(t, rec.values):
                fh.write(f"{tk:.17g},{vk:.17g}\n")
    manifest_path = os.path.join(directory, "manifest.json")
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    return manifest_path


def load_manifest(directory: str) -> DatasetManifest:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        return DatasetManifest.from_dict(json.load(fh))


def load_series_values(directory: str, series_id: str) -> np.ndarray:
    path = os.path.join(directory, f"series_{series_id}.csv")
    return np.loadtxt(path, delimiter=",", skiprows=1, usecols=1, dtype=np.float64)


def load_dataset(directory: str) -> tuple[DatasetManifest, list[SeriesRecord]]:
    """Rebuild SeriesRecords from a stored dataset directory."""
    manifest = load_manifest(directory)
    records = []
    for entry in manifest.series:
        params = _params_from_dict(manifest.family, entry["params"])
        spec = SignalSpec(manifest.family, params, manifest.grid)
        records.append(
            SeriesRecord(
                series_id=entry["series_id"],
                spec=spec,
                split=entry["split"],
                seed_key=tuple(entry["seed_key"]),
                values=load_series_values(directory, entry["series_id"]),
                perturbation=manifest.perturbation,
            )
        )
    return manifest, records


def _params_from_dict(family: str, d: dict):
    from . import signals

    cls = {
        "drift": signals.DriftHarmonicParams,
        "spm": signals.SpmHarmonicParams,
        "dpm": signals.DpmHarmonicParams,
    }[family]
    return cls(**{name: float(d[name]) for name in FAMILY_PARAM_NAMES[family]})


def matches_existing(directory: str, family: str, ranges: FamilyRanges, split_sizes, master_seed: int) -> bool:
    """True when a stored manifest matches the requested generation inputs."""
    path = os.path.join(directory, "manifest.json")
    if not os.path.exists(path):
        return False
    try:
        manifest = load_manifest(directory)
    except (OSError, ValueError, KeyError, json.JSONDecodeError):
        return False
    return (
        manifest.family == family
        and manifest.ranges.to_dict() == ranges.to_dict()
        and tuple(manifest.split_sizes) == tuple(split_sizes)
        and manifest.master_seed == int(master_seed)
    )
