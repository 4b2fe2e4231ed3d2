"""Command-line entry point.

Four subcommands drive the pipeline from a single config document:

* ``generate``: materialize clean datasets and shifted test sets on disk.
* ``run``: execute the families x models x occasions grid and write reports.
* ``stats``: fit the mixed-effects contrast model over a combined metrics CSV.
* ``plot-data``: project a finished run into tidy plot-ready CSVs.

Flags override config-file values; the output directory falls back to the
``TIMESYNTH_OUT`` environment variable when neither flag nor config names one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import OUTPUT_DIR_ENV, ConfigError, RunConfig
from .harness import DatasetStore, Occasion, report_path
from .lmm import METRIC_ALIASES, build_design, contrasts, fit_reml, fit_summary, read_metrics_csv
from .metrics import METRIC_NAMES


def _split_arg(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [part.strip() for part in value.split(",") if part.strip()]


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    return cfg.override(
        seed=args.seed,
        families=_split_arg(getattr(args, "families", None)),
        models=_split_arg(getattr(args, "models", None)),
        occasions=_split_arg(getattr(args, "occasions", None)),
        jobs=getattr(args, "jobs", None),
    )


def _shift_ids(cfg: RunConfig) -> list[str]:
    ids = []
    for label in cfg.occasions:
        occ = Occasion.parse(label)
        if occ.kind == "shift" and occ.shift_id != "none" and occ.shift_id not in ids:
            ids.append(occ.shift_id)
    return ids


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    plan = cfg.to_plan(args.out)
    store = DatasetStore(plan)
    for family in plan.families:
        store.clean(family)
        print(os.path.join(store.dataset_dir(family), "manifest.json"))
        for shift_id in _shift_ids(cfg):
            store.shifted(family, shift_id)
            print(os.path.join(store.dataset_dir(f"{family}__shift_{shift_id}"), "manifest.json"))
    return 0


def _print_summary_table(reports) -> None:
    """Mean/median of each metric per (occasion, model), pooled across families."""
    from collections import defaultdict

    pooled = defaultdict(lambda: defaultdict(list))
    for rep in reports:
        for entry in rep.per_series:
            for metric in METRIC_NAMES:
                pooled[(rep.occasion, rep.model)][metric].append(entry[metric])
    if not pooled:
        return
    header = f"{'occasion':<14}{'model':<10}" + "".join(
        f"{metric + ' mean':>18}{metric + ' median':>18}" for metric in METRIC_NAMES
    )
    print(header)
    print("-" * len(header))
    for (occasion, model) in sorted(pooled):
        cells = pooled[(occasion, model)]
        row = f"{occasion:<14}{model:<10}"
        for metric in METRIC_NAMES:
            values = np.array(cells[metric])
            row += f"{values.mean():>18.4f}{np.median(values):>18.4f}"
        print(row)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    plan = cfg.to_plan(args.out)
    if not args.generate:
        missing = []
        store = DatasetStore(plan)
        from .datasets import matches_existing

        for family in plan.families:
            directory = store.dataset_dir(family)
            if not matches_existing(directory, family, plan.ranges[family], plan.split_sizes, store.dataset_seed(family)):
                missing.append(directory)
        if missing:
            print(
                "missing or stale dataset(s):\n  " + "\n  ".join(missing) + "\nrun `sigbench generate` or pass --generate",
                file=sys.stderr,
            )
            return 2
    bundle = run_bundle(plan)
    _print_summary_table(bundle["reports"])
    failed = [s for s in bundle["cells"] if s["status"] != "ok"]
    if failed:
        print(f"\n{len(failed)} cell(s) failed:", file=sys.stderr)
        for s in failed:
            print(f"  ({s['family']}, {s['model']}, {s['occasion']}): {s['error']}", file=sys.stderr)
        return 1
    print(f"\ncombined metrics: {bundle['metrics_csv']}")
    return 0


def run_bundle(plan):
    from .harness import run_plan

    return run_plan(plan)


def cmd_stats(args) -> int:
    try:
        table = read_metrics_csv(args.metrics_csv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.metric not in METRIC_ALIASES:
        print(f"error: unknown metric {args.metric!r}; expected one of {sorted(METRIC_ALIASES)}", file=sys.stderr)
        return 2
    out_dir = args.out or os.path.dirname(os.path.abspath(args.metrics_csv))
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"contrasts_{args.metric}.csv")

    models = sorted(set(table["model"].tolist()))
    if len(models) < 2:
        print(f"warning: only one model ({models[0]}) in the table; no contrasts to compute", file=sys.stderr)
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("model,metric,coef,std_err,p_value\n")
        print(csv_path)
        return 0

    try:
        design = build_design(table, args.metric)
        fit = fit_reml(design)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = contrasts(fit)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("model,metric,coef,std_err,p_value\n")
        for row in rows:
            fh.write(f"{row['model']},{row['metric']},{row['coef']!r},{row['std_err']!r},{row['p_value']!r}\n")
    summary_path = os.path.join(out_dir, f"lmm_{args.metric}.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(fit_summary(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"{'model':<12}{'coef':>14}{'std_err':>14}{'p_value':>12}")
    for row in rows:
        print(f"{row['model']:<12}{row['coef']:>14.4f}{row['std_err']:>14.4f}{row['p_value']:>12.4g}")
    if fit.boundary:
        print("note: variance-ratio search ended at the bracket boundary", file=sys.stderr)
    print(csv_path)
    print(summary_path)
    return 0


PLOT_KINDS = ("horizon_mse", "per_series_mae", "shift_phase", "noise_phase")


def _load_cell_reports(run_dir: str) -> tuple[list[dict], list[str]]:
    summary_path = os.path.join(run_dir, "run_summary.json")
    if not os.path.exists(summary_path):
        return [], [f"{run_dir} has no run_summary.json (not a finished run directory?)"]
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    reports, missing = [], []
    for status in summary.get("cells", []):
        cell = (status["family"], status["model"], status["occasion"])
        if status["status"] != "ok":
            missing.append(f"cell {cell}: {status.get('error', 'failed')}")
            continue
        path = report_path(run_dir, cell)
        if not os.path.exists(path):
            missing.append(f"cell {cell}: report file {path} not found")
            continue
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    return reports, missing


def cmd_plotdata(args) -> int:
    reports, missing = _load_cell_reports(args.run_dir)
    if missing:
        print("incomplete run bundle:", file=sys.stderr)
        for item in missing:
            print(f"  {item}", file=sys.stderr)
        return 1
    out_dir = args.out or args.run_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"plotdata_{args.kind.replace('-', '_')}.csv")
    kind = args.kind.replace("-", "_")
    lines: list[str] = []
    if kind == "horizon_mse":
        lines.append("model,family,h,mse")
        for rep in sorted(reports, key=lambda r: (r["model"], r["family"])):
            if rep["occasion"] != "clean":
                continue
            for h, mse in enumerate(rep["horizon_mse"], start=1):
                lines.append(f"{rep['model']},{rep['family']},{h},{mse!r}")
    elif kind == "per_series_mae":
        lines.append("family,model,occasion,series_id,mae")
        for rep in sorted(reports, key=lambda r: (r["family"], r["model"], r["occasion"])):
            for entry in rep["per_series"]:
                lines.append(f"{rep['family']},{rep['model']},{rep['occasion']},{entry['series_id']},{entry['mae']!r}")
    elif kind in ("shift_phase", "noise_phase"):
        lines.append("family,model,occasion,series_id,phase_err_deg")
        wanted_prefix = "shift:" if kind == "shift_phase" else "noise:"
        for rep in sorted(reports, key=lambda r: (r["family"], r["model"], r["occasion"])):
            occ = rep["occasion"]
            # The clean cell doubles as the no-shift / no-noise baseline row.
            if not (occ.startswith(wanted_prefix) or occ == "clean"):
                continue
            label = "shift:none" if (occ == "clean" and kind == "shift_phase") else occ
            for entry in rep["per_series"]:
                lines.append(f"{rep['family']},{rep['model']},{label},{entry['series_id']},{entry['phase_err_deg']!r}")
    else:
        print(f"error: unknown plot kind {args.kind!r}; expected one of {PLOT_KINDS}", file=sys.stderr)
        return 2
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigbench", description="Synthetic harmonic forecasting benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_grid=True):
        p.add_argument("--config", help="YAML/JSON run configuration")
        p.add_argument("--out", help=f"output directory (fallback: config, then ${OUTPUT_DIR_ENV})")
        p.add_argument("--seed", type=int, help="master seed override")
        if with_grid:
            p.add_argument("--families", help="comma-separated family subset")

    p_gen = sub.add_parser("generate", help="materialize datasets on disk")
    add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_run = sub.add_parser("run", help="train and evaluate the full grid")
    add_common(p_run)
    p_run.add_argument("--models", help="comma-separated model subset")
    p_run.add_argument("--occasions", help="comma-separated occasion labels (clean, noise:<db>, shift:<id>)")
    p_run.add_argument("--jobs", type=int, help="parallel cells")
    p_run.add_argument("--generate", action="store_true", help="generate missing datasets before running")
    p_run.set_defaults(func=cmd_run)

    p_stats = sub.add_parser("stats", help="mixed-effects contrasts from a metrics CSV")
    p_stats.add_argument("metrics_csv", help="combined metrics table from `sigbench run`")
    p_stats.add_argument("metric", help="amplitude|mae|mse|frequency|freq_err_hz|phase|phase_err_deg")
    p_stats.add_argument("--out", help="output directory (default: alongside the CSV)")
    p_stats.set_defaults(func=cmd_stats)

    p_plot = sub.add_parser("plot-data", help="tidy plot-ready CSVs from a run directory")
    p_plot.add_argument("run_dir", help="a finished run directory")
    p_plot.add_argument("kind", help="|".join(PLOT_KINDS))
    p_plot.add_argument("--out", help="output directory (default: the run directory)")
    p_plot.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
