"""Command-line front end: generate datasets, run experiments, print tables.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 experiment failure
(some method failed on every trial).  All randomness flows from --seed
(fallback: the PTC_SEED environment variable, then 0).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .bench import KNOWN_METHODS, ExperimentConfig, run_experiment
from .problems import GENERATORS, save_dataset

PROBLEMS = tuple(GENERATORS)

_RUN_KEYS = {
    "problem": str, "methods": list, "alphas": list, "T": int, "d": int,
    "n": int, "trials": int, "seed": int, "test_count": int,
    "test_scale": float, "var_samples": int, "cvar_samples": int,
    "jobs": int, "out": str,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptc",
        description="Predict-then-calibrate robust contextual LP toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset (CSV + JSON sidecar)")
    gen.add_argument("--problem", choices=PROBLEMS, required=True)
    gen.add_argument("--T", type=int, required=True, help="number of samples")
    gen.add_argument("--d", type=int, default=0, help="covariate dimension")
    gen.add_argument("--n", type=int, default=0, help="objective dimension (knapsack)")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", default="data", help="output directory")

    run = sub.add_parser("run", help="run a benchmark experiment")
    run.add_argument("--config", help="JSON config file mirroring the flags")
    run.add_argument("--problem", choices=PROBLEMS)
    run.add_argument("--methods", help="comma-separated subset of: " + ",".join(KNOWN_METHODS))
    run.add_argument("--alphas", help="comma-separated risk levels")
    run.add_argument("--T", type=int)
    run.add_argument("--d", type=int)
    run.add_argument("--n", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--test-count", dest="test_count", type=int)
    run.add_argument("--test-scale", dest="test_scale", type=float,
                     help="scale factor on the per-trial test covariate count")
    run.add_argument("--var-samples", dest="var_samples", type=int)
    run.add_argument("--cvar-samples", dest="cvar_samples", type=int)
    run.add_argument("--jobs", type=int, help="parallel trial workers")
    run.add_argument("--out", help="report CSV path (default report.csv)")

    table = sub.add_parser("table", help="pretty-print a report CSV")
    table.add_argument("report", help="report CSV produced by `ptc run`")
    return parser


def _fallback_seed() -> int:
    env = os.environ.get("PTC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            pass
    return 0


def cmd_gen(args) -> int:
    defaults = {"toy": (4, 1), "shortest-path": (10, 40), "knapsack": (10, 20)}
    d0, n0 = defaults[args.problem]
    seed = args.seed if args.seed is not None else _fallback_seed()
    try:
        inst = GENERATORS[args.problem](args.T, args.d or d0, args.n or n0, seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        csv_path, meta_path = save_dataset(inst, args.out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {csv_path} and {meta_path}")
    return 0


def _merge_run_config(args) -> dict:
    merged: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            raise SystemExit(1)
        except json.JSONDecodeError as exc:
            print(f"config parse error: {exc}", file=sys.stderr)
            raise SystemExit(2)
        unknown = set(loaded) - set(_RUN_KEYS)
        if unknown:
            print(f"unknown config keys: {sorted(unknown)}", file=sys.stderr)
            raise SystemExit(2)
        merged.update(loaded)
    for key in _RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if isinstance(merged.get("methods"), str):
        merged["methods"] = [m for m in merged["methods"].split(",") if m]
    if isinstance(merged.get("alphas"), str):
        try:
            merged["alphas"] = [float(a) for a in merged["alphas"].split(",") if a]
        except ValueError:
            print("error: --alphas must be comma-separated numbers", file=sys.stderr)
            raise SystemExit(2)
    return merged


def cmd_run(args) -> int:
    merged = _merge_run_config(args)
    if not merged.get("problem"):
        print("error: --problem is required (flag or config file)", file=sys.stderr)
        return 2
    if not merged.get("alphas"):
        print("error: --alphas is required (flag or config file)", file=sys.stderr)
        return 2
    out = merged.pop("out", None) or "report.csv"
    merged.setdefault("seed", _fallback_seed())
    merged.setdefault("methods", ["ptc-b", "ptc-e", "ellipsoid"])
    merged["methods"] = tuple(merged["methods"])
    merged["alphas"] = tuple(merged["alphas"])
    try:
        config = ExperimentConfig(**merged)
        config = config.resolved()
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(config)
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    for (alpha, method), errors in sorted(report.failures.items()):
        print(f"warning: {method} at alpha={alpha} failed on {len(errors)} trial(s): "
              f"{errors[0]}", file=sys.stderr)
    dead = {
        method
        for alpha, method in report.failures
        if all(row["trials"] == 0 for row in report.rows if row["method"] == method)
    }
    if dead:
        print(f"error: methods failed on all trials: {sorted(dead)}", file=sys.stderr)
        return 3
    return 0


def _format_panel(title: str, alphas, methods, lookup) -> str:
    width = max(10, *(len(m) + 2 for m in methods))
    head = "alpha".ljust(8) + "".join(m.rjust(width) for m in methods)
    lines = [title, head, "-" * len(head)]
    for alpha in alphas:
        cells = []
        for m in methods:
            val = lookup.get((alpha, m))
            cells.append(("-" if val is None or val != val else f"{val:.4g}").rjust(width))
        lines.append(f"{alpha:<8g}" + "".join(cells))
    return "\n".join(lines)


def cmd_table(args) -> int:
    try:
        with open(args.report, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            fieldnames = reader.fieldnames
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    required = {"alpha", "method", "avg_var", "avg_coverage"}
    if not rows or not fieldnames or not required.issubset(fieldnames):
        print("error: report CSV is empty or malformed", file=sys.stderr)
        return 2
    try:
        parsed = [
            (float(r["alpha"]), r["method"], float(r["avg_var"]), float(r["avg_coverage"]))
            for r in rows
        ]
    except (KeyError, ValueError):
        print("error: report CSV is malformed", file=sys.stderr)
        return 2
    alphas = sorted({p[0] for p in parsed})
    methods = list(dict.fromkeys(p[1] for p in parsed))  # CSV order
    var_lookup = {(a, m): v for a, m, v, _ in parsed}
    cov_lookup = {(a, m): c for a, m, _, c in parsed}
    print(_format_panel("Average VaR", alphas, methods, var_lookup))
    print()
    print(_format_panel("Average coverage", alphas, methods, cov_lookup))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "run":
            return cmd_run(args)
        return cmd_table(args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
