"""Command-line entry point (``lfpp``).

Output columns
--------------
crossing rows      cell, n, xi, seed_index, value, wall_time, config_hash, version
levelset rows      cell, n, u, seed_index, value (0/1), wall_time, config_hash, version
excursion rows     cell, n, u, seed_index, value (0/1), count, wall_time, config_hash, version
multiscale rows    cell, seed_index, n, xi, z, records, wall_time, config_hash, version
estimate-q CSV     xi, n, count, median_log2, q1_log2, q3_log2, median_se, slope, slope_se, r2, q_hat, q_se

Exit codes: 0 success, 1 failed verification, 2 invalid config, 3 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .field import sample_gff, write_field
from .harness import (ConfigError, ExperimentConfig, InsufficientDataError, ResourceCapError,
                      estimate_exponent, read_rows, run_experiment)
from .lattice import make_box
from .rng import stream

EXPERIMENTS = {"crossing": "crossing", "circuit-prob": "levelset",
               "excursions": "excursion", "multiscale": "multiscale"}


def parse_range(text: str) -> tuple[int, int]:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return int(a), int(b)
        return int(text), int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None


def parse_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--n", type=parse_range, help="scale range A..B")
    p.add_argument("--xi", type=parse_list, help="comma-separated xi values")
    p.add_argument("--u", type=parse_list, help="comma-separated u values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lfpp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-field", help="sample one field and write it to a file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0, help="stream index")
    p.add_argument("--out", required=True, help=".csv for text, anything else for raw binary")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {EXPERIMENTS[name]} experiment")
        _common(p)
        if name == "multiscale":
            p.add_argument("--K", type=int)
            p.add_argument("--C", type=float)
            p.add_argument("--delta", type=float)
            p.add_argument("--centers", choices=["grid", "origin"])

    p = sub.add_parser("estimate-q", help="fit the distance exponent from crossing samples")
    p.add_argument("inputs", nargs="+", help="crossing JSONL files")
    p.add_argument("--xi", type=parse_list, help="xi values to fit (default: all present)")
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--out", help="summary CSV path")

    p = sub.add_parser("verify", help="run the oracle and invariant checks")
    p.add_argument("--full", action="store_true", help="use the full acceptance sample sizes")
    p.add_argument("--seed", type=int, default=20240601)
    return parser


def config_from_args(kind: str, args) -> ExperimentConfig:
    base: dict = {"kind": kind}
    if args.config:
        base = ExperimentConfig.load(args.config).to_dict()
        if base["kind"] != kind:
            raise ConfigError(f"config kind {base['kind']!r} does not match command ({kind!r})")
    overrides = {"master_seed": args.seed, "trials": args.trials, "n_range": args.n,
                 "xi_list": args.xi, "u_list": args.u, "out": args.out, "workers": args.workers}
    for key in ("K", "C", "delta", "centers"):
        overrides[key] = getattr(args, key, None)
    base.update({k: v for k, v in overrides.items() if v is not None})
    if "n_range" not in base:
        raise ConfigError("--n is required (or n_range in --config)")
    return ExperimentConfig.from_dict(base)


def cmd_experiment(kind: str, args) -> int:
    cfg = config_from_args(kind, args)
    res = run_experiment(cfg)
    print(f"{len(res.rows)} rows -> {res.raw_path}")
    print(f"canonical -> {res.canonical_path}")
    print(f"summary -> {res.summary_path}")
    print(res.summary_path.read_text(), end="")
    return 0


def cmd_estimate(args) -> int:
    rows = []
    for path in args.inputs:
        data, complete = read_rows(path)
        if not complete:
            print(f"error: {path} is marked incomplete", file=sys.stderr)
            return 2
        rows.extend(data)
    xis = args.xi or sorted({r["xi"] for r in rows if r.get("xi", 0) > 0})
    table = []
    for xi in xis:
        try:
            est = estimate_exponent(rows, xi, min_samples=args.min_samples)
        except InsufficientDataError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"xi={xi:g}  slope={est.slope:.4f} +/- {est.slope_se:.4f}  R2={est.r2:.3f}  "
              f"Q_hat={est.q_hat:.4f} +/- {est.q_se:.4f}")
        for p in est.per_n:
            table.append({"xi": xi, **p, "slope": est.slope, "slope_se": est.slope_se,
                          "r2": est.r2, "q_hat": est.q_hat, "q_se": est.q_se})
    if args.out:
        cols = ["xi", "n", "count", "median_log2", "q1_log2", "q3_log2", "median_se",
                "slope", "slope_se", "r2", "q_hat", "q_se"]
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(table)
    return 0


def cmd_sample(args) -> int:
    if not 1 <= args.n <= 11:
        raise ConfigError("--n must be in 1..11")
    f = sample_gff(make_box(args.n), stream(args.seed, "sample-field", args.n, args.index))
    write_field(args.out, f)
    print(f"{f.box.width}x{f.box.width} field -> {args.out}  (max {np.max(f.values):.3f})")
    return 0


def cmd_verify(args) -> int:
    from .checks import run_checks
    ok = True
    for res in run_checks(full=args.full, seed=args.seed):
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sample-field":
            return cmd_sample(args)
        if args.command == "estimate-q":
            return cmd_estimate(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_experiment(EXPERIMENTS[args.command], args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
