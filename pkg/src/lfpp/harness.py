"""Batch experiment runner: configuration, seeding, parallel workers and persistence.

Every run writes three files into the output directory:

``<kind>.jsonl``
    raw rows, appended in completion order.  The first record is an
    ``incomplete`` marker and a ``complete`` marker is appended at the end,
    so a truncated file is recognisable.
``<kind>.canonical.jsonl``
    the same rows without timing fields, sorted by ``(cell, seed_index)``.
    Byte-identical for a given config and seed at any worker count.
``<kind>_summary.csv``
    one line per cell.

Trial ``t`` of scale ``n`` always draws from ``stream(seed, kind, n, t)``,
so the values do not depend on how trials are split across workers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .excursions import _simulate, union_disconnects
from .field import sample_gff
from .lattice import make_annulus, make_box
from .levelset import circuit_indicators
from .metric import LfppWeights, distance_across
from .multiscale import MultiscaleConfig, center_grid, scale_report
from .rng import stream
from .stats import line_fit, median_se, proportion

KINDS = ("crossing", "levelset", "excursion", "multiscale")
MAX_N = 11
WORKER_ENV = "LFPP_WORKERS"

# columns of the summary CSVs, in order
SUMMARY_COLUMNS = {
    "crossing": ["n", "xi", "count", "median_log2", "q1_log2", "q3_log2"],
    "levelset": ["n", "u", "count", "p", "wilson_low", "wilson_high"],
    "excursion": ["n", "u", "count", "p", "wilson_low", "wilson_high", "mean_excursions"],
    "multiscale": ["n", "xi", "reports", "centers", "frac_scales_ok", "mean_zero_crossing"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class ResourceCapError(RuntimeError):
    """Requested work is above the configured cap (CLI exit code 3)."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n_range: tuple[int, int]
    xi_list: tuple[float, ...] = (0.4,)
    u_list: tuple[float, ...] = (1.0,)
    trials: int = 100
    master_seed: int = 0
    workers: int = 1
    out: str = "lfpp-out"
    chunk: int = 10
    K: int = 4
    C: float = 1.0
    delta: float = 0.25
    centers: str = "grid"
    max_work: float = 5e10

    def __post_init__(self):
        object.__setattr__(self, "n_range", tuple(int(v) for v in self.n_range))
        object.__setattr__(self, "xi_list", tuple(float(v) for v in self.xi_list))
        object.__setattr__(self, "u_list", tuple(float(v) for v in self.u_list))

    @property
    def n_values(self) -> list[int]:
        return list(range(self.n_range[0], self.n_range[1] + 1))

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if len(self.n_range) != 2 or self.n_range[0] > self.n_range[1]:
            raise ConfigError(f"bad n_range {self.n_range}")
        if self.n_range[0] < 2:
            raise ConfigError("n must be >= 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1 or self.chunk < 1:
            raise ConfigError("workers and chunk must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if not self.xi_list or any(not math.isfinite(x) or x < 0 for x in self.xi_list):
            raise ConfigError("xi values must be finite and nonnegative")
        if self.kind != "crossing" and any(x == 0 for x in self.xi_list):
            raise ConfigError("xi must be positive")
        if not self.u_list or any(not math.isfinite(u) or u <= 0 for u in self.u_list):
            raise ConfigError("u values must be positive")
        if self.kind == "multiscale":
            if self.centers not in ("grid", "origin"):
                raise ConfigError("centers must be 'grid' or 'origin'")
            try:
                cfg = MultiscaleConfig(self.K, self.C, self.delta)
                for n in self.n_values:
                    cfg.check(n)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        elif self.kind != "crossing" and self.n_range[0] < 3:
            raise ConfigError("annulus experiments need n >= 3")
        elif self.kind == "crossing" and self.n_range[0] < 3:
            raise ConfigError("the scale-n annulus is empty for n < 3")

    def work_estimate(self) -> float:
        """Rough vertex-operations count used for the resource cap."""
        per = {"crossing": len(self.xi_list) * 20, "levelset": len(self.u_list) * 2,
               "excursion": len(self.u_list) * 40, "multiscale": len(self.xi_list) * 40}[self.kind]
        total = 0.0
        for n in self.n_values:
            size = (2 ** (n + 1) + 1) ** 2
            if self.kind == "multiscale":
                mult = len(center_grid(n, self.K)) if self.centers == "grid" else 1
                total += self.trials * mult * per * (2 ** (n - math.ceil(self.K / 2) + 1) + 1) ** 2
                total += self.trials * size
            else:
                total += self.trials * per * size
        return total

    def check_caps(self) -> None:
        if self.n_range[1] > MAX_N:
            raise ResourceCapError(f"n={self.n_range[1]} exceeds the cap {MAX_N}")
        work = self.work_estimate()
        if work > self.max_work:
            raise ResourceCapError(f"estimated work {work:.3g} exceeds max_work {self.max_work:.3g}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_range"], d["xi_list"], d["u_list"] = list(self.n_range), list(self.xi_list), list(self.u_list)
        return d

    def config_hash(self) -> str:
        """Hash of everything that affects values (not workers, chunking or output path)."""
        d = self.to_dict()
        for key in ("workers", "chunk", "out"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)


def resolve_workers(requested: int) -> int:
    env = os.environ.get(WORKER_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKER_ENV} must be an integer") from None
        if value < 1:
            raise ConfigError(f"{WORKER_ENV} must be >= 1")
        return value
    return requested


# ---- per-trial work ---------------------------------------------------------

def _crossing_trial(cfg: ExperimentConfig, n: int, t: int) -> list[dict]:
    field_ = sample_gff(make_box(n), stream(cfg.master_seed, cfg.kind, n, t))
    a = make_annulus(n, 0)
    rows = []
    for xi in cfg.xi_list:
        start = time.perf_counter()
        d = distance_across(LfppWeights.of(field_, xi), a, witness=False).value
        rows.append({"cell": [n, xi], "n": n, "xi": xi, "seed_index": t, "value": d,
                     "wall_time": time.perf_counter() - start})
    return rows


def _levelset_trial(cfg: ExperimentConfig, n: int, t: int) -> list[dict]:
    start = time.perf_counter()
    box, a = make_box(n), make_annulus(n, 0)
    vals = sample_gff(box, stream(cfg.master_seed, cfg.kind, n, t)).values
    hits = circuit_indicators(vals, box, a, [-u for u in cfg.u_list])[0]
    wall = time.perf_counter() - start
    return [{"cell": [n, u], "n": n, "u": u, "seed_index": t, "value": int(h), "wall_time": wall}
            for u, h in zip(cfg.u_list, hits)]


def _excursion_trial(cfg: ExperimentConfig, n: int, t: int) -> list[dict]:
    box, a = make_box(n), make_annulus(n, 0)
    rows = []
    for i, u in enumerate(cfg.u_list):
        start = time.perf_counter()
        counts, union = _simulate(box, u, 1, stream(cfg.master_seed, cfg.kind, n, t, i), record=False)
        rows.append({"cell": [n, u], "n": n, "u": u, "seed_index": t,
                     "value": int(union_disconnects(union[0], box, a)), "count": int(counts[0]),
                     "wall_time": time.perf_counter() - start})
    return rows


def _multiscale_trial(cfg: ExperimentConfig, n: int, t: int) -> list[dict]:
    field_ = sample_gff(make_box(n), stream(cfg.master_seed, cfg.kind, n, t))
    ms = MultiscaleConfig(cfg.K, cfg.C, cfg.delta)
    centers = center_grid(n, cfg.K) if cfg.centers == "grid" else [(0, 0)]
    rows = []
    for xi in cfg.xi_list:
        for z in centers:
            start = time.perf_counter()
            rep = scale_report(field_, z, ms, xi).to_dict()
            rows.append({"cell": [n, xi, list(z)], "seed_index": t, **rep,
                         "wall_time": time.perf_counter() - start})
    return rows


_TRIAL = {"crossing": _crossing_trial, "levelset": _levelset_trial,
          "excursion": _excursion_trial, "multiscale": _multiscale_trial}


def _run_unit(cfg: ExperimentConfig, n: int, trials: range) -> list[dict]:
    fn = _TRIAL[cfg.kind]
    return [row for t in trials for row in fn(cfg, n, t)]


def _units(cfg: ExperimentConfig):
    for n in cfg.n_values:
        for s in range(0, cfg.trials, cfg.chunk):
            yield n, range(s, min(s + cfg.chunk, cfg.trials))


# ---- persistence --------------------------------------------------------------

def _sort_key(row: dict):
    return json.dumps(row["cell"]), row["seed_index"]


def canonical_rows(rows: Iterable[dict]) -> list[dict]:
    out = [{k: v for k, v in r.items() if k != "wall_time"} for r in rows if "marker" not in r]
    out.sort(key=_sort_key)
    return out


def read_rows(path) -> tuple[list[dict], bool]:
    """Data rows of a raw or canonical file and whether it is marked complete."""
    rows, complete, raw = [], False, False
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "marker" in rec:
                raw = True
                complete = rec["marker"] == "complete"
            else:
                rows.append(rec)
    return rows, complete or not raw


@dataclass
class RunResult:
    config: ExperimentConfig
    raw_path: Path
    canonical_path: Path
    summary_path: Path
    rows: list[dict] = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    cfg.validate()
    cfg.check_caps()
    workers = resolve_workers(cfg.workers)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    raw = out / f"{cfg.kind}.jsonl"
    tag = {"config_hash": cfg.config_hash(), "version": __version__}
    rows: list[dict] = []
    with open(raw, "w") as fh:
        fh.write(json.dumps({"marker": "incomplete", **tag, "config": cfg.to_dict()}) + "\n")
        fh.flush()

        def emit(batch):
            for r in batch:
                r.update(tag)
                fh.write(json.dumps(r) + "\n")
            fh.flush()
            rows.extend(batch)

        units = list(_units(cfg))
        if workers == 1:
            for n, tr in units:
                emit(_run_unit(cfg, n, tr))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_run_unit, cfg, n, tr) for n, tr in units]
                for fut in as_completed(futs):
                    emit(fut.result())
        fh.write(json.dumps({"marker": "complete", **tag, "rows": len(rows)}) + "\n")
    canon = out / f"{cfg.kind}.canonical.jsonl"
    with open(canon, "w") as fh:
        for r in canonical_rows(rows):
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    summary = out / f"{cfg.kind}_summary.csv"
    write_summary(cfg.kind, rows, summary, cfg.C)
    return RunResult(cfg, raw, canon, summary, rows)


def run_crossing_experiment(cfg: ExperimentConfig) -> RunResult:
    return run_experiment(_as_kind(cfg, "crossing"))


def run_levelset_experiment(cfg: ExperimentConfig) -> RunResult:
    return run_experiment(_as_kind(cfg, "levelset"))


def run_excursion_experiment(cfg: ExperimentConfig) -> RunResult:
    return run_experiment(_as_kind(cfg, "excursion"))


def run_multiscale_experiment(cfg: ExperimentConfig) -> RunResult:
    return run_experiment(_as_kind(cfg, "multiscale"))


def _as_kind(cfg: ExperimentConfig, kind: str) -> ExperimentConfig:
    if cfg.kind != kind:
        raise ConfigError(f"config kind is {cfg.kind!r}, expected {kind!r}")
    return cfg


# ---- summaries ------------------------------------------------------------------

def _group(rows, key):
    groups: dict = {}
    for r in rows:
        groups.setdefault(key(r), []).append(r)
    return dict(sorted(groups.items()))


def summarize(kind: str, rows: list[dict], C: float = 1.0) -> list[dict]:
    rows = [r for r in rows if "marker" not in r]
    out = []
    if kind == "crossing":
        for (n, xi), g in _group(rows, lambda r: (r["n"], r["xi"])).items():
            lv = np.log2([r["value"] for r in g])
            q1, med, q3 = np.percentile(lv, [25, 50, 75])
            out.append({"n": n, "xi": xi, "count": len(g), "median_log2": med,
                        "q1_log2": q1, "q3_log2": q3})
    elif kind in ("levelset", "excursion"):
        for (n, u), g in _group(rows, lambda r: (r["n"], r["u"])).items():
            est = proportion(sum(r["value"] for r in g), len(g))
            rec = {"n": n, "u": u, "count": len(g), "p": est.p,
                   "wilson_low": est.low, "wilson_high": est.high}
            if kind == "excursion":
                rec["mean_excursions"] = float(np.mean([r["count"] for r in g]))
            out.append(rec)
    elif kind == "multiscale":
        for (n, xi), g in _group(rows, lambda r: (r["n"], r["xi"])).items():
            recs = [s for r in g for s in r["records"]]
            out.append({"n": n, "xi": xi, "reports": len(g),
                        "centers": len({tuple(r["z"]) for r in g}),
                        "frac_scales_ok": float(np.mean([s["min_harmonic"] >= -C
                                                         for s in recs])),
                        "mean_zero_crossing": float(np.mean([s["zero_part_across_distance"]
                                                             for s in recs]))})
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return out


def write_summary(kind: str, rows: list[dict], path, C: float = 1.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS[kind])
        w.writeheader()
        for rec in summarize(kind, rows, C):
            w.writerow(rec)


# ---- exponent estimation ----------------------------------------------------------

class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentEstimate:
    xi: float
    per_n: tuple[dict, ...]
    slope: float
    slope_se: float
    intercept: float
    r2: float
    q_hat: float
    q_se: float

    def to_dict(self) -> dict:
        return {**asdict(self), "per_n": list(self.per_n)}


def estimate_exponent(samples, xi: float, min_n: int = 3, min_samples: int = 30,
                      resamples: int = 400, seed: int = 0) -> ExponentEstimate:
    """Fit ``median log2 D`` against ``n``; ``Q_hat = slope / xi``.

    ``samples`` is an iterable of rows (dicts with ``n``, ``xi``, ``value``)
    or of paths to crossing JSONL files.  Each median carries a bootstrap
    standard error, used as regression weights when all are positive.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    rows = _collect(samples)
    by_n = _group([r for r in rows if math.isclose(r["xi"], xi, rel_tol=0, abs_tol=1e-12)],
                  lambda r: r["n"])
    counts = {n: len(g) for n, g in by_n.items()}
    usable = {n: g for n, g in by_n.items() if len(g) >= min_samples}
    if len(usable) < min_n:
        raise InsufficientDataError(
            f"need >= {min_n} values of n with >= {min_samples} samples at xi={xi}; have {counts}")
    per_n = []
    for n, g in usable.items():
        lv = np.log2([r["value"] for r in g])
        q1, med, q3 = np.percentile(lv, [25, 50, 75])
        se = median_se(lv, stream(seed, "bootstrap", n), resamples)
        per_n.append({"n": n, "count": len(g), "median_log2": float(med),
                      "q1_log2": float(q1), "q3_log2": float(q3), "median_se": se})
    x = [p["n"] for p in per_n]
    y = [p["median_log2"] for p in per_n]
    ses = [p["median_se"] for p in per_n]
    fit = line_fit(x, y, ses if all(s > 0 for s in ses) else None)
    return ExponentEstimate(xi, tuple(per_n), fit.slope, fit.slope_se, fit.intercept, fit.r2,
                            fit.slope / xi, fit.slope_se / xi)


def _collect(samples) -> list[dict]:
    rows = []
    for s in samples:
        if isinstance(s, dict):
            rows.append(s)
        else:
            data, complete = read_rows(s)
            if not complete:
                raise InsufficientDataError(f"{s} is marked incomplete")
            rows.extend(data)
    return [r for r in rows if "value" in r and "xi" in r]
