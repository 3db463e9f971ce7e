"""Per-scale statistics of the harmonic / zero-boundary split around a point.

For a centre ``z`` and scale index ``k`` the field on the sub-box of scale
``n - k`` splits as ``harmonic + zero_part``; the annulus of that scale is
``make_annulus(n, k, z)``.  Scales whose annulus is empty (``n - k <= 2``
under floor rounding) carry no vertices and are skipped where a sum is
taken.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .field import FieldSample, WindowSampler, decompose, dirichlet_fill, sample_gff, sample_gff_values
from .lattice import (AnnulusSpec, LatticePath, LatticePoint, ORIGIN, annulus_is_degenerate,
                      make_annulus, make_box)
from .metric import LfppWeights, distance_across
from .stats import correlation_matrix, poisson_binomial_tail


@dataclass(frozen=True)
class MultiscaleConfig:
    K: int
    C: float
    delta: float

    def __post_init__(self):
        if self.K < 4:
            raise ValueError("K must be >= 4")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def scale_range(self) -> range:
        return range(math.ceil(self.K / 2), self.K)

    def good_threshold(self) -> Fraction:
        # the shortest decimal repr, so delta=0.1 means exactly 1/10
        return (Fraction(1, 2) - Fraction(repr(self.delta))) * self.K

    def check(self, n: int) -> None:
        if self.K > n - 1:
            raise ValueError(f"K={self.K} exceeds n - 1 = {n - 1}")
        bad = [k for k in self.scale_range if annulus_is_degenerate(n - k)]
        if bad:
            raise ValueError(f"scales {bad} have empty annuli at n={n}; need K <= n - 2")


@dataclass(frozen=True)
class ScaleRecord:
    k: int
    min_harmonic: float
    max_oscillation: float
    zero_part_across_distance: float
    parent_across_distance: float | None = None


@dataclass(frozen=True)
class ScaleReport:
    z: LatticePoint
    records: tuple[ScaleRecord, ...]
    n: int = 0
    xi: float = 0.0
    trial: int | None = None

    def to_dict(self) -> dict:
        d = {"n": self.n, "xi": self.xi, "z": list(self.z),
             "records": [asdict(r) for r in self.records]}
        if self.trial is not None:
            d = {"trial": self.trial, **d}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleReport":
        return cls(LatticePoint(*d["z"]), tuple(ScaleRecord(**r) for r in d["records"]),
                   d.get("n", 0), d.get("xi", 0.0), d.get("trial"))


def _annulus_values(values: np.ndarray, sub_box, a: AnnulusSpec) -> np.ndarray:
    return values[a.mask(sub_box)]


def scale_record(parent: FieldSample, z, k: int, xi: float, with_parent: bool = False) -> ScaleRecord:
    n = parent.box.scale
    dec = decompose(parent, z, k)
    a = make_annulus(n, k, z)
    harm = _annulus_values(dec.harmonic_part, dec.sub_box, a)
    zero_d = distance_across(LfppWeights.of(dec.zero_field(), xi), a, witness=False).value
    parent_d = None
    if with_parent:
        parent_d = distance_across(LfppWeights.of(parent, xi), a, witness=False).value
    return ScaleRecord(k, float(harm.min()), float(harm.max() - harm.min()), zero_d, parent_d)


def scale_report(parent: FieldSample, z, cfg: MultiscaleConfig, xi: float,
                 with_parent: bool = False, trial: int | None = None) -> ScaleReport:
    n = parent.box.scale
    cfg.check(n)
    z = LatticePoint(*z)
    for k in cfg.scale_range:
        if not parent.box.contains_box(make_box(n - k, z)):
            raise ValueError(f"sub-box of scale {n - k} at {tuple(z)} leaves the parent box")
    recs = tuple(scale_record(parent, z, k, xi, with_parent) for k in cfg.scale_range)
    return ScaleReport(z, recs, n, xi, trial)


def classify_good(report: ScaleReport, cfg: MultiscaleConfig) -> bool:
    passing = sum(r.min_harmonic >= -cfg.C for r in report.records)
    return passing >= cfg.good_threshold()


def center_grid(n: int, K: int) -> list[LatticePoint]:
    """Points of ``2**(n-K-1) Z^2`` in the annulus of scale ``n`` whose sub-boxes all fit."""
    if K > n - 1:
        raise ValueError("need K <= n - 1")
    step = 2 ** (n - K - 1)
    a = make_annulus(n, 0)
    reach = 2**n - 2 ** (n - math.ceil(K / 2))
    lim = a.outer_half_side // step
    pts = []
    for i in range(-lim, lim + 1):
        for j in range(-lim, lim + 1):
            p = LatticePoint(i * step, j * step)
            if a.contains(p) and max(abs(p.x), abs(p.y)) <= reach:
                pts.append(p)
    return pts


@dataclass(frozen=True)
class OscillationTail:
    per_scale: np.ndarray
    scales: tuple[int, ...]
    c_grid: np.ndarray
    exceedance: np.ndarray

    @property
    def sums(self) -> np.ndarray:
        return self.per_scale.sum(axis=1)

    @property
    def mean(self) -> float:
        return float(self.sums.mean())

    def mean_up_to(self, K: int) -> float:
        cols = [i for i, k in enumerate(self.scales) if k <= K]
        return float(self.per_scale[:, cols].sum(axis=1).mean())


def harmonic_oscillations(parent: FieldSample, z, scales) -> np.ndarray:
    n = parent.box.scale
    out = np.zeros(len(scales))
    for i, k in enumerate(scales):
        if annulus_is_degenerate(n - k):
            continue
        dec = decompose(parent, z, k)
        h = _annulus_values(dec.harmonic_part, dec.sub_box, make_annulus(n, k, z))
        out[i] = h.max() - h.min()
    return out


def oscillation_sum_tail(n: int, K: int, trials: int, rng: np.random.Generator,
                         c_grid: Sequence[float] = (0, 1, 2, 4, 8, 16, 32)) -> OscillationTail:
    """Sum over ``k = 2..K`` of the harmonic oscillation on the annulus at the origin."""
    if not 2 <= K <= n - 1:
        raise ValueError("need 2 <= K <= n - 1")
    box = make_box(n)
    scales = tuple(range(2, K + 1))
    per = np.array([harmonic_oscillations(sample_gff(box, rng), ORIGIN, scales)
                    for _ in range(trials)])
    grid = np.asarray(c_grid, float)
    sums = per.sum(axis=1)
    exceed = (sums[:, None] > grid[None, :]).mean(axis=0)
    return OscillationTail(per, scales, grid, exceed)


@dataclass(frozen=True)
class IndependenceResult:
    scales: tuple[int, ...]
    indicators: np.ndarray
    correlation: np.ndarray

    @property
    def trials(self) -> int:
        return self.indicators.shape[0]

    @property
    def p_hat(self) -> np.ndarray:
        return self.indicators.mean(axis=0)

    def max_offdiag(self) -> float:
        c = self.correlation.copy()
        np.fill_diagonal(c, 0.0)
        return float(np.nanmax(np.abs(c)))


def zero_part_minima(parent: FieldSample, z, scales) -> np.ndarray:
    n = parent.box.scale
    out = np.empty(len(scales))
    for i, k in enumerate(scales):
        dec = decompose(parent, z, k)
        out[i] = _annulus_values(dec.zero_part, dec.sub_box, make_annulus(n, k, z)).min()
    return out


def window_zero_minima(values: np.ndarray, window, n: int, z, scales) -> np.ndarray:
    """Batched zero-part minima from ``(trials,) + window.shape`` arrays."""
    out = np.empty((values.shape[0], len(scales)))
    for c, k in enumerate(scales):
        sub = make_box(n - k, z)
        i0, j0 = window.local((sub.xmin, sub.ymin))
        v = values[:, i0:i0 + sub.width, j0:j0 + sub.width]
        zero = v - dirichlet_fill(v)
        out[:, c] = zero[:, make_annulus(n, k, z).mask(sub)].min(axis=1)
    return out


def cross_scale_independence(n: int, scales, trials: int, rng: np.random.Generator,
                             event_threshold=None, z=ORIGIN,
                             chunk: int = 500) -> IndependenceResult:
    """Indicators ``min(zero_part on annulus k) <= threshold``, all scales from one field per trial.

    ``event_threshold`` is a number, one number per scale, or ``None`` for
    ``-1.25 (n - k)``, which sits near the median minimum at each scale.

    Only the field on the largest sub-box matters, so it is drawn from its
    exact marginal law rather than sampling the whole box.
    """
    scales = tuple(scales)
    for k in scales:
        if k < 1 or annulus_is_degenerate(n - k):
            raise ValueError(f"scale k={k} has an empty annulus at n={n}")
    z = LatticePoint(*z)
    window = make_box(n - min(scales), z)
    sampler = WindowSampler(make_box(n), window)
    rows = []
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        rows.append(window_zero_minima(sampler.sample(rng, size), window, n, z, scales))
        done += size
    if event_threshold is None:
        thr = np.array([-1.25 * (n - k) for k in scales])
    else:
        thr = np.broadcast_to(np.asarray(event_threshold, float), (len(scales),))
    ind = np.concatenate(rows) <= thr
    return IndependenceResult(scales, ind, correlation_matrix(ind))


def count_concentration(indicators: np.ndarray, a: float) -> tuple[float, float]:
    """Empirical ``P[#events >= a * span]`` and its exact value under independence.

    ``span`` is the number of scales minus one, matching ``K2 - K1``.
    """
    ind = np.asarray(indicators, bool)
    span = ind.shape[1] - 1
    need = math.ceil(Fraction(repr(a)) * span)
    freq = float((ind.sum(axis=1) >= need).mean())
    return freq, poisson_binomial_tail(ind.mean(axis=0), need)


def crossing_segments(path: LatticePath, a: AnnulusSpec) -> list[LatticePath]:
    """Maximal runs of ``path`` inside ``a`` that join its two boundaries."""
    runs, cur = [], []
    for v in path.vertices:
        if a.contains(v):
            cur.append(v)
        else:
            if cur:
                runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    out = []
    for run in runs:
        seg = _first_crossing(run, a)
        if seg:
            out.append(LatticePath(tuple(seg)))
    return out


def _first_crossing(run, a: AnnulusSpec):
    last_in, last_out = None, None
    for i, v in enumerate(run):
        if a.on_inner_boundary(v):
            last_in = i
            if last_out is not None:
                return run[last_out:i + 1]
        if a.on_outer_boundary(v):
            last_out = i
            if last_in is not None:
                return run[last_in:i + 1]
    return None


@dataclass
class InductionObservables:
    n: int
    K: int
    C: float
    xi: float
    R: float
    reports: list[ScaleReport] = field(default_factory=list)
    very_good: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), int))
    chain_violations: int = 0
    chain_checks: int = 0

    def scale_ok_fraction(self) -> float:
        recs = [r for rep in self.reports for r in rep.records]
        return float(np.mean([r.min_harmonic >= -self.C for r in recs]))


def induction_observables(n: int, K: int, C: float, xi: float, trials: int,
                          rng: np.random.Generator, centers=None, R: float | None = None,
                          delta: float = 0.25, slack: float = 1e-9) -> InductionObservables:
    """Very-good scale counts and the per-sample across-distance chain inequality.

    ``R`` defaults to the median zero-part crossing distance at the
    smallest scale (``k = K - 1``) over everything sampled.
    """
    cfg = MultiscaleConfig(K, C, delta)
    cfg.check(n)
    centers = center_grid(n, K) if centers is None else [LatticePoint(*c) for c in centers]
    box = make_box(n)
    reports = []
    violations = checks = 0
    for t in range(trials):
        parent = sample_gff(box, rng)
        for z in centers:
            rep = scale_report(parent, z, cfg, xi, with_parent=True, trial=t)
            for r in rep.records:
                checks += 1
                bound = math.exp(xi * r.min_harmonic) * r.zero_part_across_distance
                if r.parent_across_distance < bound * (1 - slack):
                    violations += 1
            reports.append(rep)
    if R is None:
        R = float(np.median([rep.records[-1].zero_part_across_distance for rep in reports]))
    vg = np.array([sum(r.min_harmonic >= -C and r.zero_part_across_distance >= R
                       for r in rep.records) for rep in reports], dtype=int)
    return InductionObservables(n, K, C, xi, R, reports, vg.reshape(trials, len(centers)),
                                violations, checks)


def harmonic_increment_ratio(n: int, k: int, trials: int, rng: np.random.Generator,
                             z=ORIGIN, rel_points=((0.6, 0.0), (0.6, 0.3), (0.0, 0.65),
                                                   (-0.55, -0.55), (0.3, -0.6))) -> float:
    """Largest ``E[(h(u) - h(v))^2] / (|u - v| / 2**(n-k))`` over annulus pairs.

    Points are placed at fixed fractions of ``2**(n-k)`` from ``z`` so the
    geometry is the same at every ``n``.
    """
    m = n - k
    a = make_annulus(n, k, z)
    z = LatticePoint(*z)
    pts = [z + (round(fx * 2**m), round(fy * 2**m)) for fx, fy in rel_points]
    pts = [p for p in pts if a.contains(p)]
    if len(pts) < 2:
        raise ValueError("need at least two annulus points")
    box = make_box(n)
    vals = np.empty((trials, len(pts)))
    for t in range(trials):
        dec = decompose(FieldSample(box, sample_gff_values(box, rng)), z, k)
        for j, p in enumerate(pts):
            vals[t, j] = dec.harmonic_part[dec.sub_box.local(p)]
    worst = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            msd = float(np.mean((vals[:, i] - vals[:, j]) ** 2))
            dist = math.hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y)
            worst = max(worst, msd / (dist / 2**m))
    return worst
