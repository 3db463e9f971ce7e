"""End-to-end numerical checks, each comparing a fast path against an oracle or a law.

``run_checks(full=True)`` uses the acceptance sample sizes; the default
quick mode shrinks them so ``lfpp verify`` finishes in about a minute.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .excursions import _simulate, excursion_mass_at, union_disconnects
from .field import (FieldSample, decompose, green_table, harmonic_residual, sample_gff_values,
                    spectral_covariance)
from .harness import ExperimentConfig, estimate_exponent, run_experiment
from .lattice import ORIGIN, BoxSpec, make_annulus, make_box
from .levelset import sample_circuit_indicators
from .metric import LfppWeights, distance_field, lfpp_distance
from .multiscale import cross_scale_independence
from .rng import stream
from .stats import dispersion_index, line_fit, slope_negative_pvalue


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _box(half: int) -> BoxSpec:
    return BoxSpec(ORIGIN, None, half)


@_timed
def check_covariance(seed: int, full: bool = True) -> CheckResult:
    """Sampler covariance against ``(pi/2) Gr`` exactly, then a Monte Carlo variance."""
    box9 = _box(4)
    g = green_table(box9)
    err = float(np.abs(spectral_covariance(box9) - (math.pi / 2) * g.gr).max())
    box5 = _box(2)
    samples = 100_000 if full else 20_000
    vals = sample_gff_values(box5, stream(seed, "check-covariance"), size=samples)[:, 2, 2]
    sq = vals**2
    var, se = sq.mean(), sq.std(ddof=1) / math.sqrt(samples)
    target = (math.pi / 2) * green_table(box5)(ORIGIN, ORIGIN)
    z = abs(var - target) / se
    ok = err <= 1e-9 and z <= 3
    return CheckResult(1, "covariance", ok,
                       f"max|spectral - (pi/2)Gr| = {err:.2e} on 9x9; Var[h(0)] = {var:.4f} "
                       f"vs {target:.4f} ({z:.2f} SE)")


@_timed
def check_green(seed: int, full: bool = True) -> CheckResult:
    box5 = _box(2)
    walks = 1_000_000 if full else 100_000
    mean, se = oracles.green_by_walks(box5, ORIGIN, ORIGIN, walks, stream(seed, "check-green"))
    exact = green_table(box5)(ORIGIN, ORIGIN)
    g3 = green_table(_box(1))(ORIGIN, ORIGIN)
    z = abs(mean - exact) / se
    ok = z <= 3 and g3 == 1.0
    return CheckResult(2, "green", ok, f"Gr5(0,0) = {exact:.6f}, walks {mean:.5f} ({z:.2f} SE); "
                                      f"Gr3(0,0) = {g3!r}")


@_timed
def check_metric(seed: int, full: bool = True) -> CheckResult:
    rng = stream(seed, "check-metric")
    box5 = _box(2)
    worst = 0.0
    instances = 200 if full else 50
    for _ in range(instances):
        w = LfppWeights(box5, rng.normal(size=box5.shape), float(rng.uniform(0.1, 1.5)))
        ns, nt = rng.integers(1, 4, size=2)
        idx = rng.choice(box5.n_vertices, ns + nt, replace=False)
        src = [box5.point(i) for i in idx[:ns]]
        tgt = [box5.point(i) for i in idx[ns:]]
        fast = lfpp_distance(w, src, tgt).value
        slow = oracles.exhaustive_distance(w.weights, box5, src, tgt)
        worst = max(worst, abs(fast - slow) / slow)
    # triangle inequality on a larger sampled field
    box = make_box(3)
    fields = 3 if full else 1
    triples = 10_000 if full else 2_000
    violations = 0
    for f in range(fields):
        vals = sample_gff_values(box, rng)
        w = LfppWeights.of(vals, 0.4, box)
        base = rng.choice(box.n_vertices, 60, replace=False)
        D = np.array([distance_field(w, [box.point(i)]).ravel()[base] for i in base])
        t = rng.integers(0, base.size, size=(triples, 3))
        lhs = D[t[:, 0], t[:, 2]]
        rhs = D[t[:, 0], t[:, 1]] + D[t[:, 1], t[:, 2]]
        violations += int(np.sum(lhs > rhs * (1 + 1e-12)))
    ok = worst <= 1e-12 and violations == 0
    return CheckResult(3, "metric", ok, f"{instances} instances, max rel err {worst:.1e}; "
                                       f"triangle violations {violations}/{fields * triples}")


@_timed
def check_markov(seed: int, full: bool = True) -> CheckResult:
    """Decomposition identities per sample and the law of the zero part."""
    rng = stream(seed, "check-markov")
    n, z, k = 3, (2, -1), 2
    box = make_box(n)
    trials = 10_000 if full else 2_000
    sub = make_box(n - k, z)
    recon = resid = 0.0
    zero_c, ext = [], []
    ext_pts = [(-6, 5), (6, 6), (-3, 0)]
    vals = sample_gff_values(box, rng, size=trials)
    for t in range(trials):
        parent = FieldSample(box, vals[t])
        dec = decompose(parent, z, k)
        recon = max(recon, float(np.abs(dec.harmonic_part + dec.zero_part
                                        - parent.restrict(sub)).max()))
        resid = max(resid, harmonic_residual(dec.harmonic_part))
        zero_c.append(dec.zero_part.ravel())
        ext.append([parent[p] for p in ext_pts])
    zero_c, ext = np.array(zero_c), np.array(ext)
    gr = (math.pi / 2) * green_table(sub).gr
    inner = [(1, 1), (2, 2), (1, 2), (3, 1), (2, 3)]
    pairs = [(inner[1], inner[1]), (inner[1], inner[2]), (inner[1], inner[0]),
             (inner[3], inner[3]), (inner[3], inner[4])]
    worst_z = 0.0
    m = sub.width - 2
    for a, b in pairs:
        ia, ib = a[0] * sub.width + a[1], b[0] * sub.width + b[1]
        prod = zero_c[:, ia] * zero_c[:, ib]
        se = prod.std(ddof=1) / math.sqrt(trials)
        target = gr[(a[0] - 1) * m + a[1] - 1, (b[0] - 1) * m + b[1] - 1]
        worst_z = max(worst_z, abs(prod.mean() - target) / se)
    centre = zero_c[:, 2 * sub.width + 2]
    corr = max(abs(np.corrcoef(centre, ext[:, j])[0, 1]) for j in range(ext.shape[1]))
    bound = 4 / math.sqrt(trials)
    ok = recon <= 1e-9 and resid <= 1e-9 and worst_z <= 3 and corr <= bound
    return CheckResult(4, "markov", ok, f"recon {recon:.1e}, residual {resid:.1e}, "
                                       f"cov worst {worst_z:.2f} SE, |corr| {corr:.4f} <= {bound:.4f}")


@_timed
def check_excursion_mass(seed: int, full: bool = True) -> CheckResult:
    bad = 0
    checked = 0
    for half in (1, 2, 3):
        box = _box(half)
        for x in box.boundary_points():
            part, rem = oracles.excursion_mass_truncated(box, x, 30)
            formula = excursion_mass_at(box, x)
            checked += 1
            bad += not (part - 1e-12 <= formula <= part + rem + 1e-12)
    draws = 10_000 if full else 2_000
    counts, _ = _simulate(_box(3), 1.0, draws, stream(seed, "check-mass"), record=False)
    di = dispersion_index(counts)
    ok = bad == 0 and 0.9 <= di <= 1.1
    return CheckResult(5, "excursion mass", ok, f"{checked - bad}/{checked} vertices within remainder; "
                                               f"dispersion {di:.4f}")


def _excursion_hits(n: int, u: float, trials: int, rng) -> int:
    box, a = make_box(n), make_annulus(n, 0)
    hits = 0
    done = 0
    while done < trials:
        size = min(1000, trials - done)
        _, unions = _simulate(box, u, size, rng, record=False)
        hits += sum(union_disconnects(m, box, a) for m in unions)
        done += size
    return hits


@_timed
def check_coupling(seed: int, full: bool = True) -> CheckResult:
    trials = 10_000 if full else 2_000
    parts, ok = [], True
    for n in (3, 4):
        circ = sample_circuit_indicators(n, [1.0, 2.0], trials, stream(seed, "check-coupling-field", n))
        for j, u in enumerate((1.0, 2.0)):
            pc = circ[:, j].mean()
            pe = _excursion_hits(n, u, trials, stream(seed, "check-coupling-exc", n, j)) / trials
            se = math.sqrt((pc * (1 - pc) + pe * (1 - pe)) / trials)
            good = pe <= pc + 3 * se
            ok &= good
            parts.append(f"n={n},u={u:g}: {pe:.4f} <= {pc:.4f}+3*{se:.4f}")
    return CheckResult(6, "coupling", ok, "; ".join(parts))


def log_survival_fit(u_values, hits, trials: int):
    """Weighted fit of ``log(1 - p)`` against ``u**2`` with delta-method errors.

    Zero or full counts use ``(k + 1/2) / (T + 1)`` inside the variance only.
    """
    x = np.asarray(u_values, float) ** 2
    k = np.asarray(hits, float)
    p = k / trials
    if np.any(p >= 1):
        raise ValueError("a proportion of one has no finite log-survival")
    pt = (k + 0.5) / (trials + 1)
    se = np.sqrt(pt / ((1 - pt) * trials))
    return line_fit(x, np.log1p(-p), se)


@_timed
def check_levelset_shape(seed: int, full: bool = True) -> CheckResult:
    trials = 4_000 if full else 1_000
    us = [0.5, 1.0, 1.5, 2.0]
    ind = sample_circuit_indicators(5, us, trials, stream(seed, "check-levelset"))
    per_trial = bool(np.all(np.diff(ind.astype(int), axis=1) >= 0))
    hits = ind.sum(axis=0)
    fit = log_survival_fit(us, hits, trials)
    pval = slope_negative_pvalue(fit)
    ok = per_trial and bool(np.all(np.diff(hits) >= 0)) and pval < 0.05
    return CheckResult(7, "level-set shape", ok,
                       f"p = {np.round(hits / trials, 4).tolist()}, per-trial monotone {per_trial}, "
                       f"slope {fit.slope:.4f} +/- {fit.slope_se:.4f}, one-sided p {pval:.2e}")


@_timed
def check_independence(seed: int, full: bool = True) -> CheckResult:
    trials = 10_000 if full else 2_000
    n, scales = 9, (4, 5, 6)
    res = cross_scale_independence(n, scales, trials, stream(seed, "check-independence"))
    bound = 4 / math.sqrt(trials)
    worst = res.max_offdiag()
    return CheckResult(8, "cross-scale independence", worst <= bound,
                       f"n={n}, k in {list(scales)}, p = {np.round(res.p_hat, 3).tolist()}, "
                       f"max |corr| {worst:.4f} <= {bound:.4f}")


XI_EXPONENT = (0.1, 0.4, 1 / math.sqrt(6))


@_timed
def check_exponent(seed: int, full: bool = True, workers: int = 1) -> CheckResult:
    trials = 200 if full else 40
    n_hi = 8 if full else 6
    with tempfile.TemporaryDirectory() as tmp:
        cfg = ExperimentConfig(kind="crossing", n_range=(4, n_hi), xi_list=XI_EXPONENT,
                               trials=trials, master_seed=seed, workers=workers, out=tmp)
        res = run_experiment(cfg)
        rows = res.rows
    ests = [estimate_exponent(rows, xi, min_samples=min(30, trials)) for xi in XI_EXPONENT]
    ok = all(e.slope - 2 * e.slope_se > 0 and e.r2 >= 0.9 for e in ests)
    for a, b in zip(ests, ests[1:]):
        ok &= a.q_hat >= b.q_hat - 2 * math.hypot(a.q_se, b.q_se)
    parts = [f"xi={e.xi:.3f}: slope {e.slope:.3f}+/-{e.slope_se:.3f} R2 {e.r2:.3f} "
             f"Q {e.q_hat:.3f}+/-{e.q_se:.3f}" for e in ests]
    ref = 5 / math.sqrt(6)
    parts.append(f"Q(1/sqrt6) - 5/sqrt6 = {ests[-1].q_hat - ref:+.3f} (report only)")
    return CheckResult(9, "exponent", ok, "; ".join(parts))


@_timed
def check_determinism(seed: int, full: bool = True) -> CheckResult:
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for kind, extra in (("crossing", {"xi_list": (0.4, 1.0)}), ("excursion", {"u_list": (1.0, 2.0)})):
            texts = []
            for i, workers in enumerate((1, 2, 1)):
                cfg = ExperimentConfig(kind=kind, n_range=(3, 4), trials=12, chunk=5, master_seed=seed,
                                       workers=workers, out=str(Path(tmp) / f"{kind}{i}"), **extra)
                texts.append(run_experiment(cfg).canonical_path.read_bytes())
            outs.append(texts[0] == texts[1] == texts[2])
    return CheckResult(10, "determinism", all(outs), f"canonical outputs identical: {outs}")


ALL_CHECKS = (check_covariance, check_green, check_metric, check_markov, check_excursion_mass,
              check_coupling, check_levelset_shape, check_independence, check_exponent,
              check_determinism)


def run_checks(full: bool = False, seed: int = 20240601):
    for fn in ALL_CHECKS:
        yield fn(seed, full=full)
