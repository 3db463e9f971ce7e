"""Small statistical helpers shared by the estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint


@dataclass(frozen=True)
class ProportionEstimate:
    successes: int
    trials: int
    low: float
    high: float

    @property
    def p(self) -> float:
        return self.successes / self.trials

    @property
    def se(self) -> float:
        p = self.p
        return math.sqrt(p * (1 - p) / self.trials)

    def to_dict(self) -> dict:
        return {"successes": self.successes, "trials": self.trials, "p": self.p,
                "se": self.se, "wilson_low": self.low, "wilson_high": self.high}


def proportion(successes: int, trials: int, alpha: float = 0.05) -> ProportionEstimate:
    if trials < 1:
        raise ValueError("need at least one trial")
    lo, hi = proportion_confint(successes, trials, alpha=alpha, method="wilson")
    return ProportionEstimate(int(successes), int(trials), float(lo), float(hi))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    r2: float
    dof: int


def line_fit(x, y, se=None) -> LineFit:
    """(Weighted) least squares.

    With per-point standard errors the slope SE is the larger of the
    known-variance SE and the residual-scaled one, so a poor fit is not
    hidden behind small error bars.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2:
        raise ValueError("need at least two points")
    w = np.ones_like(x) if se is None else 1.0 / np.asarray(se, float) ** 2
    A = np.column_stack([np.ones_like(x), x])
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    beta = cov @ (Aw.T @ y)
    resid = y - A @ beta
    dof = x.size - 2
    chi2 = float(np.sum(w * resid**2))
    if se is None:
        scale = chi2 / dof if dof > 0 else 0.0
    else:
        scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
    return LineFit(float(beta[1]), float(beta[0]), float(math.sqrt(cov[1, 1] * scale)), r2, dof)


def slope_negative_pvalue(fit: LineFit) -> float:
    """One-sided p-value for slope < 0 (t distribution, normal when dof is 0)."""
    if fit.slope_se == 0:
        return 0.0 if fit.slope < 0 else 1.0
    t = fit.slope / fit.slope_se
    return float(stats.t.cdf(t, fit.dof) if fit.dof > 0 else stats.norm.cdf(t))


def poisson_binomial_tail(ps, kmin: int) -> float:
    """``P[#successes >= kmin]`` for independent Bernoulli(p_i), exact."""
    dist = np.array([1.0])
    for p in ps:
        dist = np.convolve(dist, [1 - p, p])
    return float(dist[max(kmin, 0):].sum())


def dispersion_index(counts) -> float:
    c = np.asarray(counts, float)
    return float(c.var(ddof=1) / c.mean())


def correlation_matrix(indicators: np.ndarray) -> np.ndarray:
    """Pearson correlations of columns; constant columns get NaN off the diagonal."""
    x = np.asarray(indicators, float)
    sd = x.std(axis=0)
    xc = (x - x.mean(axis=0)) / np.where(sd > 0, sd, np.nan)
    c = xc.T @ xc / x.shape[0]
    np.fill_diagonal(c, 1.0)
    return c


def median_se(values, rng: np.random.Generator, resamples: int = 400) -> float:
    v = np.asarray(values, float)
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    return float(np.median(v[idx], axis=1).std(ddof=1))
