import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lfpp.rng import derive, purpose_code, stream
from lfpp.stats import (correlation_matrix, dispersion_index, line_fit, median_se,
                        poisson_binomial_tail, proportion, slope_negative_pvalue)


def test_streams_reproducible_and_distinct():
    a = stream(7, "x", 1, 2).random(5)
    assert np.array_equal(a, stream(7, "x", 1, 2).random(5))
    assert not np.array_equal(a, stream(7, "x", 2, 1).random(5))
    assert not np.array_equal(a, stream(7, "y", 1, 2).random(5))
    assert not np.array_equal(a, stream(8, "x", 1, 2).random(5))
    assert purpose_code("x") == purpose_code("x")
    with pytest.raises(ValueError):
        stream(1, "x", 1, 2, 3, 4)
    with pytest.raises(ValueError):
        stream(1, "x", -1)
    assert 0 <= derive(stream(1, "x")) < 2**63


def test_proportion_interval():
    est = proportion(0, 100)
    assert est.p == 0 and est.low == 0 and est.high > 0
    est = proportion(30, 100)
    assert est.low < 0.3 < est.high
    assert est.se == pytest.approx(math.sqrt(0.21 / 100))
    with pytest.raises(ValueError):
        proportion(1, 0)


def test_line_fit_exact():
    fit = line_fit([1, 2, 3, 4], [1, 3, 5, 7])
    assert fit.slope == pytest.approx(2) and fit.intercept == pytest.approx(-1)
    assert fit.slope_se == pytest.approx(0, abs=1e-12) and fit.r2 == pytest.approx(1)


def test_line_fit_weighted_and_pvalue(rng):
    x = np.arange(10.0)
    y = -0.5 * x + rng.normal(scale=0.1, size=10)
    fit = line_fit(x, y, np.full(10, 0.1))
    assert abs(fit.slope + 0.5) < 5 * fit.slope_se
    assert slope_negative_pvalue(fit) < 1e-6
    with pytest.raises(ValueError):
        line_fit([1], [1])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(0, 9))
def test_poisson_binomial_matches_enumeration(ps, k):
    from itertools import product
    brute = 0.0
    for bits in product([0, 1], repeat=len(ps)):
        if sum(bits) >= k:
            brute += math.prod(p if b else 1 - p for p, b in zip(ps, bits))
    assert poisson_binomial_tail(ps, k) == pytest.approx(brute, abs=1e-12)


def test_dispersion_and_correlation(rng):
    assert abs(dispersion_index(rng.poisson(20, 20_000)) - 1) < 0.05
    x = rng.random((5000, 3)) < 0.5
    x[:, 2] = x[:, 0]
    c = correlation_matrix(x)
    assert c[0, 2] == pytest.approx(1) and abs(c[0, 1]) < 0.1
    const = np.column_stack([x[:, 0], np.ones(5000, bool)])
    assert np.isnan(correlation_matrix(const)[0, 1])


def test_median_se(rng):
    v = rng.normal(size=4000)
    se = median_se(v, rng, 300)
    assert 0.5 * math.sqrt(math.pi / 2 / 4000) < se < 2 * math.sqrt(math.pi / 2 / 4000)
