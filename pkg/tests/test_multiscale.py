import json
import math
from fractions import Fraction

import numpy as np
import pytest

from lfpp.field import sample_gff
from lfpp.lattice import LatticePath, make_annulus, make_box
from lfpp.metric import LfppWeights, point_distance
from lfpp.multiscale import (MultiscaleConfig, ScaleRecord, ScaleReport, center_grid,
                             classify_good, count_concentration, cross_scale_independence,
                             crossing_segments, harmonic_increment_ratio, induction_observables,
                             oscillation_sum_tail, scale_report)


def test_config_validation():
    cfg = MultiscaleConfig(6, 1.0, 0.25)
    assert list(cfg.scale_range) == [3, 4, 5]
    assert list(MultiscaleConfig(5, 1.0, 0.25).scale_range) == [3, 4]
    assert cfg.good_threshold() == Fraction(3, 2)
    with pytest.raises(ValueError):
        MultiscaleConfig(3, 1.0, 0.25)
    with pytest.raises(ValueError):
        MultiscaleConfig(6, 0.0, 0.25)
    with pytest.raises(ValueError):
        MultiscaleConfig(6, 1.0, 1.0)
    with pytest.raises(ValueError):
        cfg.check(6)
    cfg.check(8)


def _report(mins):
    recs = tuple(ScaleRecord(k, m, 0.0, 1.0) for k, m in enumerate(mins))
    return ScaleReport((0, 0), recs)


def test_classify_good_threshold_is_inclusive():
    # (1/2 - 0.1) * 10 is exactly 4, though (0.5 - 0.1) * 10 < 4 in floats
    cfg = MultiscaleConfig(10, 1.0, 0.1)
    assert cfg.good_threshold() == 4
    assert classify_good(_report([0] * 4 + [-5] * 5), cfg)
    assert not classify_good(_report([0] * 3 + [-5] * 6), cfg)
    assert classify_good(_report([0, 0, 0, 0, -5]), MultiscaleConfig(8, 1.0, 0.25))
    assert classify_good(_report([0, 0, -5, -5, -5]), MultiscaleConfig(8, 1.0, 0.25))
    assert not classify_good(_report([0, -5, -5, -5, -5]), MultiscaleConfig(8, 1.0, 0.25))
    assert classify_good(_report([-1.0, -1.0]), MultiscaleConfig(4, 1.0, 0.25))


def test_center_grid():
    pts = center_grid(7, 5)
    a = make_annulus(7, 0)
    assert len(pts) == len(set(pts)) > 0
    for z in pts:
        assert z.x % 2 == 0 and z.y % 2 == 0 and a.contains(z)
        for k in MultiscaleConfig(5, 1.0, 0.25).scale_range:
            assert make_box(7).contains_box(make_box(7 - k, z))
    assert len(center_grid(6, 4)) == len(center_grid(6, 4))


def test_scale_report_and_chain_bound(rng):
    cfg = MultiscaleConfig(4, 1.0, 0.25)
    parent = sample_gff(make_box(6), rng)
    for z in [(0, 0), (36, 12)]:
        rep = scale_report(parent, z, cfg, 0.5, with_parent=True)
        assert [r.k for r in rep.records] == [2, 3]
        for r in rep.records:
            assert r.max_oscillation >= 0
            assert r.parent_across_distance >= math.exp(0.5 * r.min_harmonic) * r.zero_part_across_distance * (1 - 1e-12)
        back = ScaleReport.from_dict(json.loads(rep.to_json()))
        assert back == rep
    with pytest.raises(ValueError):
        scale_report(parent, (60, 0), cfg, 0.5)


def test_crossing_segments():
    a = make_annulus(4, 0)
    path = LatticePath(tuple((x, 0) for x in range(0, 13)) + tuple((12, y) for y in range(1, 3)))
    segs = crossing_segments(path, a)
    assert len(segs) == 1
    assert segs[0].start == (9, 0) and segs[0].end == (11, 0)


def test_segments_lower_bound_geodesic(rng):
    box = make_box(6)
    w = LfppWeights.of(sample_gff(box, rng), 0.4)
    res = point_distance(w, (0, 0), (60, 3))
    total = 0.0
    for k in (1, 2, 3):
        a = make_annulus(6, k)
        segs = crossing_segments(res.witness, a)
        assert segs
        total += sum(w.path_weight(s) for s in segs)
    assert total <= res.value * (1 + 1e-12)


def test_oscillation_tail(rng):
    tail = oscillation_sum_tail(6, 4, 30, rng)
    assert tail.per_scale.shape == (30, 3)
    assert tail.per_scale[:, -1].max() == 0.0  # n - k = 2 has no annulus
    assert np.all(np.diff(tail.exceedance) <= 0)
    assert tail.mean_up_to(2) <= tail.mean_up_to(3) <= tail.mean


def test_independence_small(rng):
    res = cross_scale_independence(6, [1, 2, 3], 600, rng)
    assert res.indicators.shape == (600, 3)
    assert res.max_offdiag() <= 4 / math.sqrt(600) * 1.5
    with pytest.raises(ValueError):
        cross_scale_independence(6, [4], 10, rng)


def test_count_concentration_exact_under_independence(rng):
    ind = rng.random((20_000, 9)) < 0.85
    freq, exact = count_concentration(ind, 0.75)
    assert abs(freq - exact) < 4 * math.sqrt(exact * (1 - exact) / 20_000)


def test_increment_ratio_stable(rng):
    ratios = [harmonic_increment_ratio(n, 2, 400, rng) for n in (5, 6, 7)]
    assert max(ratios) / min(ratios) <= 2


def test_induction_observables(rng):
    obs = induction_observables(6, 4, 1.0, 0.4, 3, rng, centers=[(0, 0), (36, 0)])
    assert obs.very_good.shape == (3, 2)
    assert obs.chain_violations == 0 and obs.chain_checks == 12
    assert obs.R > 0
    assert 0 <= obs.scale_ok_fraction() <= 1
