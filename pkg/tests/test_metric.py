import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpp import oracles
from lfpp.field import sample_gff
from lfpp.lattice import (ORIGIN, AnnulusSpec, BoxSpec, is_circuit_around, is_path_across,
                          make_annulus, make_box)
from lfpp.metric import (LfppWeights, distance_across, distance_around, distance_field,
                         lfpp_distance, point_distance, witness_is_consistent)


def flat(box):
    return LfppWeights(box, np.zeros(box.shape), 1.0)


def test_zero_field_counts_vertices():
    box = make_box(4)
    w = flat(box)
    assert point_distance(w, (0, 0), (3, -2)).value == 6
    assert point_distance(w, (1, 1), (1, 1)).value == 1
    assert distance_across(w, make_annulus(3, 0)).value == 1
    assert distance_across(w, make_annulus(4, 0)).value == 3


def test_zero_field_around_is_shortest_ring():
    box = make_box(4)
    assert distance_around(flat(box), make_annulus(3, 0)).value == 40
    assert distance_around(flat(box), make_annulus(4, 0)).value == 72


def test_weights_guard_overflow():
    box = make_box(1)
    with pytest.raises(OverflowError):
        LfppWeights(box, np.full(box.shape, 800.0), 1.0)
    with pytest.raises(ValueError):
        LfppWeights(box, np.zeros(box.shape), -0.1)


def test_shift_scales_distance(rng):
    f = sample_gff(make_box(3), rng)
    w = LfppWeights.of(f, 0.5)
    d = point_distance(w, (0, 0), (5, 5)).value
    assert point_distance(w.shifted(2.0), (0, 0), (5, 5)).value == pytest.approx(math.exp(1.0) * d)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 2.0))
def test_matches_exhaustive_search(seed, xi):
    r = np.random.default_rng(seed)
    box = BoxSpec(ORIGIN, None, 2)
    w = LfppWeights(box, r.normal(size=box.shape), xi)
    idx = r.choice(box.n_vertices, 4, replace=False)
    src, tgt = [box.point(i) for i in idx[:2]], [box.point(i) for i in idx[2:]]
    fast = lfpp_distance(w, src, tgt).value
    slow = oracles.exhaustive_distance(w.weights, box, src, tgt)
    assert fast == pytest.approx(slow, rel=1e-12)


def test_restricted_domain_against_exhaustive(rng):
    box = BoxSpec(ORIGIN, None, 2)
    for _ in range(20):
        w = LfppWeights(box, rng.normal(size=box.shape), 1.0)
        dom = rng.random(box.shape) < 0.75
        dom[0, 0] = dom[4, 4] = True
        fast = lfpp_distance(w, [box.point(0)], [box.point(24)], domain=dom).value
        slow = oracles.exhaustive_distance(w.weights, box, [box.point(0)], [box.point(24)], dom)
        assert fast == slow or fast == pytest.approx(slow, rel=1e-12)


def test_symmetry_is_exact(rng):
    f = sample_gff(make_box(3), rng)
    w = LfppWeights.of(f, 0.8)
    for a, b in [((0, 0), (6, -4)), ((-7, 7), (7, -7))]:
        assert point_distance(w, a, b).value == point_distance(w, b, a).value


def test_witnesses(rng):
    f = sample_gff(make_box(4), rng)
    w = LfppWeights.of(f, 0.6)
    a = make_annulus(4, 0)
    across = distance_across(w, a)
    assert witness_is_consistent(w, across)
    assert is_path_across(across.witness, a)
    around = distance_around(w, a)
    assert around.witness.closed
    assert is_circuit_around(around.witness, a)
    assert witness_is_consistent(w, around)


def test_witness_is_deterministic(rng):
    f = sample_gff(make_box(3), rng)
    w = LfppWeights.of(f, 0.3)
    one = point_distance(w, (0, 0), (4, 4)).witness
    two = point_distance(w, (0, 0), (4, 4)).witness
    assert one == two


@pytest.mark.parametrize("annulus", [AnnulusSpec(ORIGIN, 3, 1), AnnulusSpec(ORIGIN, 3, 2),
                                     AnnulusSpec((1, -1), 4, 3), make_annulus(3, 0)])
def test_around_matches_cycle_enumeration(annulus, rng):
    box = annulus.outer_box
    for _ in range(4):
        w = LfppWeights(box, rng.normal(size=box.shape), 1.0)
        fast = distance_around(w, annulus).value
        slow = oracles.exhaustive_circuit_distance(w.weights, box, annulus)
        assert fast == pytest.approx(slow, rel=1e-12)


def test_around_with_allowed_set(rng):
    a = make_annulus(3, 0)
    box = a.outer_box
    w = LfppWeights(box, rng.normal(size=box.shape), 1.0)
    allowed = np.ones(box.shape, bool)
    allowed[box.local((5, 0))] = False
    assert math.isinf(distance_around(w, a, allowed=allowed).value)
    allowed = rng.random(box.shape) < 0.9
    fast = distance_around(w, a, allowed=allowed).value
    pts = [box.point(i) for i in np.flatnonzero(allowed.ravel())]
    assert fast == oracles.exhaustive_circuit_distance(w.weights, box, a, allowed=pts) or (
        fast == pytest.approx(oracles.exhaustive_circuit_distance(w.weights, box, a, allowed=pts)))


def test_unreachable_target():
    box = make_box(1)
    dom = np.ones(box.shape, bool)
    dom[2, :] = False
    r = lfpp_distance(flat(box), [(-2, 0)], [(2, 0)], domain=dom)
    assert r.value == math.inf and not r.reachable and r.witness is None
    with pytest.raises(ValueError):
        lfpp_distance(flat(box), [(0, 0)], [(2, 0)], domain=dom)


def test_distance_field_agrees(rng):
    f = sample_gff(make_box(3), rng)
    w = LfppWeights.of(f, 0.5)
    field_ = distance_field(w, [(0, 0)])
    for p in [(3, 3), (-8, 8), (0, 1)]:
        assert field_[w.box.local(p)] == pytest.approx(point_distance(w, (0, 0), p).value, rel=1e-12)


def test_triangle_inequality(rng):
    box = make_box(3)
    w = LfppWeights.of(sample_gff(box, rng), 1.0)
    pts = [box.point(i) for i in rng.choice(box.n_vertices, 12, replace=False)]
    D = np.array([[distance_field(w, [p])[box.local(q)] for q in pts] for p in pts])
    for i in range(12):
        for j in range(12):
            for k in range(12):
                assert D[i, k] <= D[i, j] + D[j, k] - w.weight(pts[j]) + 1e-12 * D[i, k]
