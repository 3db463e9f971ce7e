import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfpp.field import (FieldError, FieldSample, WindowSampler, decompose, dirichlet_fill,
                        dirichlet_laplacian, green_table, harmonic_extension, harmonic_residual,
                        laplacian_eigenvalues, read_field, sample_gff, sample_gff_values,
                        spectral_covariance, variance_at, write_field)
from lfpp.lattice import ORIGIN, BoxSpec, make_box
from lfpp.oracles import green_by_walks


def box_of(half):
    return BoxSpec(ORIGIN, None, half)


def test_green_small_boxes():
    assert green_table(box_of(1)).gr.tolist() == [[1.0]]
    g5 = green_table(box_of(2))
    assert g5(ORIGIN, ORIGIN) == pytest.approx(1.5, abs=1e-12)
    assert g5((2, 0), ORIGIN) == 0.0
    assert np.allclose(g5.gr, g5.gr.T)


def test_green_solves_laplacian():
    box = make_box(2)
    g = green_table(box)
    L = dirichlet_laplacian(box.width - 2)
    assert np.abs(L @ g.gr / 4 - np.eye(L.shape[0])).max() < 1e-10


def test_green_against_walks(rng):
    box = box_of(2)
    mean, se = green_by_walks(box, (1, 0), (0, 0), 100_000, rng)
    assert abs(mean - green_table(box)((1, 0), (0, 0))) < 4 * se


def test_eigenvalues_match_dense():
    m = 7
    dense = np.sort(np.linalg.eigvalsh(dirichlet_laplacian(m)))
    assert np.allclose(np.sort(laplacian_eigenvalues(m).ravel()), dense)


def test_spectral_covariance_equals_green():
    box = make_box(2)
    err = np.abs(spectral_covariance(box) - math.pi / 2 * green_table(box).gr).max()
    assert err < 1e-9


def test_variance_at_matches_table():
    box = make_box(2)
    g = green_table(box)
    for p in [(0, 0), (1, -3), (3, 3), (4, 0)]:
        assert variance_at(box, p) == pytest.approx(math.pi / 2 * g(p, p), abs=1e-12)


def test_backends_agree_in_law(rng):
    box = box_of(2)
    a = sample_gff_values(box, rng, size=40_000, backend="dense")[:, 2, 1]
    b = sample_gff_values(box, rng, size=40_000, backend="spectral")[:, 2, 1]
    se = math.sqrt(2 * a.var() ** 2 / 40_000) * math.sqrt(2)
    assert abs(a.var() - b.var()) < 4 * se
    with pytest.raises(ValueError):
        sample_gff_values(box, rng, backend="nope")


def test_sample_field_properties(rng):
    f = sample_gff(make_box(3), rng)
    assert (f.values[f.box.boundary_mask()] == 0).all()
    assert not f.values.flags.writeable
    assert (-f).values[3, 4] == -f.values[3, 4]
    with pytest.raises(TypeError):
        sample_gff(make_box(1), 42)


def test_field_validation():
    box = box_of(1)
    with pytest.raises(FieldError):
        FieldSample(box, np.ones((3, 3)))
    with pytest.raises(FieldError):
        FieldSample(box, np.zeros((4, 4)))
    bad = np.zeros((3, 3))
    bad[1, 1] = np.nan
    with pytest.raises(FieldError):
        FieldSample(box, bad)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.sampled_from(["dense", "sine"]), st.integers(0, 2**32 - 1))
def test_dirichlet_fill_is_harmonic(m, method, seed):
    if method == "dense" and m > 12:
        return
    b = np.random.default_rng(seed).normal(size=(m + 2, m + 2))
    h = dirichlet_fill(b, method=method)
    assert harmonic_residual(h) < 1e-9
    ring = np.ones_like(b, bool)
    ring[1:-1, 1:-1] = False
    assert np.array_equal(h[ring], b[ring])


def test_dirichlet_methods_agree(rng):
    b = rng.normal(size=(3, 13, 13))
    assert np.abs(dirichlet_fill(b, "dense") - dirichlet_fill(b, "sine")).max() < 1e-10


def test_harmonic_extension_of_linear_data():
    box = make_box(3)
    X, Y = box.coords()
    vals = np.where(box.boundary_mask(), 0.0, 0.0)
    parent = FieldSample(box, vals)
    sub = make_box(1, (2, 2))
    assert np.abs(harmonic_extension(parent, sub)).max() == 0.0
    lin = (2 * X - Y).astype(float)
    h = dirichlet_fill(lin)
    assert np.abs(h - lin).max() < 1e-9


def test_decompose_identities(rng):
    parent = sample_gff(make_box(4), rng)
    for z, k in [((0, 0), 1), ((3, -5), 2), ((-8, 8), 3)]:
        dec = decompose(parent, z, k)
        assert dec.sub_box == make_box(4 - k, z)
        assert np.abs(dec.harmonic_part + dec.zero_part - parent.restrict(dec.sub_box)).max() < 1e-9
        assert harmonic_residual(dec.harmonic_part) < 1e-9
        assert (dec.zero_part[dec.sub_box.boundary_mask()] == 0).all()
    with pytest.raises(ValueError):
        decompose(parent, (14, 0), 2)


def test_window_sampler_covariance_exact():
    box = make_box(3)
    win = make_box(1, (3, -2))
    ws = WindowSampler(box, win)
    full = np.zeros((box.n_vertices, box.n_vertices))
    idx = np.flatnonzero(box.interior_mask().ravel())
    full[np.ix_(idx, idx)] = spectral_covariance(box)
    sel = np.flatnonzero(win.mask(box).ravel())
    assert np.abs(ws.covariance() - full[np.ix_(sel, sel)]).max() < 1e-9


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_field_io_round_trip(tmp_path, rng, suffix):
    f = sample_gff(make_box(2, (1, -1)), rng)
    path = tmp_path / f"field{suffix}"
    write_field(path, f)
    g = read_field(path)
    assert g.box == f.box
    assert np.array_equal(g.values, f.values)
