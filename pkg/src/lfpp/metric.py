"""Vertex-weighted LFPP distances.

A path's length is the sum of ``exp(xi * h(v))`` over *all* its vertices,
endpoints included, so a one-vertex path has length ``exp(xi * h(z))``.
Shortest paths run on a directed graph whose edge ``u -> v`` costs the
weight of ``v``; a virtual super-source reaches each source at that
source's own weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .field import FieldSample
from .lattice import AnnulusSpec, BoxSpec, LatticePath, LatticePoint, points_to_mask

MAX_EXPONENT = 700.0


class UnreachableError(LookupError):
    pass


@dataclass(frozen=True, eq=False)
class LfppWeights:
    """``exp(xi * log_field)`` on a box.  ``log_field`` need not vanish on the boundary."""

    box: BoxSpec
    log_field: np.ndarray
    xi: float

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")
        h = np.array(self.log_field, dtype=np.float64)
        if h.shape != self.box.shape:
            raise ValueError("field shape does not match box")
        expo = self.xi * h
        if not np.all(np.isfinite(expo)) or np.abs(expo).max() > MAX_EXPONENT:
            raise OverflowError(f"|xi * h| exceeds {MAX_EXPONENT}; weights would overflow")
        w = np.exp(expo)
        h.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "log_field", h)
        object.__setattr__(self, "_w", w)

    @classmethod
    def of(cls, field: FieldSample | np.ndarray, xi: float, box: BoxSpec | None = None):
        if isinstance(field, FieldSample):
            return cls(field.box, field.values, xi)
        if box is None:
            raise ValueError("a raw array needs its box")
        return cls(box, field, xi)

    @property
    def weights(self) -> np.ndarray:
        return self._w  # type: ignore[attr-defined]

    def weight(self, p) -> float:
        return float(self._w[self.box.local(p)])  # type: ignore[attr-defined]

    def shifted(self, c: float) -> "LfppWeights":
        return LfppWeights(self.box, self.log_field + c, self.xi)

    def path_weight(self, path: LatticePath) -> float:
        return math.fsum(self.weight(v) for v in path.distinct())


@dataclass(frozen=True)
class DistanceResult:
    value: float
    witness: LatticePath | None
    source: str = ""
    target: str = ""

    @property
    def reachable(self) -> bool:
        return math.isfinite(self.value)


def as_mask(spec, box: BoxSpec) -> np.ndarray:
    """Coerce a mask, box, annulus, point or iterable of points to a mask on ``box``."""
    if isinstance(spec, np.ndarray) and spec.dtype == bool:
        if spec.shape != box.shape:
            raise ValueError("mask shape does not match box")
        return spec
    if isinstance(spec, (BoxSpec, AnnulusSpec)):
        return spec.mask(box)
    if isinstance(spec, tuple) and len(spec) == 2 and all(isinstance(c, (int, np.integer)) for c in spec):
        spec = [spec]
    return points_to_mask(spec, box)


def _neighbour_table(domain: np.ndarray) -> np.ndarray:
    """``(N, 4)`` compressed indices of 4-neighbours inside ``domain`` (``-1`` if absent)."""
    w, h = domain.shape
    pos = np.full(domain.shape, -1, dtype=np.int64)
    ii, jj = np.nonzero(domain)
    pos[ii, jj] = np.arange(ii.size)
    out = np.full((ii.size, 4), -1, dtype=np.int64)
    for d, (dx, dy) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
        ni, nj = ii + dx, jj + dy
        ok = (ni >= 0) & (ni < w) & (nj >= 0) & (nj < h)
        out[ok, d] = pos[ni[ok], nj[ok]]
    return out


class _Domain:
    def __init__(self, domain: np.ndarray, box: BoxSpec):
        self.box = box
        self.mask = domain
        self.flat = np.flatnonzero(domain)
        self.nbr = _neighbour_table(domain)
        self.size = self.flat.size

    def compress(self, mask: np.ndarray) -> np.ndarray:
        return np.flatnonzero(mask.ravel()[self.flat])

    def point(self, i: int) -> LatticePoint:
        return self.box.point(self.flat[i])


def _edges(dom: _Domain):
    src = np.repeat(np.arange(dom.size), 4)
    dst = dom.nbr.ravel()
    ok = dst >= 0
    return src[ok], dst[ok]


def _backtrack(dist, wts, nbr_of, end, is_start):
    """Walk back from ``end`` taking the smallest-index predecessor that is tight."""
    path = [end]
    v = end
    while not is_start(v):
        best = None
        for u in nbr_of(v):
            if dist[u] + wts(v) == dist[v] and (best is None or u < best):
                best = u
        if best is None:
            # tolerate last-bit differences from a different summation order
            cands = [u for u in nbr_of(v) if dist[u] < dist[v]]
            best = min(cands, key=lambda u: (abs(dist[u] + wts(v) - dist[v]), u))
        path.append(best)
        v = best
    return path[::-1]


def lfpp_distance(w: LfppWeights, sources, targets, domain=None, witness: bool = True,
                  source_label: str = "sources", target_label: str = "targets") -> DistanceResult:
    box = w.box
    dmask = np.ones(box.shape, dtype=bool) if domain is None else as_mask(domain, box)
    smask, tmask = as_mask(sources, box), as_mask(targets, box)
    if np.any(smask & ~dmask) or np.any(tmask & ~dmask):
        raise ValueError("sources and targets must lie in the domain")
    if not smask.any() or not tmask.any():
        raise ValueError("empty source or target set")
    dom = _Domain(dmask, box)
    wv = w.weights.ravel()[dom.flat]
    s_idx, t_idx = dom.compress(smask), dom.compress(tmask)
    rows, cols = _edges(dom)
    n = dom.size
    rows = np.concatenate([rows, np.full(s_idx.size, n)])
    cols = np.concatenate([cols, s_idx])
    graph = sparse.csr_matrix((wv[cols], (rows, cols)), shape=(n + 1, n + 1))
    dist = dijkstra(graph, indices=n)
    td = dist[t_idx]
    if not np.isfinite(td).any():
        return DistanceResult(math.inf, None, source_label, target_label)
    end = int(t_idx[np.flatnonzero(td == td.min())[0]])
    src_set = set(s_idx.tolist())

    def is_start(v):
        return v in src_set and dist[v] == wv[v]

    nodes = _backtrack(dist, lambda v: wv[v], lambda v: [u for u in dom.nbr[v] if u >= 0], end, is_start)
    path = LatticePath(tuple(dom.point(i) for i in nodes))
    value = math.fsum(wv[i] for i in nodes)
    return DistanceResult(value, path if witness else None, source_label, target_label)


def distance_field(w: LfppWeights, sources, domain=None) -> np.ndarray:
    """Distances from ``sources`` to every vertex of the box (``inf`` off the domain).

    Values come straight from Dijkstra, so they may differ from
    ``lfpp_distance`` in the last bit.
    """
    box = w.box
    dmask = np.ones(box.shape, dtype=bool) if domain is None else as_mask(domain, box)
    smask = as_mask(sources, box) & dmask
    if not smask.any():
        raise ValueError("empty source set")
    dom = _Domain(dmask, box)
    wv = w.weights.ravel()[dom.flat]
    s_idx = dom.compress(smask)
    rows, cols = _edges(dom)
    n = dom.size
    rows = np.concatenate([rows, np.full(s_idx.size, n)])
    cols = np.concatenate([cols, s_idx])
    graph = sparse.csr_matrix((wv[cols], (rows, cols)), shape=(n + 1, n + 1))
    out = np.full(box.n_vertices, math.inf)
    out[dom.flat] = dijkstra(graph, indices=n)[:n]
    return out.reshape(box.shape)


def point_distance(w: LfppWeights, z, y, domain=None) -> DistanceResult:
    return lfpp_distance(w, [tuple(z)], [tuple(y)], domain, source_label=str(tuple(z)),
                         target_label=str(tuple(y)))


def _check_annulus(w: LfppWeights, a: AnnulusSpec) -> None:
    if not w.box.contains_box(a.outer_box):
        raise ValueError("annulus not inside the field's box")


def distance_across(w: LfppWeights, a: AnnulusSpec, witness: bool = True) -> DistanceResult:
    _check_annulus(w, a)
    return lfpp_distance(w, a.inner_boundary_mask(w.box), a.outer_boundary_mask(w.box),
                         a.mask(w.box), witness=witness, source_label="inner boundary",
                         target_label="outer boundary")


def distance_around(w: LfppWeights, a: AnnulusSpec, allowed=None, layers: int = 2) -> DistanceResult:
    """Cheapest 4-connected circuit in the annulus winding once around its hole.

    The annulus is slit along the ray ``y = cy - 1/2, x > cx``.  Walks are
    lifted to a covering graph whose layer counts signed slit crossings; a
    circuit through slit vertex ``s`` is a walk from ``(s, 0)`` to ``(s, 1)``.
    The layer range is widened until no state on an edge layer is cheaper
    than the answer, which makes the truncation exact.  ``allowed``
    restricts the circuit to a vertex subset.
    """
    _check_annulus(w, a)
    box = w.box
    dmask = a.mask(box)
    if allowed is not None:
        dmask = dmask & as_mask(allowed, box)
    dom = _Domain(dmask, box)
    if dom.size == 0:
        return DistanceResult(math.inf, None, "circuit", "circuit")
    wv = w.weights.ravel()[dom.flat]
    X, Y = box.coords()
    cx, cy = a.center
    xs, ys = X.ravel()[dom.flat], Y.ravel()[dom.flat]
    rows, cols = _edges(dom)
    delta = np.zeros(rows.size, dtype=np.int64)
    ray = (xs[rows] > cx) & (xs[rows] == xs[cols])
    delta[ray & (ys[rows] == cy - 1) & (ys[cols] == cy)] = 1
    delta[ray & (ys[rows] == cy) & (ys[cols] == cy - 1)] = -1
    slit = np.unique(rows[delta == -1])
    if slit.size == 0:
        return DistanceResult(math.inf, None, "circuit", "circuit")
    n = dom.size
    while True:
        nl = 2 * layers + 1
        lr, lc = [], []
        for lvl in range(-layers, layers + 1):
            to = lvl + delta
            ok = np.abs(to) <= layers
            lr.append(rows[ok] + (lvl + layers) * n)
            lc.append(cols[ok] + (to[ok] + layers) * n)
        lr, lc = np.concatenate(lr), np.concatenate(lc)
        graph = sparse.csr_matrix((wv[lc % n], (lr, lc)), shape=(nl * n, nl * n))
        best, best_s, best_dist = math.inf, -1, None
        edge_min = []
        for s in slit:
            start = int(s) + layers * n
            dist = dijkstra(graph, indices=start, limit=best)
            d = dist[int(s) + (layers + 1) * n]
            edge_min.append(min(dist[:n].min(), dist[(nl - 1) * n:].min()))
            if d < best:
                best, best_s, best_dist = d, int(s), dist
        if not math.isfinite(best) or min(edge_min) >= best:
            break
        layers *= 2
    if not math.isfinite(best):
        return DistanceResult(math.inf, None, "circuit", "circuit")
    start = best_s + layers * n

    def preds(v):
        i, lvl = v % n, v // n - layers
        out = []
        for u in dom.nbr[i]:
            if u < 0:
                continue
            d = 0
            if xs[u] > cx and xs[u] == xs[i]:
                if ys[u] == cy - 1 and ys[i] == cy:
                    d = 1
                elif ys[u] == cy and ys[i] == cy - 1:
                    d = -1
            if abs(lvl - d) <= layers:
                out.append(int(u) + (lvl - d + layers) * n)
        return out

    nodes = _backtrack(best_dist, lambda v: wv[v % n], preds, best_s + (layers + 1) * n,
                       lambda v: v == start)
    path = LatticePath(tuple(dom.point(v % n) for v in nodes))
    value = math.fsum(wv[v % n] for v in nodes[1:])
    return DistanceResult(value, path, "circuit", "circuit")


def witness_is_consistent(w: LfppWeights, r: DistanceResult, rel: float = 1e-12) -> bool:
    if r.witness is None:
        return False
    return math.isclose(w.path_weight(r.witness), r.value, rel_tol=rel)
