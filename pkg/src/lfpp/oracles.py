"""Slow reference implementations used to cross-check the fast code paths.

Everything here is plain Python over small grids: exhaustive path search,
explicit flood fills, literal path enumeration and random-walk simulation.
None of it shares code with the solvers it checks beyond the box and
annulus geometry.
"""
from __future__ import annotations

import math
from collections import deque
from itertools import product

import numpy as np

from .lattice import STEPS, AnnulusSpec, BoxSpec


def _nbrs(p, ok):
    for dx, dy in STEPS:
        q = (p[0] + dx, p[1] + dy)
        if ok(q):
            yield q


def exhaustive_distance(weights: np.ndarray, box: BoxSpec, sources, targets, domain=None) -> float:
    """Minimum vertex-weight sum over simple paths, by depth-first search.

    Branches are cut once their partial sum reaches the best total so far,
    which is safe because weights are positive.
    """
    W = {}
    for i, j in product(range(box.width), repeat=2):
        if domain is None or domain[i, j]:
            W[(box.xmin + i, box.ymin + j)] = float(weights[i, j])
    srcs = [tuple(s) for s in sources if tuple(s) in W]
    tgts = {tuple(t) for t in targets if tuple(t) in W}
    best = [math.inf]
    seen = set()

    def dfs(p, acc):
        if acc >= best[0]:
            return
        if p in tgts:
            best[0] = acc
            return
        for q in _nbrs(p, W.__contains__):
            if q not in seen:
                seen.add(q)
                dfs(q, acc + W[q])
                seen.discard(q)

    for s in sorted(srcs, key=W.get):
        seen = {s}
        dfs(s, W[s])
    return best[0]


def _ring_vertices(a: AnnulusSpec) -> set:
    cx, cy = a.center
    R = a.outer_half_side
    out = set()
    for x in range(cx - R, cx + R + 1):
        for y in range(cy - R, cy + R + 1):
            if a.contains((x, y)):
                out.add((x, y))
    return out


def _crossing(p, q, center) -> int:
    """Signed crossing of the slit ray ``y = cy - 1/2, x > cx`` by the step ``p -> q``."""
    cx, cy = center
    if p[0] != q[0] or p[0] <= cx:
        return 0
    if (p[1], q[1]) == (cy - 1, cy):
        return 1
    if (p[1], q[1]) == (cy, cy - 1):
        return -1
    return 0


def winding_circuit_exists(open_set, a: AnnulusSpec) -> bool:
    """Whether open annulus vertices carry a closed walk of nonzero winding.

    Breadth-first search on the covering graph, one start per 4-connected
    component: reaching a vertex on two different layers closes such a walk.
    """
    verts = _ring_vertices(a) & {tuple(p) for p in open_set}
    layer: dict = {}
    for v0 in sorted(verts):
        if v0 in layer:
            continue
        layer[v0] = 0
        queue = deque([v0])
        while queue:
            p = queue.popleft()
            for q in _nbrs(p, verts.__contains__):
                nl = layer[p] + _crossing(p, q, a.center)
                if q not in layer:
                    layer[q] = nl
                    queue.append(q)
                elif layer[q] != nl:
                    return True
    return False


def closed_crossing_exists(open_set, a: AnnulusSpec) -> bool:
    """Whether closed annulus vertices join the inner ring to the outer boundary (8-adjacency)."""
    ring = _ring_vertices(a)
    closed = ring - {tuple(p) for p in open_set}
    cx, cy = a.center
    r, R = a.inner_half_side, a.outer_half_side
    seeds = [p for p in closed if max(abs(p[0] - cx), abs(p[1] - cy)) == r + 1]
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        p = queue.popleft()
        if max(abs(p[0] - cx), abs(p[1] - cy)) == R:
            return True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                q = (p[0] + dx, p[1] + dy)
                if q in closed and q not in seen:
                    seen.add(q)
                    queue.append(q)
    return False


def exhaustive_circuit_distance(weights: np.ndarray, box: BoxSpec, a: AnnulusSpec,
                                allowed=None) -> float:
    """Cheapest simple cycle of nonzero winding, by enumerating cycles.

    Each cycle is rooted at its smallest vertex; only feasible for annuli
    with outer half side up to about 5.
    """
    ring = _ring_vertices(a)
    if allowed is not None:
        ring &= {tuple(p) for p in allowed}
    W = {p: float(weights[box.local(p)]) for p in ring}
    if not W:
        return math.inf
    order = {p: i for i, p in enumerate(sorted(ring))}
    wmin = min(W.values())
    cx, cy = a.center
    squares = [[p for p in ring if max(abs(p[0] - cx), abs(p[1] - cy)) == rad]
               for rad in range(a.inner_half_side + 1, a.outer_half_side + 1)]
    best = [min([sum(W[p] for p in sq) for sq in squares if len(sq) == 8 * (max(abs(sq[0][0] - cx), abs(sq[0][1] - cy)))]
                + [math.inf])]

    def dfs(root, p, acc, wind, seen):
        back = abs(p[0] - root[0]) + abs(p[1] - root[1]) - 1
        if acc + wmin * max(back, 0) >= best[0]:
            return
        for q in _nbrs(p, W.__contains__):
            step = _crossing(p, q, a.center)
            if q == root and len(seen) > 2 and wind + step != 0:
                best[0] = min(best[0], acc)
                continue
            if q in seen or order[q] < order[root]:
                continue
            seen.add(q)
            dfs(root, q, acc + W[q], wind + step, seen)
            seen.discard(q)

    for root in sorted(ring):
        dfs(root, root, W[root], 0, {root})
    return best[0]


def excursion_mass_truncated(box: BoxSpec, x, steps: int) -> tuple[float, float]:
    """Excursion mass from ``x`` summed over paths of length ``<= steps``.

    Returns ``(partial, remainder)``.  Walk mass still alive after ``steps``
    steps ends on the boundary with probability one, so the exact mass is
    ``partial + remainder``.
    """
    x = tuple(x)
    bd = box.boundary_mask()

    def is_bd(p):
        return box.contains(p) and bd[box.local(p)]

    alive = {}
    ended = 1.0
    for q in _nbrs(x, box.contains):
        if is_bd(q):
            ended += 0.25
        else:
            alive[q] = alive.get(q, 0.0) + 0.25
    for _ in range(steps - 1):
        nxt = {}
        for p, m in alive.items():
            for dx, dy in STEPS:
                q = (p[0] + dx, p[1] + dy)
                if is_bd(q):
                    ended += m / 4
                else:
                    nxt[q] = nxt.get(q, 0.0) + m / 4
        alive = nxt
    return 0.5 * ended, 0.5 * sum(alive.values())


def excursion_paths(box: BoxSpec, x, steps: int) -> list[tuple]:
    """Literal list of excursions from ``x`` with at most ``steps`` steps."""
    x = tuple(x)
    bd = box.boundary_mask()

    def is_bd(p):
        return bd[box.local(p)]

    out = [(x,)]
    stack = [(x, q) for q in _nbrs(x, box.contains)]
    while stack:
        path = stack.pop()
        if is_bd(path[-1]):
            out.append(path)
            continue
        if len(path) - 1 >= steps:
            continue
        for q in _nbrs(path[-1], box.contains):
            stack.append(path + (q,))
    return out


def green_by_walks(box: BoxSpec, z, w, walks: int, rng: np.random.Generator,
                   batch: int = 100_000) -> tuple[float, float]:
    """Mean and standard error of visits to ``w`` by walks from ``z`` killed on the boundary."""
    bd = box.boundary_mask()
    steps = np.array(STEPS)
    z0 = np.array(box.local(z))
    w0 = np.array(box.local(w))
    total = total2 = 0.0
    done = 0
    while done < walks:
        size = min(batch, walks - done)
        pos = np.tile(z0, (size, 1))
        visits = np.zeros(size)
        live = np.ones(size, bool)
        if bd[tuple(z0)]:
            live[:] = False
        while live.any():
            idx = np.flatnonzero(live)
            visits[idx] += (pos[idx] == w0).all(axis=1)
            pos[idx] += steps[rng.integers(0, 4, idx.size)]
            live[idx] = ~bd[pos[idx, 0], pos[idx, 1]]
        total += visits.sum()
        total2 += (visits**2).sum()
        done += size
    mean = total / walks
    var = total2 / walks - mean**2
    return mean, math.sqrt(var * walks / (walks - 1) / walks)

