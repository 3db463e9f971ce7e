"""Boundary-to-boundary excursions and their Poisson process.

The excursion measure gives mass ``4**-k`` to every length-``k`` path
between boundary vertices whose intermediate vertices are interior, with an
overall factor 1/2.  From a boundary vertex ``x`` with ``d`` in-box
neighbours the mass is ``(1 + d/4) / 2``: the length-0 path contributes 1,
and each first step contributes 1/4 because either it lands on the boundary
(the path ends) or the killed walk continuing from an interior vertex has
total mass one.  Sampling follows the same factorisation exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

from .lattice import AnnulusSpec, BoxSpec, LatticePath, LatticePoint, STEPS, surrounds

_STEP_ARR = np.array(STEPS, dtype=np.int64)


def mass_from_degree(d: int) -> float:
    if not 0 <= d <= 4:
        raise ValueError("degree must be in [0, 4]")
    return 0.5 * (1.0 + d / 4.0)


def excursion_mass_at(box: BoxSpec, x) -> float:
    x = LatticePoint(*x)
    if not (box.contains(x) and box.boundary_mask()[box.local(x)]):
        raise ValueError(f"{tuple(x)} is not a boundary vertex")
    return mass_from_degree(box.in_box_degree(x))


def total_mass(box: BoxSpec) -> float:
    return sum(excursion_mass_at(box, x) for x in box.boundary_points())


@dataclass(frozen=True)
class Excursion:
    path: LatticePath

    def validate(self, box: BoxSpec) -> None:
        bd = box.boundary_mask()
        interior = box.interior_mask()
        v = self.path.vertices
        for end in (v[0], v[-1]):
            if not (box.contains(end) and bd[box.local(end)]):
                raise ValueError(f"endpoint {tuple(end)} not on the boundary")
        for p in v[1:-1]:
            if not (box.contains(p) and interior[box.local(p)]):
                raise ValueError(f"intermediate vertex {tuple(p)} not interior")

    @property
    def length(self) -> int:
        return self.path.length


@dataclass(frozen=True)
class ExcursionProcess:
    box: BoxSpec
    u: float
    excursions: tuple[Excursion, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.excursions)

    def union_mask(self) -> np.ndarray:
        mask = np.zeros(self.box.shape, dtype=bool)
        for e in self.excursions:
            for p in e.path.vertices:
                mask[self.box.local(p)] = True
        return mask

    def to_jsonl(self, fh) -> None:
        for i, e in enumerate(self.excursions):
            fh.write(json.dumps({"box": self.box.to_dict(), "u": self.u, "index": i,
                                 "vertices": e.path.to_list()}) + "\n")

    @classmethod
    def from_jsonl(cls, lines) -> "ExcursionProcess":
        recs = [json.loads(line) for line in lines if line.strip()]
        if not recs:
            raise ValueError("empty excursion file (box and u unknown)")
        box = BoxSpec.from_dict(recs[0]["box"])
        recs.sort(key=lambda r: r["index"])
        exc = tuple(Excursion(LatticePath(tuple(map(tuple, r["vertices"])))) for r in recs)
        return cls(box, float(recs[0]["u"]), exc)


class _Tables:
    """Per-box lookup tables for the sampler, in local grid coordinates."""

    def __init__(self, box: BoxSpec):
        self.box = box
        bpts = box.boundary_points()
        self.starts = np.array([box.local(p) for p in bpts], dtype=np.int64)
        self.mass = np.array([excursion_mass_at(box, p) for p in bpts])
        self.total = float(self.mass.sum())
        self.nbrs = []
        for p in bpts:
            self.nbrs.append([box.local((p.x + dx, p.y + dy)) for dx, dy in STEPS
                              if box.contains((p.x + dx, p.y + dy))])
        self.degree = np.array([len(nb) for nb in self.nbrs], dtype=np.int64)
        self.nbr_arr = np.zeros((len(bpts), 4, 2), dtype=np.int64)
        for i, nb in enumerate(self.nbrs):
            for j, q in enumerate(nb):
                self.nbr_arr[i, j] = q
        self.boundary = box.boundary_mask()


@lru_cache(maxsize=16)
def _tables(box: BoxSpec) -> _Tables:
    return _Tables(box)


def _simulate(box: BoxSpec, u: float, processes: int, rng: np.random.Generator,
              record: bool) -> tuple[np.ndarray, list | np.ndarray]:
    """Run ``processes`` independent Poisson processes at once.

    Returns the excursion counts and either per-excursion step arrays
    (``record``) or the union-of-vertices masks, one per process.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    tb = _tables(box)
    counts = rng.poisson(u * u * tb.total, size=processes)
    owner = np.repeat(np.arange(processes), counts)
    n = owner.size
    start = rng.choice(tb.starts.shape[0], size=n, p=tb.mass / tb.total)
    trivial = rng.random(n) < 0.5 / tb.mass[start]
    first = np.floor(rng.random(n) * tb.degree[start]).astype(np.int64)
    pos0 = tb.starts[start]
    pos1 = tb.nbr_arr[start, first]
    W = box.width
    union = None if record else np.zeros((processes, W, W), dtype=bool)
    steps: list[list[np.ndarray]] = [[p] for p in pos0] if record else []
    if not record:
        union[owner, pos0[:, 0], pos0[:, 1]] = True
    live = np.flatnonzero(~trivial)
    cur = pos1[live]
    while live.size:
        if record:
            for i, p in zip(live, cur):
                steps[i].append(p)
        else:
            union[owner[live], cur[:, 0], cur[:, 1]] = True
        keep = ~tb.boundary[cur[:, 0], cur[:, 1]]
        live, cur = live[keep], cur[keep]
        if not live.size:
            break
        cur = cur + _STEP_ARR[rng.integers(0, 4, size=live.size)]
    if record:
        return counts, [np.array(s) for s in steps]
    return counts, union


def sample_excursion_process(box: BoxSpec, u: float, rng: np.random.Generator) -> ExcursionProcess:
    _, steps = _simulate(box, u, 1, rng, record=True)
    exc = tuple(Excursion(LatticePath(tuple((int(i) + box.xmin, int(j) + box.ymin) for i, j in s)))
                for s in steps)
    return ExcursionProcess(box, float(u), exc)


def sample_union_masks(box: BoxSpec, u: float, processes: int, rng: np.random.Generator,
                       chunk: int = 512) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(counts, union_masks)`` in chunks; only the vertex union of each process is kept."""
    done = 0
    while done < processes:
        size = min(chunk, processes - done)
        yield _simulate(box, u, size, rng, record=False)
        done += size


def has_disconnecting_excursion(p: ExcursionProcess, a: AnnulusSpec) -> bool:
    if not p.box.contains_box(a.outer_box):
        raise ValueError("annulus not inside the process box")
    return union_disconnects(p.union_mask(), p.box, a)


def union_disconnects(union: np.ndarray, box: BoxSpec, a: AnnulusSpec) -> bool:
    grid = a.outer_box
    i0, j0 = box.local((grid.xmin, grid.ymin))
    window = union[i0:i0 + grid.width, j0:j0 + grid.width]
    return surrounds(window, a, grid)
