"""Dyadic boxes and square annuli on Z^2.

Vertex sets are handled as boolean masks over the bounding grid of a
:class:`BoxSpec`.  Grids are indexed ``[x - xmin, y - ymin]`` and flattened
in row-major (C) order, so the flat index of a vertex is stable across runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import isqrt
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

COORD_BOUND = 2**30

FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
EIGHT = np.ones((3, 3), dtype=bool)
STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class LatticePoint(NamedTuple):
    x: int
    y: int

    def __add__(self, other):  # type: ignore[override]
        return LatticePoint(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return LatticePoint(self.x - other[0], self.y - other[1])


ORIGIN = LatticePoint(0, 0)


def _check_coord(*values: int) -> None:
    for v in values:
        if abs(v) >= COORD_BOUND:
            raise ValueError(f"coordinate {v} outside |c| < 2**30")


def sup_norm(dx, dy):
    return np.maximum(np.abs(dx), np.abs(dy))


@dataclass(frozen=True)
class BoxSpec:
    """The square ``center + [-half_side, half_side]^2``."""

    center: LatticePoint
    scale: int | None
    half_side: int

    def __post_init__(self):
        if self.half_side < 1:
            raise ValueError("half_side must be positive")
        object.__setattr__(self, "center", LatticePoint(*self.center))
        c = self.center
        _check_coord(c.x - self.half_side, c.x + self.half_side,
                     c.y - self.half_side, c.y + self.half_side)

    @property
    def width(self) -> int:
        return 2 * self.half_side + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.width, self.width)

    @property
    def xmin(self) -> int:
        return self.center.x - self.half_side

    @property
    def ymin(self) -> int:
        return self.center.y - self.half_side

    @property
    def n_vertices(self) -> int:
        return self.width**2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute coordinate arrays ``(X, Y)`` of shape :attr:`shape`."""
        ax = np.arange(self.width)
        X, Y = np.meshgrid(ax + self.xmin, ax + self.ymin, indexing="ij")
        return X, Y

    def contains(self, p) -> bool:
        return (abs(p[0] - self.center.x) <= self.half_side
                and abs(p[1] - self.center.y) <= self.half_side)

    def contains_box(self, other: "BoxSpec") -> bool:
        return (abs(other.center.x - self.center.x) + other.half_side <= self.half_side
                and abs(other.center.y - self.center.y) + other.half_side <= self.half_side)

    def index(self, p) -> int:
        if not self.contains(p):
            raise ValueError(f"{p} not in box")
        return (p[0] - self.xmin) * self.width + (p[1] - self.ymin)

    def point(self, flat: int) -> LatticePoint:
        i, j = divmod(int(flat), self.width)
        return LatticePoint(i + self.xmin, j + self.ymin)

    def local(self, p) -> tuple[int, int]:
        return (p[0] - self.xmin, p[1] - self.ymin)

    def member(self, X, Y):
        return sup_norm(X - self.center.x, Y - self.center.y) <= self.half_side

    def boundary_member(self, X, Y):
        return sup_norm(X - self.center.x, Y - self.center.y) == self.half_side

    def mask(self, grid: "BoxSpec | None" = None) -> np.ndarray:
        X, Y = (grid or self).coords()
        return self.member(X, Y)

    def boundary_mask(self, grid: "BoxSpec | None" = None) -> np.ndarray:
        X, Y = (grid or self).coords()
        return self.boundary_member(X, Y)

    def interior_mask(self, grid: "BoxSpec | None" = None) -> np.ndarray:
        X, Y = (grid or self).coords()
        return sup_norm(X - self.center.x, Y - self.center.y) < self.half_side

    def boundary_points(self) -> list[LatticePoint]:
        return mask_to_points(self.boundary_mask(), self)

    def in_box_degree(self, p) -> int:
        """Number of 4-neighbours of ``p`` that lie in the box."""
        return sum(self.contains((p[0] + dx, p[1] + dy)) for dx, dy in STEPS)

    def translate(self, d) -> "BoxSpec":
        return BoxSpec(self.center + d, self.scale, self.half_side)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "scale": self.scale,
                "half_side": self.half_side}

    @classmethod
    def from_dict(cls, d: dict) -> "BoxSpec":
        scale = d.get("scale")
        return cls(LatticePoint(*d["center"]), None if scale is None else int(scale),
                   int(d["half_side"]))


@dataclass(frozen=True)
class AnnulusSpec:
    """Vertices ``v`` with ``inner < |v - center|_inf <= outer``.

    ``inner_boundary`` holds the annulus vertices 4-adjacent to the inner
    box and ``outer_boundary`` those 4-adjacent to the complement of the
    outer box.  They are disjoint once ``outer - inner >= 2``; for a ring of
    width one they coincide up to the four corners.
    """

    center: LatticePoint
    outer_half_side: int
    inner_half_side: int

    def __post_init__(self):
        object.__setattr__(self, "center", LatticePoint(*self.center))
        if not 0 < self.inner_half_side < self.outer_half_side:
            raise ValueError(
                f"degenerate annulus: inner={self.inner_half_side}, "
                f"outer={self.outer_half_side}")
        c = self.center
        _check_coord(c.x - self.outer_half_side, c.x + self.outer_half_side,
                     c.y - self.outer_half_side, c.y + self.outer_half_side)

    @property
    def width(self) -> int:
        return self.outer_half_side - self.inner_half_side

    @property
    def n_vertices(self) -> int:
        return (2 * self.outer_half_side + 1) ** 2 - (2 * self.inner_half_side + 1) ** 2

    @property
    def outer_box(self) -> BoxSpec:
        return BoxSpec(self.center, None, self.outer_half_side)

    @property
    def inner_box(self) -> BoxSpec:
        return BoxSpec(self.center, None, self.inner_half_side)

    def _rel(self, X, Y):
        dx, dy = X - self.center.x, Y - self.center.y
        return np.abs(dx), np.abs(dy), sup_norm(dx, dy)

    def member(self, X, Y):
        _, _, s = self._rel(X, Y)
        return (s > self.inner_half_side) & (s <= self.outer_half_side)

    def inner_boundary_member(self, X, Y):
        ax, ay, s = self._rel(X, Y)
        r = self.inner_half_side
        return (s == r + 1) & (np.minimum(ax, ay) <= r)

    def dual_inner_member(self, X, Y):
        """Annulus vertices 8-adjacent to the inner box (the seeds of a dual crossing)."""
        _, _, s = self._rel(X, Y)
        return s == self.inner_half_side + 1

    def outer_boundary_member(self, X, Y):
        _, _, s = self._rel(X, Y)
        return s == self.outer_half_side

    def _on(self, fn, grid: BoxSpec | None):
        X, Y = (grid or self.outer_box).coords()
        return fn(X, Y)

    def mask(self, grid: BoxSpec | None = None) -> np.ndarray:
        return self._on(self.member, grid)

    def inner_boundary_mask(self, grid: BoxSpec | None = None) -> np.ndarray:
        return self._on(self.inner_boundary_member, grid)

    def outer_boundary_mask(self, grid: BoxSpec | None = None) -> np.ndarray:
        return self._on(self.outer_boundary_member, grid)

    def dual_inner_mask(self, grid: BoxSpec | None = None) -> np.ndarray:
        return self._on(self.dual_inner_member, grid)

    def contains(self, p) -> bool:
        return bool(self.member(np.asarray(p[0]), np.asarray(p[1])))

    def on_inner_boundary(self, p) -> bool:
        return bool(self.inner_boundary_member(np.asarray(p[0]), np.asarray(p[1])))

    def on_outer_boundary(self, p) -> bool:
        return bool(self.outer_boundary_member(np.asarray(p[0]), np.asarray(p[1])))

    def translate(self, d) -> "AnnulusSpec":
        return AnnulusSpec(self.center + d, self.outer_half_side, self.inner_half_side)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "outer_half_side": self.outer_half_side,
                "inner_half_side": self.inner_half_side}


@dataclass(frozen=True)
class LatticePath:
    """A nearest-neighbour path.  A closed circuit repeats its first vertex at the end."""

    vertices: tuple[LatticePoint, ...]

    def __post_init__(self):
        verts = tuple(LatticePoint(*v) for v in self.vertices)
        if not verts:
            raise ValueError("a path has at least one vertex")
        for a, b in zip(verts, verts[1:]):
            if abs(a.x - b.x) + abs(a.y - b.y) != 1:
                raise ValueError(f"{a} and {b} are not 4-adjacent")
        object.__setattr__(self, "vertices", verts)

    def __len__(self) -> int:
        return len(self.vertices) - 1

    def __iter__(self):
        return iter(self.vertices)

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    @property
    def start(self) -> LatticePoint:
        return self.vertices[0]

    @property
    def end(self) -> LatticePoint:
        return self.vertices[-1]

    @property
    def closed(self) -> bool:
        return self.length > 0 and self.start == self.end

    def distinct(self) -> tuple[LatticePoint, ...]:
        """Vertices with the closing repeat of a circuit dropped."""
        return self.vertices[:-1] if self.closed else self.vertices

    def vertex_set(self) -> set[LatticePoint]:
        return set(self.vertices)

    def to_list(self) -> list[list[int]]:
        return [[v.x, v.y] for v in self.vertices]


def make_box(n: int, z=ORIGIN, open_variant: bool = False) -> BoxSpec:
    if n < 0:
        raise ValueError("scale must be nonnegative")
    if n > 29:
        raise ValueError("2**n exceeds the coordinate bound")
    half = 2**n - 1 if open_variant else 2**n
    if half < 1:
        raise ValueError("open box of scale 0 has no vertices")
    return BoxSpec(LatticePoint(*z), n, half)


def annulus_half_sides(m: int) -> tuple[int, int]:
    """``(floor(2**(m - 1/2)), 2**(m - 1))`` computed in exact integer arithmetic."""
    return isqrt(2 ** (2 * m - 1)), 2 ** (m - 1)


def make_annulus(n: int, k: int, z=ORIGIN) -> AnnulusSpec:
    m = n - k
    if m < 2:
        raise ValueError(f"n - k = {m} < 2")
    if m > 29:
        raise ValueError("2**(n-k) exceeds the coordinate bound")
    outer, inner = annulus_half_sides(m)
    if outer <= inner:
        raise ValueError(f"degenerate annulus at n - k = {m}: outer={outer}, inner={inner}")
    return AnnulusSpec(LatticePoint(*z), outer, inner)


def annulus_is_degenerate(m: int) -> bool:
    if m < 1:
        return True
    outer, inner = annulus_half_sides(m)
    return outer <= inner


def mask_to_points(mask: np.ndarray, grid: BoxSpec) -> list[LatticePoint]:
    """Points of ``mask`` in flat-index order."""
    ii, jj = np.nonzero(mask)
    return [LatticePoint(int(i) + grid.xmin, int(j) + grid.ymin) for i, j in zip(ii, jj)]


def points_to_mask(points: Iterable, grid: BoxSpec) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for p in points:
        if not grid.contains(p):
            raise ValueError(f"{tuple(p)} outside grid")
        mask[p[0] - grid.xmin, p[1] - grid.ymin] = True
    return mask


def surrounds(open_mask: np.ndarray, a: AnnulusSpec, grid: BoxSpec) -> bool:
    """Whether the open vertices contain a 4-connected circuit around ``a``.

    Decided by duality: no 8-connected path of closed annulus vertices runs
    from the ring next to the inner box to the outer boundary.
    """
    ann = a.mask(grid)
    closed = ann & ~open_mask
    labels, count = ndimage.label(closed, structure=EIGHT)
    if count == 0:
        return True
    seeds = np.unique(labels[closed & a.dual_inner_mask(grid)])
    hits = np.unique(labels[closed & a.outer_boundary_mask(grid)])
    return np.intersect1d(seeds[seeds > 0], hits[hits > 0]).size == 0


def is_circuit_around(path: LatticePath | Sequence, a: AnnulusSpec) -> bool:
    verts = path.vertices if isinstance(path, LatticePath) else tuple(path)
    grid = a.outer_box
    for v in verts:
        if not a.contains(v):
            raise ValueError(f"{tuple(v)} is not an annulus vertex")
    return surrounds(points_to_mask(verts, grid), a, grid)


def is_path_across(path: LatticePath, a: AnnulusSpec) -> bool:
    if not all(a.contains(v) for v in path.vertices):
        return False
    s, e = path.start, path.end
    return ((a.on_inner_boundary(s) and a.on_outer_boundary(e))
            or (a.on_outer_boundary(s) and a.on_inner_boundary(e)))
