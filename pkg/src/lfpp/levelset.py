"""Circuits of the superlevel set ``{h >= level}`` around square annuli."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import FieldSample, sample_gff_values
from .lattice import AnnulusSpec, BoxSpec, LatticePath, make_annulus, make_box, surrounds
from .metric import LfppWeights, distance_around
from .stats import ProportionEstimate, proportion


@dataclass(frozen=True, eq=False)
class LevelSetQuery:
    field: FieldSample
    level: float
    annulus: AnnulusSpec

    def __post_init__(self):
        if not self.field.box.contains_box(self.annulus.outer_box):
            raise ValueError("annulus not inside the field's box")


def _annulus_window(values: np.ndarray, box: BoxSpec, a: AnnulusSpec) -> np.ndarray:
    grid = a.outer_box
    i0, j0 = box.local((grid.xmin, grid.ymin))
    return values[..., i0:i0 + grid.width, j0:j0 + grid.width]


def has_circuit_above(q: LevelSetQuery) -> bool:
    a = q.annulus
    window = _annulus_window(q.field.values, q.field.box, a)
    return surrounds(window >= q.level, a, a.outer_box)


def find_circuit_above(q: LevelSetQuery) -> LatticePath | None:
    """An explicit closed circuit on which the field is ``>= level``, or ``None``."""
    box = q.field.box
    open_mask = q.field.values >= q.level
    flat = LfppWeights(box, np.zeros(box.shape), 0.0)
    res = distance_around(flat, q.annulus, allowed=open_mask)
    return res.witness


def circuit_indicators(values: np.ndarray, box: BoxSpec, a: AnnulusSpec, levels) -> np.ndarray:
    """``(samples, levels)`` booleans for a stack of field arrays, shared across levels."""
    window = _annulus_window(values, box, a)
    if window.ndim == 2:
        window = window[None]
    grid = a.outer_box
    out = np.zeros((window.shape[0], len(levels)), dtype=bool)
    for t in range(window.shape[0]):
        for j, lvl in enumerate(levels):
            out[t, j] = surrounds(window[t] >= lvl, a, grid)
    return out


def sample_circuit_indicators(n: int, u_values, trials: int, rng: np.random.Generator,
                              chunk: int = 256) -> np.ndarray:
    """Indicators of a circuit ``>= -u`` around the annulus of scale ``n``.

    Each sampled field is reused for every ``u`` (common random numbers).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    box, a = make_box(n), make_annulus(n, 0)
    levels = [-float(u) for u in u_values]
    rows = []
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        vals = sample_gff_values(box, rng, size=size)
        rows.append(circuit_indicators(vals, box, a, levels))
        done += size
    return np.concatenate(rows, axis=0)


def circuit_probability(n: int, u: float, trials: int, rng: np.random.Generator) -> ProportionEstimate:
    hits = sample_circuit_indicators(n, [u], trials, rng)[:, 0]
    return proportion(int(hits.sum()), trials)
