"""Zero-boundary discrete Gaussian free field on dyadic boxes.

Covariance convention: ``E[h(z) h(w)] = (pi/2) Gr(z, w)`` where ``Gr`` counts
the expected visits to ``w`` of simple random walk from ``z`` killed on the
box boundary.  Since ``I - P = L/4`` for the Dirichlet Laplacian ``L``, the
covariance equals ``2 pi L^{-1}`` and the sine basis diagonalises it with
per-mode variance ``2 pi / lambda``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import pi
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.fft import dstn

from .lattice import BoxSpec, LatticePoint, make_box

DENSE_GREEN_CAP = 4096
DENSE_SOLVE_CAP = 225
SOLVER_TOL = 1e-9


class FieldError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FieldSample:
    box: BoxSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.box.shape:
            raise FieldError(f"values shape {vals.shape} != box shape {self.box.shape}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("field has non-finite values")
        if np.any(vals[self.box.boundary_mask()] != 0.0):
            raise FieldError("field must vanish on the box boundary")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, p) -> float:
        i, j = self.box.local(p)
        if not self.box.contains(p):
            raise KeyError(p)
        return float(self.values[i, j])

    def __neg__(self) -> "FieldSample":
        return FieldSample(self.box, -self.values)

    def shifted_values(self, c: float) -> np.ndarray:
        """Values plus a constant (no longer a zero-boundary field, so a bare array)."""
        return self.values + c

    def restrict(self, sub: BoxSpec) -> np.ndarray:
        if not self.box.contains_box(sub):
            raise FieldError("sub-box not contained in the field's box")
        i0, j0 = self.box.local((sub.xmin, sub.ymin))
        return self.values[i0:i0 + sub.width, j0:j0 + sub.width]


@dataclass(frozen=True, eq=False)
class GreenTable:
    box: BoxSpec
    gr: np.ndarray
    interior: tuple[LatticePoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "gr", _frozen(self.gr))

    def index(self, p) -> int:
        return self.interior.index(LatticePoint(*p))

    def __call__(self, z, w) -> float:
        if not (self.box.interior_mask()[self.box.local(z)]
                and self.box.interior_mask()[self.box.local(w)]):
            return 0.0
        return float(self.gr[self.index(z), self.index(w)])


@dataclass(frozen=True, eq=False)
class ScaleDecomposition:
    sub_box: BoxSpec
    harmonic_part: np.ndarray
    zero_part: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "harmonic_part", _frozen(self.harmonic_part))
        object.__setattr__(self, "zero_part", _frozen(self.zero_part))

    def zero_field(self) -> FieldSample:
        return FieldSample(self.sub_box, self.zero_part)


def _interior_size(box: BoxSpec) -> int:
    m = box.width - 2
    if m < 1:
        raise FieldError("box has empty interior")
    return m


def dirichlet_laplacian(m: int) -> np.ndarray:
    """Dense ``4I - A`` on an ``m x m`` grid, flat-index order."""
    t = 2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
    eye = np.eye(m)
    return np.kron(t, eye) + np.kron(eye, t)


@lru_cache(maxsize=32)
def laplacian_eigenvalues(m: int) -> np.ndarray:
    theta = np.pi * np.arange(1, m + 1) / (m + 1)
    one = 2.0 - 2.0 * np.cos(theta)
    lam = one[:, None] + one[None, :]
    lam.flags.writeable = False
    return lam


def green_table(box: BoxSpec, cap: int = DENSE_GREEN_CAP) -> GreenTable:
    m = _interior_size(box)
    if m * m > cap:
        raise FieldError(f"{m * m} interior vertices exceed the dense cap {cap}")
    gr = _green_matrix(m).copy()
    interior = tuple(LatticePoint(box.xmin + 1 + i, box.ymin + 1 + j)
                     for i in range(m) for j in range(m))
    return GreenTable(box, gr, interior)


@lru_cache(maxsize=16)
def _green_matrix(m: int) -> np.ndarray:
    i_minus_p = dirichlet_laplacian(m) / 4.0
    gr = linalg.solve(i_minus_p, np.eye(m * m), assume_a="pos")
    gr = 0.5 * (gr + gr.T)
    resid = np.abs(i_minus_p @ gr - np.eye(m * m)).max()
    if resid > 1e-10:
        raise FieldError(f"Green solve residual {resid:.3g}")
    return gr


@lru_cache(maxsize=16)
def _dense_cholesky(m: int) -> np.ndarray:
    return np.linalg.cholesky((pi / 2) * _green_matrix(m))


def spectral_covariance(box: BoxSpec) -> np.ndarray:
    """Covariance matrix on the interior implied by the sine-basis sampler."""
    m = _interior_size(box)
    s = dstn(np.eye(m), type=1, norm="ortho", axes=[0])
    s2 = np.kron(s, s)
    var = (2 * pi / laplacian_eigenvalues(m)).ravel()
    return (s2 * var) @ s2.T


def _check_rng(rng) -> np.random.Generator:
    if not isinstance(rng, np.random.Generator):
        raise TypeError("rng must be a numpy Generator")
    return rng


def sample_gff_values(box: BoxSpec, rng: np.random.Generator, size: int | None = None,
                      backend: str = "spectral") -> np.ndarray:
    """Raw value arrays; with ``size`` the leading axis indexes independent samples."""
    rng = _check_rng(rng)
    m = _interior_size(box)
    shape = (m, m) if size is None else (size, m, m)
    z = rng.standard_normal(shape)
    if backend == "spectral":
        coef = z * np.sqrt(2 * pi / laplacian_eigenvalues(m))
        inner = dstn(coef, type=1, norm="ortho", axes=[-2, -1])
    elif backend == "dense":
        chol = _dense_cholesky(m)
        flat = z.reshape(-1, m * m) @ chol.T
        inner = flat.reshape(shape)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    out = np.zeros(shape[:-2] + box.shape)
    out[..., 1:-1, 1:-1] = inner
    return out


def sample_gff(box: BoxSpec, rng: np.random.Generator, backend: str = "spectral") -> FieldSample:
    return FieldSample(box, sample_gff_values(box, rng, backend=backend))


class WindowSampler:
    """Exact samples of a box's field restricted to a sub-box ``window``.

    The window's boundary values are drawn jointly from their Green
    covariance; the window interior is their harmonic extension plus an
    independent zero-boundary field.  Much cheaper than sampling the whole
    box when the window is small.
    """

    def __init__(self, box: BoxSpec, window: BoxSpec, chunk: int = 16):
        if not box.contains_box(window):
            raise ValueError("window not inside box")
        self.box, self.window = box, window
        bd = window.boundary_mask()
        self._bd = bd
        pts = [LatticePoint(window.xmin + int(i), window.ymin + int(j)) for i, j in zip(*np.nonzero(bd))]
        self._cov = self._boundary_cov(pts, chunk)
        self._chol = np.linalg.cholesky(self._cov + 1e-13 * np.eye(len(pts)))

    def _boundary_cov(self, pts, chunk: int) -> np.ndarray:
        # sum over x-modes of products of one-dimensional sine sums in y
        m = _interior_size(self.box)
        lam = laplacian_eigenvalues(m)
        loc = np.array([self.box.local(p) for p in pts])
        live = (loc >= 1).all(axis=1) & (loc <= m).all(axis=1)
        basis = dstn(np.eye(m), type=1, norm="ortho", axes=[0])
        sx = np.where(live[:, None], basis[np.clip(loc[:, 0] - 1, 0, m - 1)], 0.0)
        ys, yi = np.unique(np.clip(loc[:, 1] - 1, 0, m - 1), return_inverse=True)
        sy = basis[ys]
        cov = np.zeros((len(pts), len(pts)))
        for s in range(0, m, chunk):
            w = 2 * pi / lam[s:s + chunk]
            t = np.einsum("yk,jk,zk->jyz", sy, w, sy)
            cov += np.einsum("pj,qj,jpq->pq", sx[:, s:s + chunk], sx[:, s:s + chunk],
                             t[:, yi][:, :, yi])
        return 0.5 * (cov + cov.T)

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """``(size,) + window.shape`` value arrays."""
        rng = _check_rng(rng)
        b = rng.standard_normal((size, self._chol.shape[0])) @ self._chol.T
        out = np.zeros((size,) + self.window.shape)
        out[:, self._bd] = b
        out = dirichlet_fill(out)
        return out + sample_gff_values(self.window, rng, size=size)

    def covariance(self) -> np.ndarray:
        """Implied covariance over all window vertices, flattened row-major."""
        w = self.window.width
        nb = self._cov.shape[0]
        basis = np.zeros((nb, w, w))
        basis[:, self._bd] = np.eye(nb)
        H = dirichlet_fill(basis, method="dense").reshape(nb, -1).T
        zero = np.zeros((w * w, w * w))
        if w > 2:
            inner = np.zeros((w, w), bool)
            inner[1:-1, 1:-1] = True
            idx = np.flatnonzero(inner)
            zero[np.ix_(idx, idx)] = spectral_covariance(self.window)
        return H @ self._cov @ H.T + zero


def harmonic_residual(values: np.ndarray) -> float:
    """Max deviation from the 4-neighbour mean over the open interior."""
    v = np.asarray(values)
    if v.shape[-1] < 3:
        return 0.0
    mean = 0.25 * (v[..., 2:, 1:-1] + v[..., :-2, 1:-1] + v[..., 1:-1, 2:] + v[..., 1:-1, :-2])
    return float(np.abs(v[..., 1:-1, 1:-1] - mean).max())


@lru_cache(maxsize=16)
def _laplacian_factor(m: int):
    return linalg.cho_factor(dirichlet_laplacian(m))


def dirichlet_fill(boundary: np.ndarray, method: str = "auto") -> np.ndarray:
    """Harmonic function on a square grid matching the outer ring of ``boundary``."""
    b = np.array(boundary, dtype=np.float64)
    m = b.shape[-1] - 2
    if m < 1:
        return b
    rhs = np.zeros(b.shape[:-2] + (m, m))
    rhs[..., 0, :] += b[..., 0, 1:-1]
    rhs[..., -1, :] += b[..., -1, 1:-1]
    rhs[..., :, 0] += b[..., 1:-1, 0]
    rhs[..., :, -1] += b[..., 1:-1, -1]
    if method == "auto":
        method = "dense" if m * m <= DENSE_SOLVE_CAP else "sine"
    if method == "dense":
        flat = rhs.reshape(-1, m * m).T
        inner = linalg.cho_solve(_laplacian_factor(m), flat).T.reshape(rhs.shape)
    elif method == "sine":
        coef = dstn(rhs, type=1, norm="ortho", axes=[-2, -1]) / laplacian_eigenvalues(m)
        inner = dstn(coef, type=1, norm="ortho", axes=[-2, -1])
    else:
        raise ValueError(f"unknown method {method!r}")
    b[..., 1:-1, 1:-1] = inner
    return b


def harmonic_extension(parent: FieldSample, sub_box: BoxSpec, method: str = "auto") -> np.ndarray:
    if not parent.box.contains_box(sub_box):
        raise FieldError("sub-box not contained in the parent box")
    if sub_box.half_side < 1:
        raise FieldError("sub-box too small")
    filled = dirichlet_fill(parent.restrict(sub_box), method=method)
    resid = harmonic_residual(filled)
    if resid > SOLVER_TOL:
        raise FieldError(f"Dirichlet residual {resid:.3g} above tolerance")
    return filled


def decompose(parent: FieldSample, z, k: int, method: str = "auto") -> ScaleDecomposition:
    """Split ``parent`` on the sub-box of scale ``n - k`` at ``z`` into harmonic + zero-boundary parts."""
    n = parent.box.scale
    if n is None:
        raise FieldError("parent box has no dyadic scale")
    if not 0 <= k <= n:
        raise FieldError(f"k={k} outside [0, {n}]")
    sub = make_box(n - k, z)
    harm = harmonic_extension(parent, sub, method=method)
    zero = parent.restrict(sub) - harm
    zero[sub.boundary_mask()] = 0.0
    return ScaleDecomposition(sub, harm, zero)


def variance_at(box: BoxSpec, p) -> float:
    """Exact ``(pi/2) Gr(p, p)`` by a sine-basis sum (no dense matrix)."""
    m = _interior_size(box)
    i, j = box.local(p)
    if not (1 <= i <= m and 1 <= j <= m):
        return 0.0
    s = np.sqrt(2.0 / (m + 1)) * np.sin(np.pi * np.arange(1, m + 1) / (m + 1) * i)
    t = np.sqrt(2.0 / (m + 1)) * np.sin(np.pi * np.arange(1, m + 1) / (m + 1) * j)
    return float(np.sum(np.outer(s**2, t**2) * 2 * pi / laplacian_eigenvalues(m)))


def write_field(path, sample: FieldSample) -> None:
    """CSV (``.csv``) or raw little-endian float64 with a JSON sidecar (anything else)."""
    path = Path(path)
    header = {"box": sample.box.to_dict(), "order": "row-major [x, y]", "dtype": "<f8"}
    if path.suffix == ".csv":
        np.savetxt(path, sample.values, delimiter=",", fmt="%.17g",
                   header=json.dumps(header))
    else:
        sample.values.astype("<f8").tofile(path)
        Path(str(path) + ".json").write_text(json.dumps(header))


def read_field(path) -> FieldSample:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path) as fh:
            header = json.loads(fh.readline().lstrip("#").strip())
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    else:
        header = json.loads(Path(str(path) + ".json").read_text())
        values = np.fromfile(path, dtype="<f8")
    box = BoxSpec.from_dict(header["box"])
    return FieldSample(box, values.reshape(box.shape))
