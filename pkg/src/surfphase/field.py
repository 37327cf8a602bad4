"""Periodic cell-centered grids and the discrete calculus on them.

Arrays are stored row-major with shape ``(N, N)``; index ``[i, j]`` of a
cell field is the value at the cell center ``((i + 1/2) h, (j + 1/2) h)``
(0-based). The x-edge component of an edge field stores the value at
``(i + 1/2, j)`` in ``[i, j]`` and the y-edge component the value at
``(i, j + 1/2)``. All index arithmetic wraps modulo ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.fft as sfft

from . import kernels
from .errors import GridMismatchError, NonZeroMeanError

MIN_CELLS = 4


@dataclass(frozen=True)
class GridSpec:
    """Square periodic domain ``(0, length)^2`` split into ``n_cells`` cells per side."""

    n_cells: int
    length: float

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < MIN_CELLS:
            raise ValueError(f"n_cells must be an integer >= {MIN_CELLS}, got {self.n_cells!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"length must be positive and finite, got {self.length!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n_cells

    @property
    def area(self) -> float:
        return self.length * self.length

    def centers(self) -> np.ndarray:
        """1-D coordinates of the cell centers."""
        return (np.arange(self.n_cells) + 0.5) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.centers()
        return np.meshgrid(x, x, indexing="ij")

    def refined(self) -> GridSpec:
        return GridSpec(2 * self.n_cells, self.length)


def _as_grid_array(grid: GridSpec, values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C")
    if arr.ndim == 0:
        arr = np.full((grid.n_cells, grid.n_cells), float(arr))
    if arr.shape != (grid.n_cells, grid.n_cells):
        raise ValueError(
            f"{name} has shape {arr.shape}, expected {(grid.n_cells, grid.n_cells)}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CellField:
    """Values at cell centers. The array is copied on construction and frozen."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid_array(self.grid, self.values, "values"))

    def at(self, i: int, j: int) -> float:
        n = self.grid.n_cells
        return float(self.values[i % n, j % n])

    def mean(self) -> float:
        return float(self.values.mean())

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def _other(self, other):
        if isinstance(other, CellField):
            _check_same_grid(self.grid, other.grid)
            return other.values
        return other

    def __add__(self, other):
        return CellField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return CellField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return CellField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return CellField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return CellField(self.grid, -self.values)

    def __repr__(self):
        return f"CellField(N={self.grid.n_cells}, L={self.grid.length:g}, mean={self.mean():.6g})"


@dataclass(frozen=True, eq=False)
class EdgeFieldPair:
    """Staggered pair: x-edge values at ``(i+1/2, j)`` and y-edge values at ``(i, j+1/2)``."""

    grid: GridSpec
    x_values: np.ndarray
    y_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_values", _as_grid_array(self.grid, self.x_values, "x_values"))
        object.__setattr__(self, "y_values", _as_grid_array(self.grid, self.y_values, "y_values"))

    def __mul__(self, other):
        if isinstance(other, EdgeFieldPair):
            _check_same_grid(self.grid, other.grid)
            return EdgeFieldPair(self.grid, self.x_values * other.x_values,
                                 self.y_values * other.y_values)
        return EdgeFieldPair(self.grid, self.x_values * other, self.y_values * other)

    __rmul__ = __mul__


def _check_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


def constant(grid: GridSpec, value: float) -> CellField:
    return CellField(grid, np.full((grid.n_cells, grid.n_cells), float(value)))


# ---------------------------------------------------------------------------
# difference and average operators

def grad(v: CellField) -> EdgeFieldPair:
    h = v.grid.spacing
    a = v.values
    return EdgeFieldPair(v.grid, (np.roll(a, -1, 0) - a) / h, (np.roll(a, -1, 1) - a) / h)


def div(f: EdgeFieldPair) -> CellField:
    h = f.grid.spacing
    fx, fy = f.x_values, f.y_values
    return CellField(f.grid, (fx - np.roll(fx, 1, 0)) / h + (fy - np.roll(fy, 1, 1)) / h)


def edge_average(v: CellField) -> EdgeFieldPair:
    """Two-point average of a cell quantity onto the x- and y-edges."""
    a = v.values
    return EdgeFieldPair(v.grid, 0.5 * (a + np.roll(a, -1, 0)), 0.5 * (a + np.roll(a, -1, 1)))


def laplacian(v: CellField) -> CellField:
    return CellField(v.grid, kernels.laplacian(v.values, v.grid.spacing))


def weighted_div_grad(d: EdgeFieldPair, v: CellField) -> CellField:
    """``div(D grad v)`` with ``D`` sampled on the edges."""
    _check_same_grid(d.grid, v.grid)
    out = kernels.weighted_div_grad_edges(d.x_values, d.y_values, v.values, v.grid.spacing)
    return CellField(v.grid, out)


# ---------------------------------------------------------------------------
# inner products and norms

def inner(a: CellField, b: CellField) -> float:
    _check_same_grid(a.grid, b.grid)
    h = a.grid.spacing
    return float(h * h * np.sum(a.values * b.values))


def edge_inner(f: EdgeFieldPair, g: EdgeFieldPair) -> float:
    """``[f, g]_x + [f, g]_y`` with ``[u, w]_x = <a_x(u w), 1>``: average onto cells, then sum."""
    _check_same_grid(f.grid, g.grid)
    h = f.grid.spacing
    px = f.x_values * g.x_values
    py = f.y_values * g.y_values
    ax = 0.5 * (px + np.roll(px, 1, 0))
    ay = 0.5 * (py + np.roll(py, 1, 1))
    return float(h * h * (np.sum(ax) + np.sum(ay)))


def norm(v: CellField, kind: str = "l2", p: float | None = None) -> float:
    """Discrete norms: ``l2``, ``lp`` (needs ``p``), ``linf``, ``h1``, ``h2``."""
    h2 = v.grid.spacing ** 2
    a = v.values
    if kind == "l2":
        return math.sqrt(h2 * float(np.sum(a * a)))
    if kind == "lp":
        if p is None or not (1 <= p < math.inf):
            raise ValueError(f"lp norm needs 1 <= p < inf, got p={p!r}")
        return (h2 * float(np.sum(np.abs(a) ** p))) ** (1.0 / p)
    if kind == "linf":
        return float(np.max(np.abs(a)))
    if kind in ("h1", "h2"):
        g = grad(v)
        sq = norm(v) ** 2 + edge_inner(g, g)
        if kind == "h2":
            sq += norm(laplacian(v)) ** 2
        return math.sqrt(sq)
    raise ValueError(f"unknown norm kind {kind!r}")


# ---------------------------------------------------------------------------
# Fourier diagonalization of the periodic 5-point Laplacian

@lru_cache(maxsize=32)
def neg_laplacian_symbol(n_cells: int, length: float) -> np.ndarray:
    """Eigenvalues of ``-Delta_h`` laid out for ``scipy.fft.rfft2`` of an ``(N, N)`` array."""
    h = length / n_cells
    sk = np.sin(np.pi * np.arange(n_cells) / n_cells) ** 2
    sl = np.sin(np.pi * np.arange(n_cells // 2 + 1) / n_cells) ** 2
    lam = (4.0 / (h * h)) * (sk[:, None] + sl[None, :])
    lam.setflags(write=False)
    return lam


def solve_neg_laplacian_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Mean-zero solution of ``-Delta_h psi = values - mean(values)``; no precondition check."""
    lam = neg_laplacian_symbol(grid.n_cells, grid.length)
    vh = sfft.rfft2(values)
    vh[0, 0] = 0.0
    vh[1:, :] /= lam[1:, :]
    vh[0, 1:] /= lam[0, 1:]
    return sfft.irfft2(vh, s=values.shape)


def _check_mean_zero(v: CellField, rtol: float) -> None:
    m = v.mean()
    scale = norm(v)
    if abs(m) > rtol * scale:
        raise NonZeroMeanError(
            f"field mean {m:.3e} exceeds {rtol:g} * ||v||_2 = {rtol * scale:.3e}; "
            "subtract the mean first"
        )


def inv_neg_laplacian(v: CellField, rtol: float = 1e-12) -> CellField:
    """The unique mean-zero ``psi`` with ``-Delta_h psi = v``. ``v`` must have zero mean."""
    _check_mean_zero(v, rtol)
    return CellField(v.grid, solve_neg_laplacian_array(v.values, v.grid))


def hminus1_norm(v: CellField, rtol: float = 1e-12) -> float:
    psi = inv_neg_laplacian(v, rtol)
    return math.sqrt(max(inner(v, psi), 0.0))


def hminus1_sq_array(values: np.ndarray, grid: GridSpec) -> float:
    """``||v - mean(v)||_{-1,h}^2`` computed spectrally (Parseval on the rfft layout)."""
    lam = neg_laplacian_symbol(grid.n_cells, grid.length)
    vh = sfft.rfft2(values)
    w = np.abs(vh) ** 2
    w[0, 0] = 0.0
    w[1:, :] /= lam[1:, :]
    w[0, 1:] /= lam[0, 1:]
    n = grid.n_cells
    # columns other than l=0 and the Nyquist column stand for two conjugate modes
    weight = np.full(w.shape[1], 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    h = grid.spacing
    return float(h * h * np.sum(w * weight[None, :]) / (n * n))
