"""Free energy of the fluid-surfactant model, its convex-concave split, and the
chemical potentials, residual and merit functional of the first-order
convex-splitting scheme.

Energy densities (per cell, summed with weight ``h^2``)::

    f(phi)/eps + eps/2 |grad phi|^2 + eta^2/2 |lap phi|^2 + xi/2 |grad rho|^2
      + alpha/2 (rho - N(phi))^2 + beta H(rho)

with ``f(phi) = phi^2 (1 - phi)^2 / 4``, ``H(rho) = rho ln rho + (1 - rho) ln(1 - rho)``
and ``N`` the regularized, cell-averaged gradient magnitude returned by
:func:`avg_grad_mag`. The convex part moves ``alpha/2 ((sqrt2 - 1) rho^2 +
|grad phi|^2 / delta)`` and the quadratic piece of ``f`` into the concave part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import DomainError, GridMismatchError
from .field import CellField, GridSpec, hminus1_sq_array

SQRT2 = math.sqrt(2.0)

_PARAM_NAMES = ("eps", "alpha", "beta", "eta", "xi", "delta", "mobility", "dt")


@dataclass(frozen=True)
class ModelParams:
    eps: float
    alpha: float
    beta: float
    eta: float
    xi: float
    delta: float
    mobility: float
    dt: float

    def __post_init__(self):
        for name in _PARAM_NAMES:
            value = float(getattr(self, name))
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"parameter {name} must be positive and finite, got {value!r}")
            object.__setattr__(self, name, value)

    def with_dt(self, dt: float) -> ModelParams:
        return ModelParams(**{**self.as_dict(), "dt": dt})

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}


# parameter sets used in the accuracy and spinodal experiments (dt is a placeholder)
ACCURACY_PARAMS = ModelParams(eps=0.05, alpha=0.001, beta=0.02, eta=0.05, xi=0.05,
                              delta=0.001, mobility=0.01, dt=1e-4)
SPINODAL_PARAMS = ModelParams(eps=0.02, alpha=0.02, beta=0.02, eta=0.02, xi=0.02,
                              delta=0.01, mobility=0.01, dt=1e-2)


def check_rho(rho: np.ndarray) -> None:
    if not (np.all(rho > 0.0) and np.all(rho < 1.0)):
        bad = rho[(rho <= 0.0) | (rho >= 1.0) | ~np.isfinite(rho)]
        raise DomainError(
            f"rho must lie strictly inside (0, 1); {bad.size} cell(s) violate it "
            f"(e.g. {bad.flat[0]!r})"
        )


@dataclass(frozen=True, eq=False)
class State:
    phi: CellField
    rho: CellField
    time: float = 0.0
    step: int = 0

    def __post_init__(self):
        if self.phi.grid != self.rho.grid:
            raise GridMismatchError("phi and rho live on different grids")
        check_rho(self.rho.values)
        if self.time < 0 or self.step < 0:
            raise ValueError("time and step must be non-negative")

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    @classmethod
    def from_arrays(cls, grid: GridSpec, phi, rho, time: float = 0.0, step: int = 0) -> State:
        return cls(CellField(grid, phi), CellField(grid, rho), float(time), int(step))


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    convex: float
    concave: float
    parts: dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# array-level building blocks

def _diffs(a: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    return (np.roll(a, -1, 0) - a) / h, (np.roll(a, -1, 1) - a) / h


def _grad_sq_sum(a: np.ndarray, h: float) -> float:
    """``||grad_h a||_2^2``."""
    dx, dy = _diffs(a, h)
    return h * h * float(np.sum(dx * dx) + np.sum(dy * dy))


def _entropy(rho: np.ndarray) -> np.ndarray:
    return rho * np.log(rho) + (1.0 - rho) * np.log1p(-rho)


def _energy_terms(phi: np.ndarray, rho: np.ndarray, h: float, p: ModelParams) -> dict[str, float]:
    check_rho(rho)
    h2 = h * h
    lap = kernels.laplacian(phi, h)
    nmag = kernels.avg_grad_mag(phi, h, p.delta)
    u = phi - 0.5
    gphi = _grad_sq_sum(phi, h)
    return {
        "quartic": h2 * float(np.sum(u ** 4)) / (4.0 * p.eps),
        "well_const": h2 * phi.size / (64.0 * p.eps),
        "quadratic": h2 * float(np.sum(u * u)) / (8.0 * p.eps),
        "grad_phi_sq": gphi,
        "bending": 0.5 * p.eta ** 2 * h2 * float(np.sum(lap * lap)),
        "surf_dirichlet": 0.5 * p.xi * _grad_sq_sum(rho, h),
        "coupling": 0.5 * p.alpha * h2 * float(np.sum((rho - nmag) ** 2)),
        "entropy": p.beta * h2 * float(np.sum(_entropy(rho))),
        "rho_sq": h2 * float(np.sum(rho * rho)),
    }


def _convex_from_terms(t: dict[str, float], p: ModelParams) -> float:
    return (t["quartic"] + t["well_const"] + 0.5 * p.eps * t["grad_phi_sq"] + t["bending"]
            + t["entropy"] + t["surf_dirichlet"] + t["coupling"]
            + 0.5 * p.alpha * ((SQRT2 - 1.0) * t["rho_sq"] + t["grad_phi_sq"] / p.delta))


def _concave_from_terms(t: dict[str, float], p: ModelParams) -> float:
    return t["quadratic"] + 0.5 * p.alpha * ((SQRT2 - 1.0) * t["rho_sq"]
                                             + t["grad_phi_sq"] / p.delta)


def convex_energy_array(phi, rho, h, p) -> float:
    return _convex_from_terms(_energy_terms(phi, rho, h, p), p)


def concave_energy_array(phi, rho, h, p) -> float:
    t = _energy_terms(phi, rho, h, p)
    return _concave_from_terms(t, p)


def convex_gradient_array(phi, rho, h, p):
    """Gradient of the convex energy with respect to the ``<., .>_Omega`` inner product."""
    check_rho(rho)
    lap = kernels.laplacian(phi, h)
    nmag = kernels.avg_grad_mag(phi, h, p.delta)
    coupling = kernels.coupling_div(phi, rho, nmag, h)
    g_phi = ((phi - 0.5) ** 3 / p.eps
             - (p.eps + p.alpha + p.alpha / p.delta) * lap
             + p.eta ** 2 * kernels.laplacian(lap, h)
             + p.alpha * coupling)
    g_rho = (-p.xi * kernels.laplacian(rho, h)
             + p.beta * (np.log(rho) - np.log1p(-rho))
             + SQRT2 * p.alpha * rho
             - p.alpha * nmag)
    return g_phi, g_rho


def concave_gradient_array(phi, rho, h, p):
    g_phi = (phi - 0.5) / (4.0 * p.eps) - (p.alpha / p.delta) * kernels.laplacian(phi, h)
    g_rho = (SQRT2 - 1.0) * p.alpha * rho
    return g_phi, g_rho


def explicit_forcing_array(phi_old, rho_old, h, p):
    """``(f_phi, f_rho)``: minus the concave gradient at the previous time level."""
    g_phi, g_rho = concave_gradient_array(phi_old, rho_old, h, p)
    return -g_phi, -g_rho


# ---------------------------------------------------------------------------
# public field-level API

def avg_grad_mag(phi: CellField, delta: float) -> CellField:
    """Cell-averaged, delta-regularized gradient magnitude (always >= delta)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return CellField(phi.grid, kernels.avg_grad_mag(phi.values, phi.grid.spacing, delta))


def energy(state: State, p: ModelParams) -> EnergyBreakdown:
    h = state.grid.spacing
    t = _energy_terms(state.phi.values, state.rho.values, h, p)
    convex = _convex_from_terms(t, p)
    concave = _concave_from_terms(t, p)
    parts = {
        "double_well": t["quartic"] + t["well_const"] - t["quadratic"],
        "dirichlet": 0.5 * p.eps * t["grad_phi_sq"],
        "bending": t["bending"],
        "surfactant_dirichlet": t["surf_dirichlet"],
        "coupling": t["coupling"],
        "entropy": t["entropy"],
    }
    return EnergyBreakdown(total=sum(parts.values()), convex=convex, concave=concave, parts=parts)


def convex_energy(phi: CellField, rho: CellField, p: ModelParams) -> float:
    return convex_energy_array(phi.values, rho.values, phi.grid.spacing, p)


def concave_energy(phi: CellField, rho: CellField, p: ModelParams) -> float:
    return concave_energy_array(phi.values, rho.values, phi.grid.spacing, p)


def mu_phi(phi_new: CellField, rho_new: CellField, phi_old: CellField, p: ModelParams) -> CellField:
    h = phi_new.grid.spacing
    g_c, _ = convex_gradient_array(phi_new.values, rho_new.values, h, p)
    g_e = (phi_old.values - 0.5) / (4.0 * p.eps) - (p.alpha / p.delta) * kernels.laplacian(
        phi_old.values, h)
    return CellField(phi_new.grid, g_c - g_e)


def mu_rho(phi_new: CellField, rho_new: CellField, rho_old: CellField, p: ModelParams) -> CellField:
    h = phi_new.grid.spacing
    _, g_c = convex_gradient_array(phi_new.values, rho_new.values, h, p)
    return CellField(phi_new.grid, g_c - (SQRT2 - 1.0) * p.alpha * rho_old.values)


def residual_arrays(phi, rho, phi_old, rho_old, h, p):
    g_phi, g_rho = convex_gradient_array(phi, rho, h, p)
    f_phi, f_rho = explicit_forcing_array(phi_old, rho_old, h, p)
    m = p.mobility
    r_phi = (phi - phi_old) / p.dt - m * kernels.laplacian(g_phi + f_phi, h)
    r_rho = (rho - rho_old) / p.dt - m * kernels.laplacian(g_rho + f_rho, h)
    return r_phi, r_rho


def scheme_residual(new: State, old: State, p: ModelParams) -> tuple[CellField, CellField]:
    if new.grid != old.grid:
        raise GridMismatchError("new and old states live on different grids")
    r_phi, r_rho = residual_arrays(new.phi.values, new.rho.values, old.phi.values,
                                   old.rho.values, new.grid.spacing, p)
    return CellField(new.grid, r_phi), CellField(new.grid, r_rho)


def merit_array(phi, rho, phi_old, rho_old, grid: GridSpec, p: ModelParams,
                forcing=None) -> float:
    """Merit functional without the mean checks; differences are projected to zero mean."""
    h = grid.spacing
    h2 = h * h
    if forcing is None:
        forcing = explicit_forcing_array(phi_old, rho_old, h, p)
    f_phi, f_rho = forcing
    t = _energy_terms(phi, rho, h, p)
    convex = _convex_from_terms(t, p) - t["well_const"]
    dist = (hminus1_sq_array(phi - phi_old, grid) + hminus1_sq_array(rho - rho_old, grid))
    return (dist / (2.0 * p.mobility * p.dt) + convex
            + h2 * float(np.sum(phi * f_phi)) + h2 * float(np.sum(rho * f_rho)))


def merit(phi: CellField, rho: CellField, old: State, p: ModelParams,
          mean_tol: float = 1e-10) -> float:
    """The strictly convex functional whose minimizer is the next time level.

    ``phi`` and ``rho`` must carry the same means as ``old`` (mass constraint).
    """
    for name, new, prev in (("phi", phi, old.phi), ("rho", rho, old.rho)):
        if new.grid != old.grid:
            raise GridMismatchError(f"{name} grid differs from the previous state")
        gap = abs(new.mean() - prev.mean())
        if gap > mean_tol * (1.0 + abs(prev.mean())):
            raise ValueError(f"mean({name}) differs from the previous level by {gap:.3e}")
    check_rho(rho.values)
    return merit_array(phi.values, rho.values, old.phi.values, old.rho.values, old.grid, p)


def merit_lower_bound(old: State, p: ModelParams) -> float:
    """``M3`` in ``J(phi, rho) >= ||phi - 1/2||_4^4 / (8 eps) - M3`` for admissible pairs."""
    f_phi, f_rho = explicit_forcing_array(old.phi.values, old.rho.values, old.grid.spacing, p)
    m1 = float(np.max(np.abs(f_phi)))
    m2 = float(np.max(np.abs(f_rho)))
    return (0.5 * m1 * m1 + 0.5 * m1 + 0.5 * p.eps + p.beta * math.log(2.0) + m2) * old.grid.area
