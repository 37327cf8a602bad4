"""One time step of the convex-splitting scheme: damped Newton-Krylov solve of
the nonlinear system with a fraction-to-boundary safeguard on the surfactant
concentration and merit-functional backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from . import kernels
from .errors import InvariantViolation, NewtonDivergence, StepDampedError
from .field import CellField, GridSpec, neg_laplacian_symbol
from .model import (
    SQRT2,
    EnergyBreakdown,
    ModelParams,
    State,
    check_rho,
    energy,
    explicit_forcing_array,
    merit_array,
    residual_arrays,
)

log = logging.getLogger(__name__)

ENERGY_SLACK = 1e-9
MASS_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Newton-Krylov settings. ``newton_tol=None`` resolves to ``1e-10 * sqrt(|Omega|)``."""

    newton_tol: float | None = None
    newton_max_iter: int = 50
    linear_tol: float = 1e-4
    boundary_fraction: float = 0.9
    damping_min: float = 1e-4
    krylov_restart: int = 40
    krylov_max_restarts: int = 10

    def __post_init__(self):
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError("boundary_fraction must lie in (0, 1)")
        for name in ("linear_tol", "damping_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_tol is not None and not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")

    def tolerance(self, grid: GridSpec) -> float:
        if self.newton_tol is not None:
            return self.newton_tol
        return 1e-10 * math.sqrt(grid.area)


@dataclass
class StepDiagnostics:
    energy: EnergyBreakdown
    mass_phi: float
    mass_rho: float
    rho_min: float
    rho_max: float
    newton_iters: int
    final_residual: float
    damping_used: float
    linear_iters: int = 0
    phi_max_abs: float = 0.0
    iterate_rho_min: float = 0.5
    iterate_rho_max: float = 0.5
    residual_history: list[float] = field(default_factory=list)


def safeguard_fraction(rho: CellField | np.ndarray, d_rho: CellField | np.ndarray,
                       tau: float) -> float:
    """Fraction-to-boundary step length keeping ``rho + theta d_rho`` inside (0, 1).

    Returns 1 when the full step stays strictly interior, otherwise
    ``tau * theta_max`` with ``theta_max`` the distance (in step units) to the
    nearest bound.
    """
    r = rho.values if isinstance(rho, CellField) else np.asarray(rho)
    d = d_rho.values if isinstance(d_rho, CellField) else np.asarray(d_rho)
    full = r + d
    if np.all(full > 0.0) and np.all(full < 1.0):
        return 1.0
    theta_max = math.inf
    neg = d < 0
    if np.any(neg):
        theta_max = min(theta_max, float(np.min(r[neg] / -d[neg])))
    pos = d > 0
    if np.any(pos):
        theta_max = min(theta_max, float(np.min((1.0 - r[pos]) / d[pos])))
    return min(1.0, tau * theta_max)


class _Linearization:
    """Frozen base point for Jacobian-vector products."""

    def __init__(self, phi, rho, h, p: ModelParams):
        self.phi = phi
        self.rho = rho
        self.h = h
        self.p = p
        self.nmag = kernels.avg_grad_mag(phi, h, p.delta)
        self.d2_phi = 3.0 * (phi - 0.5) ** 2 / p.eps
        self.d2_rho = p.beta / (rho * (1.0 - rho)) + SQRT2 * p.alpha

    def apply(self, u, v):
        p, h = self.p, self.h
        lap = kernels.laplacian
        dc, dn = kernels.coupling_lin(self.phi, self.rho, self.nmag, u, v, h)
        lu = lap(u, h)
        dmu_phi = (self.d2_phi * u - (p.eps + p.alpha + p.alpha / p.delta) * lu
                   + p.eta ** 2 * lap(lu, h) + p.alpha * dc)
        dmu_rho = -p.xi * lap(v, h) + self.d2_rho * v - p.alpha * dn
        return (u / p.dt - p.mobility * lap(dmu_phi, h),
                v / p.dt - p.mobility * lap(dmu_rho, h))


def jacobian_apply(base: State, old: State, p: ModelParams,
                   direction: tuple[CellField, CellField]) -> tuple[CellField, CellField]:
    """Directional derivative of the scheme residual at ``base``.

    The residual depends on ``old`` only through terms constant in the
    unknowns, so ``old`` does not enter the result.
    """
    del old
    check_rho(base.rho.values)
    lin = _Linearization(base.phi.values, base.rho.values, base.grid.spacing, p)
    u, v = direction
    ju, jv = lin.apply(np.ascontiguousarray(u.values), np.ascontiguousarray(v.values))
    return CellField(base.grid, ju), CellField(base.grid, jv)


class Stepper:
    """Advances states on one grid with fixed parameters and solver settings.

    Holds scratch data and is meant for use from one thread at a time.
    """

    def __init__(self, grid: GridSpec, params: ModelParams, config: SolverConfig | None = None):
        self.grid = grid
        self.params = params
        self.config = config or SolverConfig()
        self.tol = self.config.tolerance(grid)
        self._lam = np.array(neg_laplacian_symbol(grid.n_cells, grid.length))
        self._n = grid.n_cells

    # -- norms and preconditioner -------------------------------------------------

    def _norm(self, a, b) -> float:
        h = self.grid.spacing
        return h * math.sqrt(float(np.sum(a * a) + np.sum(b * b)))

    def _preconditioner(self, lin: _Linearization):
        p = self.params
        lam = self._lam
        m = p.mobility
        c_phi = p.eps + p.alpha + p.alpha / p.delta - p.alpha * float(np.mean(lin.rho / lin.nmag))
        s_phi = float(np.mean(lin.d2_phi))
        s_rho = float(np.mean(lin.d2_rho))
        sym_phi = 1.0 / p.dt + m * lam * (p.eta ** 2 * lam * lam + c_phi * lam + s_phi)
        sym_rho = 1.0 / p.dt + m * lam * (p.xi * lam + s_rho)
        n = self._n
        shape = (n, n)

        def apply(vec):
            a = vec[: n * n].reshape(shape)
            b = vec[n * n:].reshape(shape)
            out = np.empty(2 * n * n)
            out[: n * n] = sfft.irfft2(sfft.rfft2(a) / sym_phi, s=shape).ravel()
            out[n * n:] = sfft.irfft2(sfft.rfft2(b) / sym_rho, s=shape).ravel()
            return out

        return apply

    # -- Newton ----------------------------------------------------------------------

    def solve(self, phi0, rho0, phi_old, rho_old):
        """Newton iteration from the guess ``(phi0, rho0)``.

        Returns ``(phi, rho, info)``; raises :class:`NewtonDivergence` or
        :class:`StepDampedError` with the iterate history attached.
        """
        p, cfg, grid = self.params, self.config, self.grid
        h = grid.spacing
        n = self._n
        n2 = n * n
        check_rho(rho0)
        phi = np.array(phi0, dtype=float)
        rho = np.array(rho0, dtype=float)
        forcing = explicit_forcing_array(phi_old, rho_old, h, p)
        r_phi, r_rho = residual_arrays(phi, rho, phi_old, rho_old, h, p)
        res = self._norm(r_phi, r_rho)
        history = [{"iter": 0, "residual": res, "theta": None, "linear_iters": 0,
                    "rho_min": float(rho.min()), "rho_max": float(rho.max())}]
        info = {"newton_iters": 0, "linear_iters": 0, "damping_used": 1.0,
                "iterate_rho_min": float(rho.min()), "iterate_rho_max": float(rho.max()),
                "history": history}
        merit_now = None
        for k in range(1, cfg.newton_max_iter + 1):
            if res <= self.tol:
                break
            lin = _Linearization(phi, rho, h, p)

            def matvec(vec, lin=lin):
                ju, jv = lin.apply(vec[:n2].reshape(n, n), vec[n2:].reshape(n, n))
                return np.concatenate((ju.ravel(), jv.ravel()))

            op = LinearOperator((2 * n2, 2 * n2), matvec=matvec, dtype=float)
            prec = LinearOperator((2 * n2, 2 * n2), matvec=self._preconditioner(lin),
                                  dtype=float)
            rhs = -np.concatenate((r_phi.ravel(), r_rho.ravel()))
            forcing_tol = min(cfg.linear_tol, 0.1 * res)
            counter = [0]

            def count(_, counter=counter):
                counter[0] += 1

            step, _ = gmres(op, rhs, rtol=forcing_tol, atol=0.0, restart=cfg.krylov_restart,
                            maxiter=cfg.krylov_max_restarts, M=prec, callback=count,
                            callback_type="pr_norm")
            d_phi = step[:n2].reshape(n, n)
            d_rho = step[n2:].reshape(n, n)
            # exact mass conservation of every iterate
            d_phi = d_phi - d_phi.mean()
            d_rho = d_rho - d_rho.mean()

            theta = safeguard_fraction(rho, d_rho, cfg.boundary_fraction)
            if merit_now is None:
                merit_now = merit_array(phi, rho, phi_old, rho_old, grid, p, forcing)
            slack = 1e-12 * (1.0 + abs(merit_now))
            while True:
                phi_t = phi + theta * d_phi
                rho_t = rho + theta * d_rho
                info["iterate_rho_min"] = min(info["iterate_rho_min"], float(rho_t.min()))
                info["iterate_rho_max"] = max(info["iterate_rho_max"], float(rho_t.max()))
                merit_t = merit_array(phi_t, rho_t, phi_old, rho_old, grid, p, forcing)
                if merit_t <= merit_now + slack:
                    break
                theta *= 0.5
                if theta < cfg.damping_min:
                    history.append({"iter": k, "residual": res, "theta": theta,
                                    "linear_iters": counter[0], "merit": merit_now})
                    raise StepDampedError(
                        f"damping fell below {cfg.damping_min:g} at Newton iteration {k} "
                        f"(residual {res:.3e})", history)
            phi, rho, merit_now = phi_t, rho_t, merit_t
            r_phi, r_rho = residual_arrays(phi, rho, phi_old, rho_old, h, p)
            res = self._norm(r_phi, r_rho)
            info["newton_iters"] = k
            info["linear_iters"] += counter[0]
            info["damping_used"] = min(info["damping_used"], theta)
            history.append({"iter": k, "residual": res, "theta": theta,
                            "linear_iters": counter[0], "merit": merit_now,
                            "rho_min": float(rho.min()), "rho_max": float(rho.max())})
            log.debug("newton %d: residual %.3e theta %.3g gmres %d", k, res, theta, counter[0])
        if res > self.tol:
            raise NewtonDivergence(
                f"residual {res:.3e} above tolerance {self.tol:.3e} after "
                f"{cfg.newton_max_iter} Newton iterations", history)
        info["final_residual"] = res
        return phi, rho, info

    def advance(self, old: State, prev_energy: float | None = None) -> tuple[State, StepDiagnostics]:
        """Solve one step from ``old`` and check mass, positivity and energy decay."""
        if old.grid != self.grid:
            raise ValueError("state grid does not match the stepper grid")
        mean_rho = old.rho.mean()
        if not 0.0 < mean_rho < 1.0:
            raise ValueError("mean(rho) must lie in (0, 1)")
        phi_old = old.phi.values
        rho_old = old.rho.values
        phi, rho, info = self.solve(phi_old, rho_old, phi_old, rho_old)
        new = State.from_arrays(self.grid, phi, rho, old.time + self.params.dt, old.step + 1)
        e_new = energy(new, self.params)
        if prev_energy is None:
            prev_energy = energy(old, self.params).total
        h2 = self.grid.spacing ** 2
        diag = StepDiagnostics(
            energy=e_new,
            mass_phi=h2 * float(np.sum(phi)),
            mass_rho=h2 * float(np.sum(rho)),
            rho_min=float(rho.min()),
            rho_max=float(rho.max()),
            newton_iters=info["newton_iters"],
            final_residual=info["final_residual"],
            damping_used=info["damping_used"],
            linear_iters=info["linear_iters"],
            phi_max_abs=float(np.max(np.abs(phi))),
            iterate_rho_min=info["iterate_rho_min"],
            iterate_rho_max=info["iterate_rho_max"],
            residual_history=[entry["residual"] for entry in info["history"]],
        )
        self._check(old, new, diag, prev_energy)
        return new, diag

    def _check(self, old: State, new: State, diag: StepDiagnostics, prev_energy: float) -> None:
        tol = MASS_TOL * self.grid.area
        for name in ("phi", "rho"):
            gap = abs(getattr(new, name).mean() - getattr(old, name).mean())
            if gap > tol:
                raise InvariantViolation(f"mean({name}) drifted by {gap:.3e} in one step")
        if not (diag.rho_min > 0.0 and diag.rho_max < 1.0):
            raise InvariantViolation("rho left (0, 1)")
        e = diag.energy.total
        if e > prev_energy + ENERGY_SLACK * (1.0 + abs(e)):
            raise InvariantViolation(f"energy increased from {prev_energy!r} to {e!r}")


def newton_solve(initial_guess: State, old: State, p: ModelParams,
                 cfg: SolverConfig | None = None, return_info: bool = False):
    stepper = Stepper(old.grid, p, cfg)
    phi, rho, info = stepper.solve(initial_guess.phi.values, initial_guess.rho.values,
                                   old.phi.values, old.rho.values)
    new = State.from_arrays(old.grid, phi, rho, old.time + p.dt, old.step + 1)
    return (new, info) if return_info else new


def advance(old: State, p: ModelParams, cfg: SolverConfig | None = None,
            prev_energy: float | None = None) -> tuple[State, StepDiagnostics]:
    return Stepper(old.grid, p, cfg).advance(old, prev_energy)
