"""Quick in-process property checks, run by ``surfphase verify``."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import field as fld
from .experiments import init_random
from .field import CellField, GridSpec
from .model import (
    SPINODAL_PARAMS,
    ModelParams,
    State,
    concave_energy_array,
    concave_gradient_array,
    convex_energy_array,
    convex_gradient_array,
    energy,
    merit_array,
    residual_arrays,
)
from .stepper import SolverConfig, Stepper, _Linearization


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def fd_step(*arrays) -> float:
    """Central-difference step: square root of round-off times the field scale."""
    scale = max(1.0, *(float(np.max(np.abs(a))) for a in arrays))
    return math.sqrt(np.finfo(float).eps) * scale


def random_admissible(grid: GridSpec, rng: np.random.Generator, phi_amp: float = 0.4):
    n = grid.n_cells
    phi = 0.5 + phi_amp * rng.standard_normal((n, n))
    rho = rng.uniform(0.05, 0.95, size=(n, n))
    return phi, rho


def check_adjointness(grid: GridSpec, rng) -> Check:
    worst = 0.0
    for _ in range(10):
        n = grid.n_cells
        v = CellField(grid, rng.standard_normal((n, n)))
        f = fld.EdgeFieldPair(grid, rng.standard_normal((n, n)), rng.standard_normal((n, n)))
        lhs = fld.inner(v, fld.div(f))
        rhs = -fld.edge_inner(fld.grad(v), f)
        scale = fld.norm(v) * math.sqrt(fld.edge_inner(f, f)) / grid.spacing
        worst = max(worst, abs(lhs - rhs) / scale)
    return Check("summation by parts", worst <= 1e-12, f"max relative defect {worst:.2e}")


def check_eigenmodes(grid: GridSpec) -> Check:
    n, h = grid.n_cells, grid.spacing
    idx = np.arange(n)
    worst = 0.0
    for k, l in [(1, 0), (0, 1), (2, 3), (n // 2, 1), (n // 2, n // 2)]:
        mode = np.cos(2 * np.pi * k * idx / n)[:, None] * np.cos(2 * np.pi * l * idx / n)[None, :]
        lam = -(4 / h ** 2) * (np.sin(np.pi * k / n) ** 2 + np.sin(np.pi * l / n) ** 2)
        out = fld.laplacian(CellField(grid, mode)).values
        worst = max(worst, float(np.max(np.abs(out - lam * mode))) / (4 * 2 / h ** 2))
    return Check("laplacian eigenmodes", worst <= 1e-12, f"max relative defect {worst:.2e}")


def check_inverse(grid: GridSpec, rng) -> Check:
    n = grid.n_cells
    w = rng.standard_normal((n, n))
    w -= w.mean()
    wf = CellField(grid, w)
    back = fld.inv_neg_laplacian(-fld.laplacian(wf))
    err = fld.norm(back - wf) / fld.norm(wf)
    return Check("inverse Laplacian round trip", err <= 1e-12, f"relative error {err:.2e}")


def gradient_consistency(grid: GridSpec, p: ModelParams, rng, n_dir: int = 20) -> float:
    """Relative gap between assembled and central-difference directional derivatives.

    The gap is measured over the vector of all ``n_dir`` directional derivatives,
    so a direction nearly orthogonal to the gradient does not turn absolute
    round-off into a large relative error.
    """
    h = grid.spacing
    phi, rho = random_admissible(grid, rng, 0.2)
    rho = 0.2 + 0.6 * (rho - 0.05) / 0.9
    worst = 0.0
    for energy_fn, grad_fn in ((convex_energy_array, convex_gradient_array),
                               (concave_energy_array, concave_gradient_array)):
        g_phi, g_rho = grad_fn(phi, rho, h, p)
        fd, an = [], []
        for _ in range(n_dir):
            u = rng.standard_normal(phi.shape)
            v = rng.standard_normal(phi.shape) * 0.05
            s = fd_step(phi, rho)
            fd.append((energy_fn(phi + s * u, rho + s * v, h, p)
                       - energy_fn(phi - s * u, rho - s * v, h, p)) / (2 * s))
            an.append(h * h * float(np.sum(g_phi * u) + np.sum(g_rho * v)))
        fd, an = np.array(fd), np.array(an)
        worst = max(worst, float(np.linalg.norm(fd - an) / np.linalg.norm(an)))
    return worst


def jacobian_consistency(grid: GridSpec, p: ModelParams, rng, n_dir: int = 5) -> float:
    h = grid.spacing
    phi_old, rho_old = random_admissible(grid, rng, 0.2)
    rho_old = 0.2 + 0.6 * (rho_old - 0.05) / 0.9
    phi = phi_old + 0.01 * rng.standard_normal(phi_old.shape)
    rho = np.clip(rho_old + 0.01 * rng.standard_normal(rho_old.shape), 0.1, 0.9)
    lin = _Linearization(phi, rho, h, p)
    worst = 0.0
    for _ in range(n_dir):
        u = rng.standard_normal(phi.shape)
        v = rng.standard_normal(phi.shape) * 0.05
        ju, jv = lin.apply(u, v)
        s = fd_step(phi, rho)
        a = residual_arrays(phi + s * u, rho + s * v, phi_old, rho_old, h, p)
        b = residual_arrays(phi - s * u, rho - s * v, phi_old, rho_old, h, p)
        fd = np.concatenate([((x - y) / (2 * s)).ravel() for x, y in zip(a, b)])
        an = np.concatenate((ju.ravel(), jv.ravel()))
        worst = max(worst, float(np.linalg.norm(fd - an) / np.linalg.norm(an)))
    return worst


def convexity_defects(grid: GridSpec, p: ModelParams, rng, n_pairs: int = 100):
    """Largest scaled violations of the convex-combination inequality for E_c, E_e, J."""
    h = grid.spacing
    phi_old, rho_old = random_admissible(grid, rng, 0.2)
    worst = {"convex": -math.inf, "concave": -math.inf, "merit": -math.inf}
    for _ in range(n_pairs):
        a_phi, a_rho = random_admissible(grid, rng)
        b_phi, b_rho = random_admissible(grid, rng)
        lam = rng.uniform(0.0, 1.0)
        m_phi = lam * a_phi + (1 - lam) * b_phi
        m_rho = lam * a_rho + (1 - lam) * b_rho
        for name, fn in (("convex", lambda f, r: convex_energy_array(f, r, h, p)),
                         ("concave", lambda f, r: concave_energy_array(f, r, h, p))):
            fa, fb, fm = fn(a_phi, a_rho), fn(b_phi, b_rho), fn(m_phi, m_rho)
            scale = 1.0 + abs(fa) + abs(fb)
            worst[name] = max(worst[name], (fm - lam * fa - (1 - lam) * fb) / scale)
        # the merit functional lives on the affine set of fixed means
        shift = [(phi_old.mean() - x.mean(), rho_old.mean() - y.mean())
                 for x, y in ((a_phi, a_rho), (b_phi, b_rho))]
        ma_phi, ma_rho = a_phi + shift[0][0], a_rho + shift[0][1]
        mb_phi, mb_rho = b_phi + shift[1][0], b_rho + shift[1][1]
        if min(ma_rho.min(), mb_rho.min()) <= 0 or max(ma_rho.max(), mb_rho.max()) >= 1:
            continue
        jfn = lambda f, r: merit_array(f, r, phi_old, rho_old, grid, p)  # noqa: E731
        ja, jb = jfn(ma_phi, ma_rho), jfn(mb_phi, mb_rho)
        jm = jfn(lam * ma_phi + (1 - lam) * mb_phi, lam * ma_rho + (1 - lam) * mb_rho)
        scale = 1.0 + abs(ja) + abs(jb)
        worst["merit"] = max(worst["merit"], (jm - lam * ja - (1 - lam) * jb) / scale)
    return worst


def check_short_run(grid: GridSpec, p: ModelParams, seed: int, n_steps: int = 5) -> Check:
    state = init_random(grid, seed)
    stepper = Stepper(grid, p, SolverConfig())
    e0 = energy(state, p).total
    m0 = (state.phi.mean(), state.rho.mean())
    e_prev = e0
    for _ in range(n_steps):
        state, diag = stepper.advance(state, e_prev)
        e_prev = diag.energy.total
    drift = max(abs(state.phi.mean() - m0[0]), abs(state.rho.mean() - m0[1]))
    ok = e_prev <= e0 and drift <= 1e-12 and 0 < state.rho.min() and state.rho.max() < 1
    return Check("short spinodal run", ok,
                 f"E {e0:.6g} -> {e_prev:.6g}, mass drift {drift:.1e}, "
                 f"rho in [{state.rho.min():.3g}, {state.rho.max():.3g}]")


def run_suite(grid: GridSpec | None = None, params: ModelParams | None = None,
              seed: int = 0) -> list[Check]:
    grid = grid or GridSpec(16, 2 * math.pi)
    p = params or SPINODAL_PARAMS
    rng = np.random.default_rng(seed)
    checks = [check_adjointness(grid, rng), check_eigenmodes(grid), check_inverse(grid, rng)]
    g = gradient_consistency(grid, p, rng)
    checks.append(Check("energy gradient consistency", g <= 1e-5, f"max relative gap {g:.2e}"))
    j = jacobian_consistency(grid, p.with_dt(1e-3), rng)
    checks.append(Check("Jacobian consistency", j <= 1e-5, f"max relative gap {j:.2e}"))
    c = convexity_defects(grid, p, rng, n_pairs=30)
    ok = all(v <= 1e-10 for v in c.values())
    checks.append(Check("convexity of E_c, E_e, J", ok,
                        ", ".join(f"{k} {v:.1e}" for k, v in c.items())))
    checks.append(check_short_run(grid, p, seed))
    return checks
