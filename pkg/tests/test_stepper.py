"""Newton-Krylov time stepper, safeguard and Jacobian."""

import jax
import numpy as np
import pytest

import oracles
from surfphase import stepper as stp
from surfphase.errors import InvariantViolation, NewtonDivergence, StepDampedError
from surfphase.experiments import init_random, init_trig
from surfphase.field import CellField, GridSpec, hminus1_sq_array
from surfphase.model import ACCURACY_PARAMS, SPINODAL_PARAMS, State, energy, scheme_residual
from surfphase.stepper import SolverConfig, Stepper, jacobian_apply, safeguard_fraction
from surfphase.verify import fd_step


def scan_fraction(rho, d, tau):
    """Exhaustive per-cell scan for the largest interior step."""
    t_max = np.inf
    for r, dr in zip(rho.ravel(), d.ravel()):
        if dr > 0:
            t_max = min(t_max, (1 - r) / dr)
        elif dr < 0:
            t_max = min(t_max, -r / dr)
    return 1.0 if t_max > 1 else min(1.0, tau * t_max)


# ---- safeguard --------------------------------------------------------------------

def test_safeguard_examples():
    half = np.full((8, 8), 0.5)
    assert safeguard_fraction(half, np.zeros((8, 8)), 0.9) == 1.0
    assert safeguard_fraction(half, np.ones((8, 8)), 0.9) == pytest.approx(0.45)
    rho = half.copy()
    rho[3, 5] = 0.99
    d = np.full((8, 8), 0.1)
    assert safeguard_fraction(rho, d, 0.9) == pytest.approx(0.09)
    assert scan_fraction(rho, d, 0.9) == pytest.approx(0.09)


def test_safeguard_matches_scan(rng):
    for _ in range(50):
        rho = rng.uniform(0.01, 0.99, (6, 6))
        d = rng.standard_normal((6, 6)) * 10 ** rng.uniform(-2, 1)
        theta = safeguard_fraction(rho, d, 0.9)
        assert theta == pytest.approx(scan_fraction(rho, d, 0.9), rel=1e-14)
        moved = rho + theta * d
        assert moved.min() > 0 and moved.max() < 1


# ---- Jacobian ---------------------------------------------------------------------

def _base_pair(grid, rng):
    old = init_random(grid, 3)
    phi = old.phi.values + 0.01 * rng.standard_normal(old.phi.values.shape)
    rho = old.rho.values + 0.01 * rng.standard_normal(old.rho.values.shape)
    return State.from_arrays(grid, phi, rho), old


def test_jacobian_matches_autodiff(grid16, rng):
    p = SPINODAL_PARAMS.with_dt(1e-3)
    h = grid16.spacing
    base, old = _base_pair(grid16, rng)
    u, v = rng.standard_normal((2, 16, 16))
    ju, jv = jacobian_apply(base, old, p, (CellField(grid16, u), CellField(grid16, v)))
    _, (ru, rv) = jax.jvp(
        lambda a, b: oracles.residual(a, b, old.phi.values, old.rho.values, h, p),
        (base.phi.values, base.rho.values), (u, v))
    scale = np.max(np.abs(ru)) + np.max(np.abs(rv))
    assert np.max(np.abs(ju.values - np.asarray(ru))) <= 1e-10 * scale
    assert np.max(np.abs(jv.values - np.asarray(rv))) <= 1e-10 * scale


def test_jacobian_finite_differences(grid16, rng):
    p = SPINODAL_PARAMS.with_dt(1e-3)
    base, old = _base_pair(grid16, rng)
    for _ in range(5):
        u, v = rng.standard_normal((2, 16, 16))
        ju, jv = jacobian_apply(base, old, p, (CellField(grid16, u), CellField(grid16, v)))
        s = fd_step(base.phi.values, base.rho.values)
        plus = State.from_arrays(grid16, base.phi.values + s * u, base.rho.values + s * v)
        minus = State.from_arrays(grid16, base.phi.values - s * u, base.rho.values - s * v)
        fp, fm = scheme_residual(plus, old, p), scheme_residual(minus, old, p)
        fd = np.concatenate([((a.values - b.values) / (2 * s)).ravel() for a, b in zip(fp, fm)])
        an = np.concatenate((ju.values.ravel(), jv.values.ravel()))
        assert np.linalg.norm(fd - an) <= 1e-5 * np.linalg.norm(an)


def test_jacobian_linear(grid16, rng):
    p = SPINODAL_PARAMS
    base, old = _base_pair(grid16, rng)
    zero = CellField(grid16, np.zeros((16, 16)))
    z = jacobian_apply(base, old, p, (zero, zero))
    assert not z[0].values.any() and not z[1].values.any()
    a = [CellField(grid16, x) for x in rng.standard_normal((2, 16, 16))]
    b = [CellField(grid16, x) for x in rng.standard_normal((2, 16, 16))]
    ja, jb = jacobian_apply(base, old, p, a), jacobian_apply(base, old, p, b)
    jab = jacobian_apply(base, old, p, (a[0] + b[0], a[1] + b[1]))
    for k in range(2):
        ref = ja[k].values + jb[k].values
        assert np.allclose(jab[k].values, ref, rtol=0, atol=1e-12 * np.max(np.abs(ref)))


# ---- solver -----------------------------------------------------------------------

def test_one_step_matches_merit_minimizer():
    """Smooth data on 32^2, dt = 1e-4: the step equals the minimizer of the merit functional."""
    g = GridSpec(32, 8.0)
    p = ACCURACY_PARAMS.with_dt(1e-4)
    old = init_trig(g)
    new, diag = Stepper(g, p).advance(old)
    phi, rho, _ = oracles.minimize_merit(old.phi.values, old.rho.values, g.spacing, p)
    assert np.max(np.abs(new.phi.values - phi)) <= 1e-6
    assert np.max(np.abs(new.rho.values - rho)) <= 1e-6
    assert diag.energy.total < energy(old, p).total
    assert abs(new.phi.mean() - old.phi.mean()) <= 1e-12 * g.area
    assert abs(new.rho.mean() - old.rho.mean()) <= 1e-12 * g.area


def test_constant_state_is_fixed_point(grid16):
    old = State.from_arrays(grid16, np.full((16, 16), 0.3), np.full((16, 16), 0.7))
    new, diag = Stepper(grid16, SPINODAL_PARAMS).advance(old)
    assert diag.newton_iters <= 1
    assert np.array_equal(new.phi.values, old.phi.values)
    assert np.array_equal(new.rho.values, old.rho.values)
    assert new.step == 1 and new.time == pytest.approx(SPINODAL_PARAMS.dt)


def test_exact_guess_needs_no_iterations(grid16):
    p = SPINODAL_PARAMS
    old = init_random(grid16, 2)
    new = stp.newton_solve(old, old, p)
    again, info = stp.newton_solve(new, old, p, return_info=True)
    assert info["newton_iters"] == 0
    assert np.array_equal(again.phi.values, new.phi.values)


@pytest.mark.parametrize("dt", [1e-3, 1e-4])
def test_newton_iterations_and_residual(dt):
    g = GridSpec(32, 8.0)
    p = ACCURACY_PARAMS.with_dt(dt)
    cfg = SolverConfig()
    old = init_trig(g)
    new, info = stp.newton_solve(old, old, p, cfg, return_info=True)
    assert info["newton_iters"] <= 10
    r_phi, r_rho = scheme_residual(new, old, p)
    res = g.spacing * np.sqrt(np.sum(r_phi.values ** 2) + np.sum(r_rho.values ** 2))
    assert res <= cfg.tolerance(g)


def test_quadratic_tail():
    C, floor = 10.0, 1e-11
    cases = [(GridSpec(32, 8.0), ACCURACY_PARAMS.with_dt(dt), init_trig(GridSpec(32, 8.0)))
             for dt in (1e-3, 1e-4)]
    g = GridSpec(32, 2 * np.pi)
    cases += [(g, SPINODAL_PARAMS.with_dt(dt), init_random(g, 1)) for dt in (1e-2, 1.0)]
    for grid, p, old in cases:
        _, diag = Stepper(grid, p).advance(old)
        hist = diag.residual_history
        for r0, r1 in zip(hist, hist[1:]):
            if r0 <= 1e-4:
                assert r1 <= C * r0 ** 2 + floor


def test_half_steps_first_order():
    """Two half steps against one full step: the gap shrinks like dt^2."""
    g = GridSpec(32, 8.0)
    old = init_trig(g)
    gaps = []
    for dt in (2e-3, 1e-3):
        full, _ = Stepper(g, ACCURACY_PARAMS.with_dt(dt)).advance(old)
        half = Stepper(g, ACCURACY_PARAMS.with_dt(dt / 2))
        mid, _ = half.advance(old)
        two, _ = half.advance(mid)
        gap = (hminus1_sq_array(full.phi.values - two.phi.values, g)
               + hminus1_sq_array(full.rho.values - two.rho.values, g)) ** 0.5
        gaps.append(gap)
    order = np.log2(gaps[0] / gaps[1])
    assert 1.8 <= order <= 2.2


def test_iterates_stay_interior():
    g = GridSpec(32, 2 * np.pi)
    old = init_random(g, 9, base=0.1, amp=0.05)
    for dt in (1e-2, 1.0):
        new, diag = Stepper(g, SPINODAL_PARAMS.with_dt(dt)).advance(old)
        assert 0 < diag.iterate_rho_min and diag.iterate_rho_max < 1
        assert 0 < diag.rho_min and diag.rho_max < 1


def test_deterministic(grid16):
    old = init_random(grid16, 4)
    a, _ = Stepper(grid16, SPINODAL_PARAMS).advance(old)
    b, _ = Stepper(grid16, SPINODAL_PARAMS).advance(old)
    assert np.array_equal(a.phi.values, b.phi.values)
    assert np.array_equal(a.rho.values, b.rho.values)


# ---- failure paths ---------------------------------------------------------------

def test_newton_divergence_carries_history(grid16):
    cfg = SolverConfig(newton_max_iter=1, newton_tol=1e-30)
    old = init_random(grid16, 4)
    with pytest.raises(NewtonDivergence) as err:
        Stepper(grid16, SPINODAL_PARAMS, cfg).advance(old)
    assert len(err.value.history) == 2


def test_damping_failure_carries_history(grid16, monkeypatch):
    calls = iter(range(10 ** 6))
    monkeypatch.setattr(stp, "merit_array", lambda *a, **k: float(next(calls)))
    with pytest.raises(StepDampedError) as err:
        Stepper(grid16, SPINODAL_PARAMS).advance(init_random(grid16, 4))
    assert err.value.history[-1]["theta"] < SolverConfig().damping_min


def test_energy_guard(grid16):
    old = init_random(grid16, 4)
    e0 = energy(old, SPINODAL_PARAMS).total
    with pytest.raises(InvariantViolation):
        Stepper(grid16, SPINODAL_PARAMS).advance(old, prev_energy=e0 - 1.0)


def test_config_validation():
    for bad in ({"boundary_fraction": 1.0}, {"boundary_fraction": 0.0}, {"linear_tol": 0.0},
                {"newton_tol": -1.0}, {"damping_min": 0.0}, {"newton_max_iter": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig().tolerance(GridSpec(16, 8.0)) == pytest.approx(8e-10)
