"""Initial data, inter-grid transfer, the Cauchy-difference convergence study
and the spinodal-decomposition run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import SizeMismatchError
from .field import CellField, GridSpec
from .model import ModelParams, State, energy
from .stepper import SolverConfig, StepDiagnostics, Stepper

log = logging.getLogger(__name__)

TRIG_LENGTH = 8.0


def init_trig(grid: GridSpec) -> State:
    """Smooth two-mode initial data on ``(0, 8)^2`` used for the accuracy study."""
    if grid.length != TRIG_LENGTH:
        raise ValueError(f"trigonometric initial data is defined on L = 8, got L = {grid.length}")
    x, y = grid.mesh()
    k = 4.0 * np.pi / TRIG_LENGTH
    phi = 0.5 + 0.2 * np.cos(k * x) * np.cos(k * y)
    rho = 0.5 + 0.2 * np.sin(k * x) * np.sin(k * y)
    return State.from_arrays(grid, phi, rho)


def random_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Two independent PCG64 streams: ``SeedSequence(seed).spawn(2)``, first for phi, second for rho."""
    children = np.random.SeedSequence(int(seed) & (2 ** 64 - 1)).spawn(2)
    return np.random.Generator(np.random.PCG64(children[0])), np.random.Generator(
        np.random.PCG64(children[1]))


def init_random(grid: GridSpec, seed: int, base: float = 0.4, amp: float = 0.1) -> State:
    """``base + amp * r`` with ``r`` uniform on [-1, 1], shifted to exact zero mean."""
    if not (0.0 < base - amp and base + amp < 1.0 and amp >= 0):
        raise ValueError("base +/- amp must lie inside (0, 1)")
    shape = (grid.n_cells, grid.n_cells)
    fields = []
    for gen in random_streams(seed):
        r = gen.uniform(-1.0, 1.0, size=shape)
        r -= r.mean()
        fields.append(base + amp * r)
    return State.from_arrays(grid, fields[0], fields[1])


def _prolong_axis(a: np.ndarray, axis: int) -> np.ndarray:
    lo = 0.75 * a + 0.25 * np.roll(a, 1, axis)
    hi = 0.75 * a + 0.25 * np.roll(a, -1, axis)
    out_shape = list(a.shape)
    out_shape[axis] *= 2
    out = np.empty(out_shape)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(0, None, 2)
    out[tuple(idx)] = lo
    idx[axis] = slice(1, None, 2)
    out[tuple(idx)] = hi
    return out


def prolong_bilinear(coarse: CellField, target: GridSpec | None = None) -> CellField:
    """Cell-centered bilinear interpolation onto the grid with twice the cells."""
    fine_grid = coarse.grid.refined()
    if target is not None and target != fine_grid:
        raise SizeMismatchError(f"target grid {target} is not the 2x refinement of {coarse.grid}")
    out = _prolong_axis(_prolong_axis(coarse.values, 0), 1)
    return CellField(fine_grid, out)


def _l2(a: np.ndarray, h: float) -> float:
    return h * math.sqrt(float(np.sum(a * a)))


def cauchy_error(fine: State, coarse: State, time_tol: float = 1e-9) -> tuple[float, float]:
    """``(||phi_f - I phi_c||_2, ||rho_f - I rho_c||_2)`` on the fine grid."""
    if fine.grid != coarse.grid.refined():
        raise SizeMismatchError("fine grid must be the 2x refinement of the coarse grid")
    if abs(fine.time - coarse.time) > time_tol * max(1.0, abs(fine.time)):
        raise SizeMismatchError(f"states at different times: {fine.time} vs {coarse.time}")
    h = fine.grid.spacing
    e_phi = fine.phi.values - prolong_bilinear(coarse.phi).values
    e_rho = fine.rho.values - prolong_bilinear(coarse.rho).values
    return _l2(e_phi, h), _l2(e_rho, h)


@dataclass
class ConvergenceRow:
    grid_n: int
    error_phi: float
    rate_phi: float | None
    error_rho: float
    rate_rho: float | None


def run_to(state: State, params: ModelParams, t_final: float, config: SolverConfig | None = None,
           on_step: Callable[[State, StepDiagnostics], None] | None = None) -> State:
    """Advance to ``t_final`` with a whole number of steps of size ``params.dt``."""
    n_steps = round((t_final - state.time) / params.dt)
    if abs(n_steps * params.dt - (t_final - state.time)) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final} is not a whole number of steps of dt={params.dt}")
    stepper = Stepper(state.grid, params, config)
    e_prev = energy(state, params).total
    for _ in range(n_steps):
        state, diag = stepper.advance(state, e_prev)
        e_prev = diag.energy.total
        if on_step is not None:
            on_step(state, diag)
    return state


def convergence_study(levels: Sequence[int] = (16, 32, 64, 128), C_refine: float = 0.01,
                      t_final: float = 0.1, p: ModelParams | None = None,
                      config: SolverConfig | None = None, attribute_to: str = "coarse",
                      states: dict[int, State] | None = None) -> list[ConvergenceRow]:
    """Cauchy-difference study under ``dt = C_refine * h^2``.

    Each pair ``(N, 2N)`` yields one error. With ``attribute_to="fine"`` the
    pair is reported on the ``2N`` row (the coarsest level then has no row);
    with ``"coarse"`` it is reported on the ``N`` row. ``states`` may carry
    precomputed final states keyed by ``N`` and receives the ones computed here.
    """
    from .model import ACCURACY_PARAMS

    levels = list(levels)
    if len(levels) < 2 or any(b != 2 * a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must double strictly, got {levels}")
    if attribute_to not in ("fine", "coarse"):
        raise ValueError("attribute_to must be 'fine' or 'coarse'")
    p = p or ACCURACY_PARAMS
    states = {} if states is None else states
    for n in levels:
        if n in states:
            continue
        grid = GridSpec(n, TRIG_LENGTH)
        params = p.with_dt(C_refine * grid.spacing ** 2)
        log.info("convergence level N=%d, dt=%.3e", n, params.dt)
        states[n] = run_to(init_trig(grid), params, t_final, config)
    errors = []
    for coarse_n, fine_n in zip(levels, levels[1:]):
        e_phi, e_rho = cauchy_error(states[fine_n], states[coarse_n])
        errors.append((fine_n if attribute_to == "fine" else coarse_n, e_phi, e_rho))
    rows = []
    for k, (n, e_phi, e_rho) in enumerate(errors):
        if k == 0:
            rows.append(ConvergenceRow(n, e_phi, None, e_rho, None))
        else:
            _, prev_phi, prev_rho = errors[k - 1]
            rows.append(ConvergenceRow(n, e_phi, math.log2(prev_phi / e_phi),
                                       e_rho, math.log2(prev_rho / e_rho)))
    return rows


@dataclass
class RunConfig:
    grid: GridSpec
    params: ModelParams
    t_final: float
    snapshot_times: list[float] = field(default_factory=list)
    seed: int = 0
    output_dir: Path | None = None
    base: float = 0.4
    amp: float = 0.1

    def __post_init__(self):
        if not self.t_final >= 0:
            raise ValueError("t_final must be non-negative")
        for t in self.snapshot_times:
            if not 0.0 <= t <= self.t_final:
                raise ValueError(f"snapshot time {t} outside [0, {self.t_final}]")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.params.dt)

    def snapshot_steps(self) -> dict[int, float]:
        return {round(t / self.params.dt): t for t in self.snapshot_times}


@dataclass
class SpinodalResult:
    initial: State
    final: State
    energy0: float
    diagnostics: list[StepDiagnostics]
    snapshots: dict[float, State]

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.energy0] + [d.energy.total for d in self.diagnostics])


def spinodal_run(cfg: RunConfig, solver: SolverConfig | None = None,
                 on_step: Callable[[State, StepDiagnostics], None] | None = None,
                 start: State | None = None) -> SpinodalResult:
    """Spinodal decomposition from :func:`init_random`, recording every step.

    Files are written only when ``cfg.output_dir`` is set (see :mod:`surfphase.io`).
    """
    from . import io

    initial = start or init_random(cfg.grid, cfg.seed, cfg.base, cfg.amp)
    state = initial
    stepper = Stepper(cfg.grid, cfg.params, solver)
    e0 = energy(initial, cfg.params)
    snap_steps = cfg.snapshot_steps()
    snapshots: dict[float, State] = {}
    diagnostics: list[StepDiagnostics] = []
    writer = None
    if cfg.output_dir is not None:
        writer = io.EnergyCsvWriter(Path(cfg.output_dir) / "energy.csv")
        if start is None or start.step == 0:
            writer.write_initial(initial, e0)
    if initial.step in snap_steps:
        snapshots[snap_steps[initial.step]] = initial
        if cfg.output_dir is not None:
            io.write_state_snapshots(cfg.output_dir, initial, snap_steps[initial.step])
    e_prev = e0.total
    try:
        while state.step < cfg.n_steps:
            state, diag = stepper.advance(state, e_prev)
            e_prev = diag.energy.total
            diagnostics.append(diag)
            if writer is not None:
                writer.write_step(state, diag)
            if state.step in snap_steps:
                t_snap = snap_steps[state.step]
                snapshots[t_snap] = state
                if cfg.output_dir is not None:
                    io.write_state_snapshots(cfg.output_dir, state, t_snap)
            if on_step is not None:
                on_step(state, diag)
    finally:
        if writer is not None:
            writer.close()
    return SpinodalResult(initial, state, e0.total, diagnostics, snapshots)
