"""Run configuration, manifests, field snapshots, CSV outputs and checkpoints.

Config files are flat ``key = value`` text with ``#`` comments. Snapshot
files hold a header line ``N L time`` followed by ``N`` lines of ``N``
values (row ``i`` per line) in ``%.17e`` format, which round-trips float64
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import hashlib
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ManifestMismatchError, MissingKeyError
from .field import CellField, GridSpec
from .model import EnergyBreakdown, ModelParams, State
from .stepper import SolverConfig, StepDiagnostics

MODES = ("convergence", "spinodal", "single-step", "property-suite")
REQUIRED_KEYS = ("mode", "n_cells", "length", "eps", "alpha", "beta", "eta", "xi", "delta",
                 "mobility", "dt", "t_final")
OPTIONAL_KEYS = ("seed", "newton_tol", "newton_max_iter", "linear_tol", "boundary_fraction",
                 "snapshot_times", "output_dir")
ALL_KEYS = REQUIRED_KEYS + OPTIONAL_KEYS
PHYSICAL_KEYS = ("eps", "alpha", "beta", "eta", "xi", "delta", "mobility", "dt")
# keys that do not change results and are left out of the manifest hash
_UNHASHED = ("output_dir",)

ENERGY_COLUMNS = ("step", "time", "E_total", "E_convex", "E_concave", "mass_phi", "mass_rho",
                  "rho_min", "rho_max", "newton_iters", "residual")
CONVERGENCE_COLUMNS = ("grid_n", "error_phi", "rate_phi", "error_rho", "rate_rho")


def fmt(x: float) -> str:
    """Shortest repr that round-trips exactly."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunManifest:
    mode: str
    grid: GridSpec
    params: ModelParams
    solver: SolverConfig
    seed: int
    t_final: float
    snapshot_times: list[float] = field(default_factory=list)
    output_dir: Path = Path("output")
    config_path: str | None = None
    version: str = __version__

    def resolved(self) -> dict[str, str]:
        """Every value that influences a run, as strings, in a fixed order."""
        solver_tol = self.solver.tolerance(self.grid)
        out = {
            "mode": self.mode,
            "n_cells": str(self.grid.n_cells),
            "length": fmt(self.grid.length),
        }
        out.update({k: fmt(v) for k, v in self.params.as_dict().items()})
        out.update({
            "t_final": fmt(self.t_final),
            "seed": str(self.seed),
            "newton_tol": fmt(solver_tol),
            "newton_max_iter": str(self.solver.newton_max_iter),
            "linear_tol": fmt(self.solver.linear_tol),
            "boundary_fraction": fmt(self.solver.boundary_fraction),
            "damping_min": fmt(self.solver.damping_min),
            "krylov_restart": str(self.solver.krylov_restart),
            "krylov_max_restarts": str(self.solver.krylov_max_restarts),
            "snapshot_times": ",".join(fmt(t) for t in self.snapshot_times),
            "output_dir": str(self.output_dir),
            "version": self.version,
        })
        return out

    def text(self) -> str:
        lines = ["# resolved run manifest"]
        if self.config_path:
            lines.append(f"# config: {self.config_path}")
        lines += [f"{k} = {v}" for k, v in self.resolved().items()]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        items = [f"{k}={v}" for k, v in self.resolved().items() if k not in _UNHASHED]
        return hashlib.sha256("\n".join(items).encode()).hexdigest()

    def write(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "manifest.txt"
        path.write_text(self.text())
        return path


def _parse_float(key, raw, line):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a real number, got {raw!r}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line)
    return value


def _parse_int(key, raw, line):
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}", line) from None


def _read_pairs(text: str) -> tuple[dict[str, str], dict[str, int]]:
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in ALL_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        values[key] = value
        lines[key] = lineno
    return values, lines


def parse_config(text: str, config_path: str | None = None, overrides: dict | None = None
                 ) -> RunManifest:
    """Parse a flat ``key = value`` config into a :class:`RunManifest`.

    Physical parameters, grid, mode, ``dt`` and ``t_final`` are required. In
    ``convergence`` mode ``dt`` is the constant ``C`` of ``dt = C h^2`` and
    ``n_cells`` the finest level (levels double from 16).
    """
    values, lines = _read_pairs(text)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = str(value)
    for key in REQUIRED_KEYS:
        if key not in values:
            raise MissingKeyError(key)

    def line(k):
        return lines.get(k)

    mode = values["mode"]
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}", line("mode"))
    n_cells = _parse_int("n_cells", values["n_cells"], line("n_cells"))
    length = _parse_float("length", values["length"], line("length"))
    if n_cells < 4:
        raise ConfigError("n_cells must be >= 4", line("n_cells"))
    if length <= 0:
        raise ConfigError("length must be positive", line("length"))
    phys = {}
    for key in PHYSICAL_KEYS:
        phys[key] = _parse_float(key, values[key], line(key))
        if phys[key] <= 0:
            raise ConfigError(f"{key} must be positive, got {phys[key]!r}", line(key))
    t_final = _parse_float("t_final", values["t_final"], line("t_final"))
    if t_final < 0:
        raise ConfigError("t_final must be non-negative", line("t_final"))

    solver_kwargs = {}
    if "newton_tol" in values:
        solver_kwargs["newton_tol"] = _parse_float("newton_tol", values["newton_tol"],
                                                   line("newton_tol"))
    if "newton_max_iter" in values:
        solver_kwargs["newton_max_iter"] = _parse_int("newton_max_iter",
                                                      values["newton_max_iter"],
                                                      line("newton_max_iter"))
    for key in ("linear_tol", "boundary_fraction"):
        if key in values:
            solver_kwargs[key] = _parse_float(key, values[key], line(key))
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    seed = _parse_int("seed", values.get("seed", "0"), line("seed"))
    snapshot_times = []
    raw_snaps = values.get("snapshot_times", "").strip()
    if raw_snaps:
        snapshot_times = [_parse_float("snapshot_times", s.strip(), line("snapshot_times"))
                          for s in raw_snaps.split(",") if s.strip()]
    for t in snapshot_times:
        if not 0 <= t <= t_final:
            raise ConfigError(f"snapshot time {t} outside [0, t_final]", line("snapshot_times"))
    return RunManifest(
        mode=mode,
        grid=GridSpec(n_cells, length),
        params=ModelParams(**phys),
        solver=solver,
        seed=seed,
        t_final=t_final,
        snapshot_times=snapshot_times,
        output_dir=Path(values.get("output_dir", "output")),
        config_path=config_path,
    )


def load_config(path, overrides: dict | None = None) -> RunManifest:
    path = Path(path)
    return parse_config(path.read_text(), str(path), overrides)


def manifest_from_file(path) -> RunManifest:
    """Rebuild a manifest from a written ``manifest.txt``."""
    values, _ = _read_manifest_pairs(Path(path).read_text())
    solver = SolverConfig(
        newton_tol=float(values["newton_tol"]),
        newton_max_iter=int(values["newton_max_iter"]),
        linear_tol=float(values["linear_tol"]),
        boundary_fraction=float(values["boundary_fraction"]),
        damping_min=float(values["damping_min"]),
        krylov_restart=int(values["krylov_restart"]),
        krylov_max_restarts=int(values["krylov_max_restarts"]),
    )
    snaps = [float(s) for s in values["snapshot_times"].split(",") if s.strip()]
    return RunManifest(
        mode=values["mode"],
        grid=GridSpec(int(values["n_cells"]), float(values["length"])),
        params=ModelParams(**{k: float(values[k]) for k in PHYSICAL_KEYS}),
        solver=solver,
        seed=int(values["seed"]),
        t_final=float(values["t_final"]),
        snapshot_times=snaps,
        output_dir=Path(values["output_dir"]),
        version=values["version"],
    )


def _read_manifest_pairs(text):
    values = {}
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
    return values, None


# ---------------------------------------------------------------------------
# field snapshots

def write_snapshot(path, values: np.ndarray, length: float, time: float) -> None:
    values = np.asarray(values)
    n = values.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{n} {fmt(length)} {fmt(time)}\n")
        for row in values:
            fh.write(" ".join(f"{x:.17e}" for x in row))
            fh.write("\n")


def read_snapshot(path) -> tuple[np.ndarray, float, float]:
    """Return ``(values, length, time)``."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: bad snapshot header")
        n = int(header[0])
        length = float(header[1])
        time = float(header[2])
        values = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if values.shape != (n, n):
        raise ValueError(f"{path}: expected {n}x{n} values, found {values.shape}")
    return values, length, time


def write_cell_field(path, f: CellField, time: float = 0.0) -> None:
    write_snapshot(path, f.values, f.grid.length, time)


def read_cell_field(path) -> tuple[CellField, float]:
    values, length, time = read_snapshot(path)
    return CellField(GridSpec(values.shape[0], length), values), time


def _time_label(t: float) -> str:
    return f"{t:g}"


def write_state_snapshots(directory, state: State, label_time: float | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    label = _time_label(state.time if label_time is None else label_time)
    write_cell_field(directory / f"phi_t{label}.dat", state.phi, state.time)
    write_cell_field(directory / f"rho_t{label}.dat", state.rho, state.time)


# ---------------------------------------------------------------------------
# CSV outputs

def energy_row(step: int, time: float, e: EnergyBreakdown, mass_phi: float, mass_rho: float,
               rho_min: float, rho_max: float, newton_iters: int, residual: float) -> list[str]:
    return [str(step), fmt(time), fmt(e.total), fmt(e.convex), fmt(e.concave), fmt(mass_phi),
            fmt(mass_rho), fmt(rho_min), fmt(rho_max), str(newton_iters), fmt(residual)]


class EnergyCsvWriter:
    """Appends one row per step to ``energy.csv``; the header is written once."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if new:
            self._writer.writerow(ENERGY_COLUMNS)

    def write_initial(self, state: State, e: EnergyBreakdown) -> None:
        h2 = state.grid.spacing ** 2
        self._writer.writerow(energy_row(
            state.step, state.time, e, h2 * float(np.sum(state.phi.values)),
            h2 * float(np.sum(state.rho.values)), state.rho.min(), state.rho.max(), 0, 0.0))
        self._fh.flush()

    def write_step(self, state: State, d: StepDiagnostics) -> None:
        self._writer.writerow(energy_row(state.step, state.time, d.energy, d.mass_phi,
                                         d.mass_rho, d.rho_min, d.rho_max, d.newton_iters,
                                         d.final_residual))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_energy_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def truncate_energy_csv(path, last_step: int) -> None:
    """Drop rows with ``step > last_step`` (used before resuming)."""
    path = Path(path)
    if not path.exists():
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    kept = [rows[0]] + [r for r in rows[1:] if int(r[0]) <= last_step]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(kept)


def write_convergence_csv(path, rows) -> None:
    def cell(x):
        return "" if x is None else fmt(x)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for r in rows:
            w.writerow([str(r.grid_n), cell(r.error_phi), cell(r.rate_phi), cell(r.error_rho),
                        cell(r.rate_rho)])


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_INFO = "checkpoint.txt"


def save_checkpoint(directory, state: State, manifest: RunManifest) -> Path:
    """Write ``phi.dat``, ``rho.dat``, ``manifest.txt`` and ``checkpoint.txt`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_cell_field(directory / "phi.dat", state.phi, state.time)
    write_cell_field(directory / "rho.dat", state.rho, state.time)
    manifest.write(directory)
    (directory / CHECKPOINT_INFO).write_text(
        f"step = {state.step}\ntime = {fmt(state.time)}\nmanifest_hash = {manifest.digest()}\n")
    return directory


def load_checkpoint(directory, manifest: RunManifest | None = None) -> tuple[State, RunManifest]:
    """Load a checkpoint; the stored manifest hash must match ``manifest`` (or the stored manifest)."""
    directory = Path(directory)
    info, _ = _read_manifest_pairs((directory / CHECKPOINT_INFO).read_text())
    stored = manifest_from_file(directory / "manifest.txt")
    if stored.digest() != info["manifest_hash"]:
        raise ManifestMismatchError(f"{directory}: manifest.txt does not match the recorded hash")
    if manifest is not None and manifest.digest() != info["manifest_hash"]:
        raise ManifestMismatchError(f"{directory}: checkpoint was written by a different run")
    phi, t_phi = read_cell_field(directory / "phi.dat")
    rho, t_rho = read_cell_field(directory / "rho.dat")
    time = float(info["time"])
    if t_phi != time or t_rho != time:
        raise ValueError(f"{directory}: snapshot times disagree with checkpoint.txt")
    state = State(phi, rho, time, int(info["step"]))
    return state, stored
