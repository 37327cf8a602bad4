"""Run orchestration for each manifest mode, checkpointing and restart."""

from __future__ import annotations

import logging
from pathlib import Path

from . import io
from .errors import ConfigError, ManifestMismatchError
from .experiments import RunConfig, convergence_study, init_random, spinodal_run
from .model import State, energy
from .stepper import Stepper
from .verify import run_suite

log = logging.getLogger(__name__)


def _levels(finest: int) -> list[int]:
    levels = [16]
    while levels[-1] < finest:
        levels.append(2 * levels[-1])
    if levels[-1] != finest or len(levels) < 2:
        raise ConfigError(f"convergence mode needs n_cells = 16 * 2^k with k >= 1, got {finest}")
    return levels


def checkpoint_dir(output_dir, step: int) -> Path:
    return Path(output_dir) / "checkpoints" / f"step_{step:08d}"


def _spinodal(manifest: io.RunManifest, checkpoint_every: int | None, start: State | None = None):
    out = Path(manifest.output_dir)
    cfg = RunConfig(manifest.grid, manifest.params, manifest.t_final,
                    list(manifest.snapshot_times), manifest.seed, out)
    snap_steps = set(cfg.snapshot_steps())

    def on_step(state, diag):
        every = checkpoint_every and state.step % checkpoint_every == 0
        if every or state.step in snap_steps or state.step == cfg.n_steps:
            io.save_checkpoint(checkpoint_dir(out, state.step), state, manifest)

    if start is None:
        io.save_checkpoint(checkpoint_dir(out, 0), init_random(cfg.grid, cfg.seed), manifest)
    return spinodal_run(cfg, manifest.solver, on_step=on_step, start=start)


def execute(manifest: io.RunManifest, checkpoint_every: int | None = None):
    """Run ``manifest``; the resolved manifest is written before any work starts."""
    out = Path(manifest.output_dir)
    manifest.write(out)
    mode = manifest.mode
    log.info("mode %s, output in %s", mode, out)
    if mode == "spinodal":
        return _spinodal(manifest, checkpoint_every)
    if mode == "convergence":
        if manifest.grid.length != 8.0:
            raise ConfigError("convergence mode uses the L = 8 trigonometric data")
        p = manifest.params
        rows = convergence_study(_levels(manifest.grid.n_cells), C_refine=p.dt,
                                 t_final=manifest.t_final, p=p, config=manifest.solver,
                                 attribute_to="coarse")
        io.write_convergence_csv(out / "convergence.csv", rows)
        return rows
    if mode == "single-step":
        state = init_random(manifest.grid, manifest.seed)
        stepper = Stepper(manifest.grid, manifest.params, manifest.solver)
        e0 = energy(state, manifest.params)
        new, diag = stepper.advance(state, e0.total)
        writer = io.EnergyCsvWriter(out / "energy.csv")
        try:
            writer.write_initial(state, e0)
            writer.write_step(new, diag)
        finally:
            writer.close()
        io.write_state_snapshots(out, new)
        return new, diag
    if mode == "property-suite":
        checks = run_suite(manifest.grid, manifest.params, manifest.seed)
        (out / "properties.txt").write_text("".join(c.line() + "\n" for c in checks))
        return checks
    raise ConfigError(f"unknown mode {mode!r}")


def resume(checkpoint: Path, output_dir: Path | None = None,
           checkpoint_every: int | None = None):
    """Continue a spinodal run from ``checkpoint``; later steps match an uninterrupted run."""
    state, manifest = io.load_checkpoint(checkpoint)
    if manifest.mode != "spinodal":
        raise ConfigError("only spinodal runs can be resumed")
    if output_dir is not None:
        manifest.output_dir = Path(output_dir)
    out = Path(manifest.output_dir)
    existing = out / "manifest.txt"
    if existing.exists():
        if io.manifest_from_file(existing).digest() != manifest.digest():
            raise ManifestMismatchError(f"{existing} belongs to a different run")
    manifest.write(out)
    io.truncate_energy_csv(out / "energy.csv", state.step)
    return _spinodal(manifest, checkpoint_every, start=state)
