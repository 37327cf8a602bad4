"""Command line interface: ``surfphase run|resume|verify``."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

from . import __version__, kernels
from .errors import ConfigError, InvariantViolation, ManifestMismatchError, SolverError
from .io import load_config
from .runner import execute, resume
from .verify import run_suite

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfphase", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config", type=Path)
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--checkpoint-every", type=int, metavar="STEPS")

    res = sub.add_parser("resume", help="continue a spinodal run from a checkpoint directory")
    res.add_argument("checkpoint", type=Path)
    res.add_argument("--output-dir", type=Path)
    res.add_argument("--checkpoint-every", type=int, metavar="STEPS")

    ver = sub.add_parser("verify", help="run the property suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--output-dir", type=Path)
    return parser


def _report_run(result) -> bool:
    if isinstance(result, list) and result and hasattr(result[0], "passed"):
        for check in result:
            print(check.line())
        return all(c.passed for c in result)
    if isinstance(result, list):
        print("grid_n  error_phi   rate_phi  error_rho   rate_rho")
        for r in result:
            rp = "" if r.rate_phi is None else f"{r.rate_phi:.2f}"
            rr = "" if r.rate_rho is None else f"{r.rate_rho:.2f}"
            print(f"{r.grid_n:6d}  {r.error_phi:.3e}  {rp:>8}  {r.error_rho:.3e}  {rr:>8}")
        return True
    if hasattr(result, "final"):
        print(f"finished at t={result.final.time:g} after {result.final.step} steps; "
              f"E {result.energy0:.10g} -> {result.energies[-1]:.10g}")
        return True
    state, diag = result
    print(f"one step: E={diag.energy.total:.10g}, newton={diag.newton_iters}, "
          f"residual={diag.final_residual:.2e}")
    return True


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            manifest = load_config(args.config, {"output_dir": args.output_dir,
                                                 "seed": args.seed})
            ok = _report_run(execute(manifest, args.checkpoint_every))
        elif args.command == "resume":
            ok = _report_run(resume(args.checkpoint, args.output_dir, args.checkpoint_every))
        else:
            checks = run_suite(seed=args.seed)
            if args.output_dir is not None:
                args.output_dir.mkdir(parents=True, exist_ok=True)
                (args.output_dir / "properties.txt").write_text(
                    "".join(c.line() + "\n" for c in checks))
            ok = _report_run(checks)
    except (ConfigError, ManifestMismatchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, InvariantViolation) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK if ok else EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
