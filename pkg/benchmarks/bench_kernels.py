"""Compare the compiled and numpy kernel backends.

Per-kernel timings call both modules directly. The full-step timing runs in a
subprocess per backend, since the backend is fixed when the package is imported.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 20]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from surfphase import _pykernels

try:
    from surfphase import _ckernels
except ImportError:
    _ckernels = None

STEP_SNIPPET = """
import json, sys, time
from surfphase import kernels
from surfphase.experiments import init_random
from surfphase.field import GridSpec
from surfphase.model import SPINODAL_PARAMS, energy
from surfphase.stepper import Stepper
n, steps = int(sys.argv[1]), int(sys.argv[2])
grid = GridSpec(n, 6.283185307179586)
state = init_random(grid, 7)
stepper = Stepper(grid, SPINODAL_PARAMS)
e = energy(state, SPINODAL_PARAMS).total
state, d = stepper.advance(state, e)
t0 = time.perf_counter()
for _ in range(steps):
    state, d = stepper.advance(state, d.energy.total)
print(json.dumps({"backend": kernels.BACKEND, "per_step": (time.perf_counter() - t0) / steps}))
"""


def kernel_cases(n, rng):
    h = 2 * np.pi / n
    phi = 0.5 + 0.1 * rng.standard_normal((n, n))
    rho = rng.uniform(0.2, 0.8, (n, n))
    u = rng.standard_normal((n, n))
    v = rng.standard_normal((n, n))
    wx = rng.uniform(0.5, 1.5, (n, n))
    wy = rng.uniform(0.5, 1.5, (n, n))
    nmag = _pykernels.avg_grad_mag(phi, h, 0.01)
    return {
        "laplacian": lambda m: m.laplacian(phi, h),
        "avg_grad_mag": lambda m: m.avg_grad_mag(phi, h, 0.01),
        "weighted_div_grad_edges": lambda m: m.weighted_div_grad_edges(wx, wy, u, h),
        "coupling_div": lambda m: m.coupling_div(phi, rho, nmag, h),
        "coupling_lin": lambda m: m.coupling_lin(phi, rho, nmag, u, v, h),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def full_step(n, steps, pure):
    env = dict(os.environ, SURFPHASE_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", STEP_SNIPPET, str(n), str(steps)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--step-size", type=int, default=64)
    ap.add_argument("--steps", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'N':>6}{'numpy [us]':>14}{'cython [us]':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, call in kernel_cases(n, rng).items():
            t_py = best_time(lambda: call(_pykernels), args.repeat)
            if _ckernels is None:
                print(f"{name:<26}{n:>6}{t_py * 1e6:>14.1f}{'-':>14}{'-':>10}")
                continue
            t_c = best_time(lambda: call(_ckernels), args.repeat)
            print(f"{name:<26}{n:>6}{t_py * 1e6:>14.1f}{t_c * 1e6:>14.1f}{t_py / t_c:>10.2f}")
    print(f"\nfull implicit step, N={args.step_size}, mean of {args.steps} steps")
    for pure in (True, False):
        r = full_step(args.step_size, args.steps, pure)
        print(f"  {r['backend']:<8} {r['per_step'] * 1e3:10.1f} ms/step")


if __name__ == "__main__":
    main()
