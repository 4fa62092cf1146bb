"""Time the numba kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Each case is
run once to warm up (JIT compilation, caches) and then timed; the best of
``N`` repeats is reported.
"""

import argparse
import math
import time

from spdeblowup import _backend
from spdeblowup.noise import TimeGrid, path_rng, sample_path
from spdeblowup.params import EigenMultiple, SystemParams, derive_constants
from spdeblowup.pde import SpatialMesh, integrate_subsolution_ode, solve_random_pde
from spdeblowup.prob import yor_functional_samples
from spdeblowup.stopping import ExpFunctionalSpec, cumulative_exp_functional


def _params():
    k = 0.5
    return SystemParams(
        beta1=1.0,
        beta2=1.0,
        gamma1=1.0 + k**2 / 2,
        gamma2=1.0 + k**2 / 2,
        k=((k, k), (k, k)),
        hurst=0.7,
        initial=EigenMultiple(2.0, 2.0),
    )


def cases():
    p = _params()
    c = derive_constants(p)
    long_path = sample_path(TimeGrid(20.0, 200_000), 0.7, "independent", path_rng(1, 0))
    pde_path = sample_path(TimeGrid(8.0, 4096), 0.7, "independent", path_rng(1, 1))
    mesh = SpatialMesh(math.pi, 256)
    spec = ExpFunctionalSpec(c.rho1, c.rho2, -c.a)
    return {
        "cumulative_exp (2e5 steps)": lambda: cumulative_exp_functional(long_path, spec),
        "yor_functional (2000 paths)": lambda: yor_functional_samples(1.0, 2000, h=0.01, seed=2),
        "pde_solver (4096 steps, 256 cells)": lambda: solve_random_pde(p, c, pde_path, mesh),
        "subsolution_ode": lambda: integrate_subsolution_ode(pde_path, c, (c.h1_0, c.h2_0)),
    }


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = ["numba", "numpy"] if _backend.HAVE_NUMBA else ["numpy"]
    results = {}
    prev = _backend.active_backend()
    try:
        for name in names:
            _backend.set_backend(name)
            for label, fn in cases().items():
                results.setdefault(label, {})[name] = best_time(fn, args.repeat)
    finally:
        _backend.set_backend(prev)
    width = max(map(len, results))
    print(f"{'case':<{width}}  " + "  ".join(f"{n:>10}" for n in names) + ("  speedup" if len(names) == 2 else ""))
    for label, row in results.items():
        line = f"{label:<{width}}  " + "  ".join(f"{row[n]:9.4f}s" for n in names)
        if len(names) == 2:
            line += f"  {row['numpy'] / row['numba']:6.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
