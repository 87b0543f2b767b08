"""Compare the compiled simplex kernel with the numpy fallback.

Solves the same random bounded LPs with both kernels, checks that the
solutions agree bit for bit and prints median wall times.

    python3 benchmarks/bench_kernel.py --sizes 20 60 120 --repeat 5
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from asfw.lp import core
from asfw.lp import _kernel_py


def random_lp(rng, n, m):
    G = rng.normal(size=(m, n))
    x0 = rng.uniform(-1.0, 1.0, n)
    h = G @ x0 + rng.uniform(0.0, 1.0, m)
    c = rng.normal(size=n)
    return G, h, c, np.full(n, -2.0), np.full(n, 2.0), np.full(m, np.inf)


def time_kernel(kernel, problems, repeat):
    saved = core._iterate
    core._iterate = kernel
    try:
        times, results = [], None
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = [core.solve_state(*p)[0] for p in problems]
            times.append(time.perf_counter() - t0)
            results = out
        return statistics.median(times), results
    finally:
        core._iterate = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 60, 120])
    ap.add_argument("--count", type=int, default=10, help="LPs per size")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if core.KERNEL != "cython":
        raise SystemExit("compiled kernel not available; reinstall with Cython to benchmark it")
    from asfw.lp import _kernel

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'m':>6} {'pivots':>8} {'numpy [s]':>10} {'cython [s]':>11} {'speedup':>8}")
    for n in args.sizes:
        m = 2 * n
        problems = [random_lp(rng, n, m) for _ in range(args.count)]
        t_py, res_py = time_kernel(_kernel_py.iterate, problems, args.repeat)
        t_cy, res_cy = time_kernel(_kernel.iterate, problems, args.repeat)
        for a, b in zip(res_py, res_cy):
            if not np.array_equal(a.x, b.x) or a.pivots != b.pivots:
                raise SystemExit(f"kernels disagree at n={n}")
        pivots = sum(r.pivots for r in res_cy)
        print(f"{n:>6} {m:>6} {pivots:>8} {t_py:>10.4f} {t_cy:>11.4f} {t_py / t_cy:>8.1f}")


if __name__ == "__main__":
    main()
