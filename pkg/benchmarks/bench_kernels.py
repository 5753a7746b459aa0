"""Compiled versus pure-Python quantile kernels.

Run with ``python3 benchmarks/bench_kernels.py [--n N] [--repeat R]``.  Each
workload is timed on every available backend (best of ``R`` runs); the
largest absolute difference between backends is reported alongside.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from zoibmed import _backend, zoib
from zoibmed.checks import synthetic_problem
from zoibmed.gformula import MonteCarloConfig, estimate_average_effects


def workloads(n, rng):
    u = rng.random(n)
    a = np.exp(rng.uniform(-2, 4, n))
    b = np.exp(rng.uniform(-2, 4, n))
    p = zoib.ZoibParams(rng.uniform(0, 0.3, n), rng.uniform(0, 0.3, n), rng.uniform(0.05, 0.95, n),
                        np.exp(rng.uniform(-1, 4, n)))
    ds, models = synthetic_problem(seed=1, N=400)
    K = max(1, n // (2 * ds.n))
    return {
        "beta_quantile (moderate shapes)": lambda be: zoib.beta_quantile(u, 1 + a % 5, 1 + b % 5, backend=be),
        "beta_quantile (wide shapes)": lambda be: zoib.beta_quantile(u, a, b, backend=be),
        "zoib_quantile": lambda be: zoib.zoib_quantile(u, p, backend=be),
        f"g-formula (N=400, K={K})": lambda be: estimate_average_effects(
            models, ds, MonteCarloConfig(K=K, backend=be), np.random.default_rng(0)).values(),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="values per workload")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = sorted(_backend.BACKENDS)
    print(f"backends: {', '.join(names)} (active: {_backend.NAME}); n = {args.n}")
    header = f"{'workload':34s}" + "".join(f"{n + ' [s]':>14s}" for n in names) + f"{'speedup':>10s}{'max diff':>12s}"
    print(header)
    for label, fn in workloads(args.n, np.random.default_rng(0)).items():
        times, outs = {}, {}
        for name in names:
            outs[name] = np.asarray(fn(name))
            times[name] = min(timeit.repeat(lambda: fn(name), number=1, repeat=args.repeat))
        diff = max(float(np.max(np.abs(outs[n] - outs[names[0]]))) for n in names)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{label:34s}" + "".join(f"{times[n]:14.4f}" for n in names) + f"{speed:10.1f}x{diff:12.1e}")


if __name__ == "__main__":
    main()
