"""Time the compiled kernels against the numpy reference versions.

Run with ``python3 benchmarks/bench_kernels.py``. Sizes mirror one
optimisation step: N=150 particles, G=101 grid nodes, 101 candidate
locations and M=150 simulations.
"""
import argparse
import timeit

import numpy as np

from slgpopt import _kernels_py

try:
    from slgpopt import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng, n=150, g=101, n_x=101, m=150):
    t = np.linspace(0.0, 1.0, g)
    w = np.full(g, t[1])
    w[[0, -1]] *= 0.5
    fields = rng.normal(scale=3.0, size=(n * n_x, g))
    dens = np.exp(fields[: n * n_x] - fields.max(axis=1, keepdims=True))
    values = rng.random((n_x, n))
    order = np.argsort(values, axis=1, kind="stable")
    sorted_values = np.take_along_axis(values, order, axis=1)
    weights = rng.dirichlet(np.ones(n), size=m)
    return {
        "log_trapz_exp": lambda mod: mod.log_trapz_exp(fields, w),
        "grid_quantiles": lambda mod: mod.grid_quantiles(dens, t, 0.5),
        "weighted_quantile_min": lambda mod: mod.weighted_quantile_min(sorted_values, order, weights, 0.9),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases(rng).items():
        py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<24}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        np.testing.assert_allclose(call(_ckernels), call(_kernels_py), rtol=1e-12, atol=1e-12)
        cy = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
