"""Benchmark the compiled SGD kernels against the numpy fallback.

Both implementations are imported side by side, so one process measures
the identical workload on each: a dense Gaussian chain at d=100 and a
one-hot chain at d=10000, plain and tracked.  Reports steps per second
(best of `--repeats` timed runs) and the speedup.

Usage: python3 benchmarks/bench_kernels.py [--steps 200000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from reuse_lab._kernels import _sgd_py

try:
    from reuse_lab._kernels import _sgd_cy
except ImportError:
    _sgd_cy = None

LIMIT_SQ = 1e18


def dense_case(steps, d=100, eta=0.01):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((steps, d))
    xi = 0.1 * rng.standard_normal(steps)
    order = np.arange(steps, dtype=np.int64)
    theta = rng.standard_normal(d)

    def run(impl, tracked):
        th = theta.copy()
        if tracked:
            return impl.dense_chain_tracked(x, xi, order, eta, th, th.copy(), np.zeros(d), LIMIT_SQ)
        return impl.dense_chain(x, xi, order, eta, th, LIMIT_SQ)

    return run


def onehot_case(steps, d=10_000, eta=0.5):
    rng = np.random.default_rng(1)
    ranks = np.arange(1, d + 1, dtype=np.float64)
    p = ranks**-3.5
    p /= p.sum()
    idx = rng.choice(d, size=steps, p=p).astype(np.int64)
    mu = np.sqrt(ranks**-1.0)
    xi = np.zeros(steps)
    order = np.arange(steps, dtype=np.int64)
    theta = rng.standard_normal(d)

    def run(impl, tracked):
        th = theta.copy()
        if tracked:
            return impl.onehot_chain_tracked(idx, mu, xi, order, eta, th, th.copy(), np.zeros(d), LIMIT_SQ)
        return impl.onehot_chain(idx, mu, xi, order, eta, th, LIMIT_SQ)

    return run


def best_rate(run, impl, tracked, steps, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        status = run(impl, tracked)
        best = min(best, time.perf_counter() - t0)
        assert status == -1, "benchmark run diverged"
    return steps / best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000, help="chain length per timed run")
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per cell, best kept")
    args = parser.parse_args()

    backends = [("python", _sgd_py)]
    if _sgd_cy is not None:
        backends.insert(0, ("cython", _sgd_cy))
    else:
        print("compiled extension not available; benchmarking the fallback only")

    cases = [
        ("dense d=100", dense_case, False),
        ("dense d=100 tracked", dense_case, True),
        ("one-hot d=1e4", onehot_case, False),
        ("one-hot d=1e4 tracked", onehot_case, True),
    ]

    print(f"{args.steps} steps per run, best of {args.repeats}")
    header = f"{'case':<24}" + "".join(f"{name + ' steps/s':>18}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, maker, tracked in cases:
        run = maker(args.steps)
        rates = [best_rate(run, impl, tracked, args.steps, args.repeats) for _, impl in backends]
        line = f"{label:<24}" + "".join(f"{rate:>18.3g}" for rate in rates)
        if len(rates) == 2:
            line += f"{rates[0] / rates[1]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
