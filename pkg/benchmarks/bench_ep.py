#!/usr/bin/env python3
"""Compare the numba and numpy backends on the two hot kernels.

The EP site sweep is inherently sequential (every update feeds the next
through the posterior), so the JIT path pays off most there; Gram
assembly is also measured since it dominates prediction-time cost.

Usage: python benchmarks/bench_ep.py [--sizes 100,200,400,800] [--repeats 3]
"""

import argparse
import math
import time



from passgp import backend
from passgp.ep import EPConfig, ep_fit
from passgp.kernels import KernelFamily, KernelSpec, kernel_matrix
from passgp.synthetic import gaussian_blobs

SPEC = KernelSpec(KernelFamily.SE_JITTER,
                  (math.log(1.0), math.log(2.0), math.log(0.05)))


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_size(n, repeats):
    ds = gaussian_blobs(n, seed=0, separation=2.5)
    rows = []
    results = {}
    for name in ("numpy", "numba"):
        backend.set_backend(name)
        kernel_matrix(SPEC, ds.features[:4], symmetric=True)  # warm the JIT
        t_gram, K = time_call(
            lambda: kernel_matrix(SPEC, ds.features, symmetric=True), repeats)
        ep_fit(K[:4, :4], ds.labels[:4])
        t_fit, state = time_call(
            lambda: ep_fit(K, ds.labels, EPConfig(seed=0)), repeats)
        results[name] = state
        rows.append((name, t_gram, t_fit, state.n_sweeps))
    backend.set_backend(None)

    drift = abs(results["numpy"].log_z_ep - results["numba"].log_z_ep)
    for name, t_gram, t_fit, sweeps in rows:
        print(f"{n:6d}  {name:>6}  {t_gram * 1e3:10.2f}  {t_fit * 1e3:10.1f}  "
              f"{sweeps:6d}")
    speedup = rows[0][2] / rows[1][2]
    print(f"{'':6}  {'':>6}  {'':10}  speedup {speedup:5.2f}x  "
          f"|dlogZ| {drift:.1e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="100,200,400,800")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    print(f"{'n':>6}  {'path':>6}  {'gram(ms)':>10}  {'ep_fit(ms)':>10}  "
          f"{'sweeps':>6}")
    for n in (int(s) for s in args.sizes.split(",")):
        bench_size(n, args.repeats)


if __name__ == "__main__":
    main()
