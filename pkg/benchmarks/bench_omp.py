"""Batch OMP throughput: compiled kernel vs. pure-Python fallback.

    python benchmarks/bench_omp.py [--columns 2000] [--budget 8] [--threads 1]
"""

import argparse
import time

import numpy as np

from cascadesc import omp
from cascadesc.ksvd import dct_dictionary


def bench(backend, D, Y, stop, mask=None, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        code = omp.encode_batch(D, Y, stop, mask=mask, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, code


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--columns", type=int, default=2000)
    ap.add_argument("--budget", type=int, default=8)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    omp.set_num_threads(args.threads)
    rng = np.random.default_rng(args.seed)
    D = dct_dictionary(8, 256)
    Y = rng.standard_normal((64, args.columns)) * 20
    mask = (rng.random(Y.shape) > 0.5).astype(float)
    stop = omp.Budget(args.budget)

    backends = [b for b in ("cython", "python") if b in omp._KERNELS]
    print(f"columns={args.columns} budget={args.budget} threads={args.threads}")
    print(f"{'backend':8} {'mode':8} {'seconds':>9} {'us/col':>9} {'speedup':>8}")
    for label, m in (("plain", None), ("masked", mask)):
        times, codes = {}, {}
        for b in backends:
            times[b], codes[b] = bench(b, D, Y, stop, m, repeat=3 if b == "cython" else 1)
        for b in backends:
            speed = times["python"] / times[b]
            print(f"{b:8} {label:8} {times[b]:9.3f} {1e6 * times[b] / args.columns:9.1f} "
                  f"{speed:7.1f}x")
        if len(backends) == 2:
            same = np.array_equal(codes["cython"].indices, codes["python"].indices)
            err = np.max(np.abs(codes["cython"].coefs - codes["python"].coefs))
            print(f"  supports identical: {same}, max coefficient difference: {err:.2e}")


if __name__ == "__main__":
    main()
