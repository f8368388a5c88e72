"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python3 benchmarks/bench_kernels.py --e2e      # also a short training run per backend

The end-to-end run launches a subprocess per backend so that FEDPERL_NUMBA
decides the import, exactly as it does for users.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fedperl import kernels_numpy

try:
    from fedperl import kernels_numba
except ImportError:  # numba missing
    kernels_numba = None

ARCH = np.array([16, 32, 8], dtype=np.int64)
E2E = """
import time
t = time.perf_counter()
from fedperl.config import bench_10c
from fedperl.experiment import run_experiment
run_experiment(bench_10c("fedperl_pa", rounds=1, warmup_rounds=0))
t_import = time.perf_counter() - t
t = time.perf_counter()
run_experiment(bench_10c("fedperl_pa"))
print(f"import+first round {t_import:.2f} s, bench-10c fedperl_pa {time.perf_counter() - t:.2f} s")
"""


def bench(fn, repeat):
    fn()  # warm-up / JIT
    return min(timeit.repeat(fn, number=repeat, repeat=5)) / repeat * 1e6


def kernel_table(sizes, repeat):
    rng = np.random.default_rng(0)
    n_par = int(sum(i * o + o for i, o in zip(ARCH[:-1], ARCH[1:])))
    flat = rng.normal(scale=0.3, size=n_par)
    backends = {"numpy": kernels_numpy}
    if kernels_numba is not None:
        backends["numba"] = kernels_numba
    print(f"arch {ARCH.tolist()}, times in microseconds (best of 5)")
    print(f"{'op':<10} {'n':>5} " + " ".join(f"{b:>9}" for b in backends))
    for n in sizes:
        X = rng.normal(size=(n, ARCH[0]))
        T = rng.dirichlet(np.ones(ARCH[-1]), size=n)
        w = np.ones(n)
        for op in ("probs", "loss_grad"):
            row = []
            for k in backends.values():
                if op == "probs":
                    row.append(bench(lambda: k.probs(flat, ARCH, X), repeat))
                else:
                    row.append(bench(lambda: k.loss_grad(flat, ARCH, X, T, w, 0), repeat))
            print(f"{op:<10} {n:>5} " + " ".join(f"{t:>9.1f}" for t in row))


def end_to_end():
    for flag in ("1", "0"):
        env = dict(os.environ, FEDPERL_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        print(f"FEDPERL_NUMBA={flag}: {out.stdout.strip()}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 48, 512])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--e2e", action="store_true", help="time a short experiment under each backend")
    args = ap.parse_args()
    kernel_table(args.sizes, args.repeat)
    if args.e2e:
        end_to_end()


if __name__ == "__main__":
    main()
