"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 256 1000] [--repeat 3]

Both backends must agree on the medoids they find; the script checks that
before reporting times.
"""

import argparse
import time

import numpy as np

from varadapt import kernels
from varadapt.metrics import kmedoids


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1000])
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available()
    original = kernels.BACKEND
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'task':24s} {'S':>6s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    rng = np.random.default_rng(0)
    for S in args.sizes:
        X = rng.normal(size=(S, args.dim))
        tasks = {
            "pairwise_distances": lambda: kernels.pairwise_distances(X),
            f"kmedoids k={args.k}": lambda: kmedoids(X, args.k).medoids,
        }
        for name, fn in tasks.items():
            times, outs = {}, {}
            for b in backends:
                kernels.use_backend(b)
                times[b], outs[b] = best_of(fn, args.repeat)
            ref = outs[backends[0]]
            for b in backends[1:]:
                if not np.allclose(outs[b], ref, rtol=0, atol=1e-9):
                    raise SystemExit(f"{name}: backends disagree at S={S}")
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:24s} {S:6d} " + " ".join(f"{times[b]:10.4f}" for b in backends)
                  + f"   {speed:6.1f}x")
    kernels.use_backend(original)


if __name__ == "__main__":
    main()
