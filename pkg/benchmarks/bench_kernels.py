"""Time the compiled kernels against the numpy fallback on one complete-graph round.

    python3 benchmarks/bench_kernels.py [--M 10 50 100] [--d 10] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from resist.kernels import _fallback

try:
    from resist.kernels import _ckernels
except ImportError:
    _ckernels = None


def make_round(M, d, b, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(M, d))
    indptr = np.arange(0, M * (M - 1) + 1, M - 1, dtype=np.int64)
    indices = np.array([i for j in range(M) for i in range(M) if i != j], dtype=np.int64)
    received = np.ascontiguousarray(W[indices])
    comp = np.zeros(len(indices), dtype=np.uint8)
    for j in range(M):
        hit = rng.choice(M - 1, size=b, replace=False) + indptr[j]
        received[hit] = rng.uniform(-100, 100, size=(b, d))
        comp[hit] = 1
    return W, indptr, indices, received, comp


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, nargs="+", default=[10, 50, 100])
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--b", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    impls = {"python": _fallback}
    if _ckernels is not None:
        impls["cython"] = _ckernels
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<14}{'M':>5}" + "".join(f"{k:>12}" for k in impls) + ("     speedup" if len(impls) == 2 else ""))
    for M in args.M:
        W, indptr, indices, received, comp = make_round(M, args.d, args.b)
        for name in ("cwtm_round", "mixing_round"):
            extra = (comp,) if name == "mixing_round" else ()
            times = {}
            for k, mod in impls.items():
                f = getattr(mod, name)
                times[k] = bench(lambda: f(W, indptr, indices, received, *extra, args.b), args.repeat)
            line = f"{name:<14}{M:>5}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times.values())
            if len(times) == 2:
                line += f"{times['python'] / times['cython']:>11.1f}x"
            print(line)


if __name__ == "__main__":
    main()
