"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from wncs import kernels
from wncs._ext import fallback

try:
    from wncs._ext import kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    v, S = 2, 200_000
    rows = rng.integers(1, 20, (S, 2 * v + 3)).astype(np.int64)
    beta = rng.random(S) < 0.5
    gamma = rng.random(S) < 0.5
    yield "advance_rows 200k x 7", lambda impl: kernels.advance_rows(rows, beta, gamma, v, 20, impl=impl)

    # typical value-iteration sweep: 2^16 states x 34 actions, about 4 successors each
    n_rows, n_states = 65536 * 34, 65536
    counts = rng.integers(1, 8, n_rows)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = rng.integers(0, n_states, indptr[-1]).astype(np.int64)
    probs = rng.random(indptr[-1])
    values = rng.normal(size=n_states)
    yield "expect_rows 2.2M rows", lambda impl: kernels.expect_rows(indptr, indices, probs, values, impl=impl)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':<24}{'python [ms]':>14}{'compiled [ms]':>16}{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)):
        tp = min(timeit.repeat(lambda: fn(fallback), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:<24}{tp:>14.2f}{'n/a':>16}{'':>10}")
            continue
        tc = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{tp:>14.2f}{tc:>16.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
