"""Time the numba kernels against their numpy twins.

Usage::

    python benchmarks/bench_kernels.py [--repeats 5] [--pairs 2000] [--length 256]

Both backends are called directly, so the SYNTHTS_BENCH_NO_NUMBA flag does
not matter here. The first numba call includes compilation and is reported
separately.
"""

import argparse
import time

import numpy as np

from synthts_bench.kernels import (dtw_pairs_numba, dtw_pairs_numpy, perplexity_betas_numba,
                                   perplexity_betas_numpy)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_dtw(pairs, length, repeats, radius):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(64, length))
    Y = rng.normal(size=(64, length))
    ii, jj = rng.integers(0, 64, pairs), rng.integers(0, 64, pairs)
    r = -1 if radius is None else radius
    t0 = time.perf_counter()
    dtw_pairs_numba(X[:, :4], Y[:, :4], ii[:1], jj[:1], r)
    compile_s = time.perf_counter() - t0
    t_nb, a = best_of(lambda: dtw_pairs_numba(X, Y, ii, jj, r), repeats)
    t_np, b = best_of(lambda: dtw_pairs_numpy(X, Y, ii, jj, r), repeats)
    return compile_s, t_nb, t_np, float(np.max(np.abs(a - b)))


def bench_betas(n, repeats):
    rng = np.random.default_rng(1)
    P = rng.normal(size=(n, 16))
    full = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    D = full[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    D -= D.min(axis=1, keepdims=True)
    log_perp = np.log(30.0)
    t0 = time.perf_counter()
    perplexity_betas_numba(D[:8], log_perp)
    compile_s = time.perf_counter() - t0
    t_nb, a = best_of(lambda: perplexity_betas_numba(D, log_perp), repeats)
    t_np, b = best_of(lambda: perplexity_betas_numpy(D, log_perp), repeats)
    return compile_s, t_nb, t_np, float(np.max(np.abs(a - b) / np.abs(b)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--length", type=int, default=256)
    ap.add_argument("--points", type=int, default=1000, help="rows of the t-SNE distance matrix")
    args = ap.parse_args()

    print(f"{'kernel':<28}{'compile s':>10}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max diff':>11}")
    rows = [(f"dtw {args.pairs}x{args.length}", bench_dtw(args.pairs, args.length, args.repeats, None)),
            (f"dtw band=10 {args.pairs}x{args.length}", bench_dtw(args.pairs, args.length, args.repeats, 10)),
            (f"betas {args.points}x{args.points}", bench_betas(args.points, args.repeats))]
    for name, (comp, nb, npy, diff) in rows:
        print(f"{name:<28}{comp:>10.3f}{nb:>10.4f}{npy:>10.4f}{npy / nb:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
