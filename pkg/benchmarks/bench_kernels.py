"""Benchmark the JIT kernels against their pure-numpy fallbacks.

Run:  python3 benchmarks/bench_kernels.py [--words N] [--vocab V]

Times the three hot kernels on a synthetic workload shaped like a real
distillation + retrieval run (many ragged occurrence records; full-vocab
rank counting and masked argmax). The first numba call compiles; the
benchmark warms up both paths before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lexprobe import kernels


def make_pool_workload(rng, n_words, layers=13, dim=64, max_occ=20):
    words = []
    for _ in range(n_words):
        n_rec = int(rng.integers(1, max_occ + 1))
        flag_parts, vec_parts, bounds = [], [], [0]
        for _ in range(n_rec):
            k = int(rng.integers(1, 5))
            flags = np.array([1] + [0] * k + [2], np.uint8)
            vecs = rng.standard_normal((layers, len(flags), dim)).astype(np.float32)
            flag_parts.append(flags)
            vec_parts.append(vecs.ravel())
            bounds.append(bounds[-1] + len(flags))
        words.append(
            (
                np.concatenate(vec_parts),
                np.concatenate(flag_parts),
                np.array(bounds, np.int64),
            )
        )
    return words, layers, dim


def bench(label, fn, repeats=3):
    best = min(timeit(fn) for _ in range(repeats))
    print(f"  {label:<18} {best * 1000:10.1f} ms")
    return best


def timeit(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--words", type=int, default=3000)
    parser.add_argument("--vocab", type=int, default=50_000)
    parser.add_argument("--queries", type=int, default=300)
    args = parser.parse_args()

    if kernels.pool_occurrences_numba is None:
        print("numba backend unavailable (LEXPROBE_NUMBA=0 or numba missing); "
              "nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")

    print(f"\npool_occurrences: {args.words} words, 13 layers, dim 64")
    workload, layers, dim = make_pool_workload(rng, args.words)
    kernels.warmup()

    def pool_with(fn):
        def run():
            for vectors, flags, bounds in workload:
                fn(vectors, flags, bounds, layers, dim, kernels.POLICY_NOSPEC)
        return run

    t_nb = bench("numba", pool_with(kernels.pool_occurrences_numba))
    t_np = bench("numpy", pool_with(kernels.pool_occurrences_numpy))
    print(f"  speedup numba/numpy: {t_np / t_nb:.1f}x")

    print(f"\nbest_gold_rank: {args.queries} queries over {args.vocab} candidates")
    scores = rng.standard_normal((args.queries, args.vocab))
    golds = [
        np.sort(rng.choice(args.vocab, 3, replace=False)).astype(np.int64)
        for _ in range(args.queries)
    ]

    def rank_with(fn):
        def run():
            for row, gold in zip(scores, golds):
                fn(row, gold)
        return run

    t_nb = bench("numba", rank_with(kernels.best_gold_rank_numba))
    t_np = bench("numpy", rank_with(kernels.best_gold_rank_numpy))
    print(f"  speedup numba/numpy: {t_np / t_nb:.1f}x")

    print(f"\nargmax_excluding: {args.queries} queries over {args.vocab} candidates")
    excluded = [
        rng.choice(args.vocab, 3, replace=False).astype(np.int64)
        for _ in range(args.queries)
    ]

    def argmax_with(fn):
        def run():
            for row, excl in zip(scores, excluded):
                fn(row, excl)
        return run

    t_nb = bench("numba", argmax_with(kernels.argmax_excluding_numba))
    t_np = bench("numpy", argmax_with(kernels.argmax_excluding_numpy))
    print(f"  speedup numba/numpy: {t_np / t_nb:.1f}x")


if __name__ == "__main__":
    main()
