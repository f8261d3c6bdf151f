#!/usr/bin/env python3
"""Benchmark the C kernels against the pure-Python fallback.

Covers the two hot paths: embedding text parsing (dominates real runs,
where a multi-hundred-MB vector file is loaded before any scoring) and
exact dot products (the similarity primitive). Run after `python setup.py
build_ext --inplace` or an editable install:

    python benchmarks/bench_kernels.py [--words N] [--dim D] [--repeats K]
"""

import argparse
import math
import os
import tempfile
import time

import numpy as np

from clozebias.kernels import available_backends


def synth_embeddings(path, words, dim, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(words):
            vals = rng.standard_normal(dim)
            fh.write(f"w{i} " + " ".join(f"{v:.6f}" for v in vals) + "\n")
    return os.path.getsize(path)


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--words", type=int, default=50_000)
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--dot-calls", type=int, default=200_000)
    args = parser.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("note: C extension not built; benchmarking the pure backend only")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "synthetic.txt")
        size = synth_embeddings(path, args.words, args.dim)
        data = open(path, "rb").read()
        print(f"\nparse_vectors: {args.words} words x {args.dim} dims "
              f"({size / 1e6:.1f} MB, best of {args.repeats})")
        parse_results = {}
        for name, mod in sorted(backends.items()):
            seconds, (words, matrix) = time_call(
                lambda m=mod: m.parse_vectors(data, args.dim, 1), args.repeats
            )
            parse_results[name] = (seconds, matrix)
            rate = size / seconds / 1e6
            print(f"  {name:>8}: {seconds * 1e3:9.1f} ms   {rate:8.1f} MB/s")
        if len(parse_results) == 2:
            py_s, py_m = parse_results["python"]
            c_s, c_m = parse_results["c"]
            same = py_m.tobytes() == c_m.tobytes()
            print(f"  speedup: {py_s / c_s:.1f}x   bit-identical output: {same}")

    rng = np.random.default_rng(1)
    u = np.ascontiguousarray(rng.standard_normal(args.dim))
    v = np.ascontiguousarray(rng.standard_normal(args.dim))
    print(f"\ndot: {args.dot_calls} calls on {args.dim}-dim vectors "
          f"(best of {args.repeats})")
    dot_results = {}
    for name, mod in sorted(backends.items()):
        def loop(m=mod):
            total = 0.0
            for _ in range(args.dot_calls):
                total += m.dot(u, v)
            return total
        seconds, total = time_call(loop, args.repeats)
        dot_results[name] = (seconds, total)
        print(f"  {name:>8}: {seconds * 1e3:9.1f} ms   "
              f"{args.dot_calls / seconds / 1e3:8.0f} kcalls/s")
    if len(dot_results) == 2:
        py_s, py_t = dot_results["python"]
        c_s, c_t = dot_results["c"]
        print(f"  speedup: {py_s / c_s:.1f}x   identical sums: {py_t == c_t}")


if __name__ == "__main__":
    main()
