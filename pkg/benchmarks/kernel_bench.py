"""Compare the compiled and pure-numpy sketch kernel backends.

Both backends are bit-identical (enforced by tests); this measures the
speed difference on the hot paths: hashing, insertion, and min-lookup.

Run:  python3 benchmarks/kernel_bench.py [--depth 20] [--width 2000]
"""

import argparse
import timeit

import numpy as np

from sketchql import _pykernels


def load_backends():
    backends = {"python": _pykernels}
    try:
        from sketchql import _cmcore
        backends["compiled"] = _cmcore
    except ImportError:
        print("compiled backend not built; benchmarking the python backend only")
    return backends


def bench(label, fn, number):
    per_call = min(timeit.repeat(fn, number=number, repeat=5)) / number
    print(f"  {label:<28} {per_call * 1e6:10.1f} us/call")
    return per_call


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=20)
    ap.add_argument("--width", type=int, default=2000)
    ap.add_argument("--n-ids", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    ids = rng.integers(0, 1_000_000, size=args.n_ids).astype(np.int64)
    weights = rng.integers(1, 10, size=args.n_ids).astype(np.float32)
    results = {}
    for name, impl in load_backends().items():
        print(f"{name} backend  (depth={args.depth}, width={args.width}, "
              f"n={args.n_ids}):")
        table = np.zeros((args.depth, args.width), dtype=np.float32)
        impl.insert(table, ids, weights, args.seed)
        timings = {
            "hash_columns": bench(
                "hash_columns", lambda: impl.hash_columns(ids, args.seed, args.depth,
                                                          args.width), 200),
            "insert": bench(
                "insert (fresh table)",
                lambda: impl.insert(np.zeros((args.depth, args.width), np.float32),
                                    ids, weights, args.seed), 100),
            "lookup_min": bench(
                "lookup_min", lambda: impl.lookup_min(table, ids, args.seed), 200),
        }
        results[name] = timings
    if len(results) == 2:
        print("speedup (python / compiled):")
        for op in results["python"]:
            ratio = results["python"][op] / results["compiled"][op]
            print(f"  {op:<28} {ratio:10.2f}x")


if __name__ == "__main__":
    main()
