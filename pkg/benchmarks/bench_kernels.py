"""Time each hot kernel under the compiled and the pure-Python backend.

    python3 benchmarks/bench_kernels.py [--repeat N] [--scale F]

Prints one row per kernel with the best-of-N wall time for each backend and
the speedup. Both backends are fed identical inputs and their outputs are
compared before timing.
"""
import argparse
import sys
import timeit

import numpy as np

from powerstate import kernels
from powerstate.classify import build_tree


def cases(scale, rng):
    n = int(20_000 * scale)
    X = rng.normal(size=(n, 15))
    C = rng.normal(size=(8, 15))
    yield "nearest_centroid", (X, C), lambda a, b: np.array_equal(a[0], b[0])

    m = int(2_000 * scale)
    Xs = rng.normal(size=(m, 15))
    lab = rng.integers(0, 6, m)
    yield "silhouette_samples", (Xs, lab, 6), lambda a, b: np.allclose(a, b, atol=1e-12)

    k = int(5_000 * scale)
    Xt = np.ascontiguousarray(np.round(rng.normal(size=(k, 15)), 2))
    y = rng.integers(0, 6, k).astype(np.int64)
    idx = np.arange(k, dtype=np.int64)
    feats = np.arange(15, dtype=np.int64)
    yield "best_split", (Xt, y, idx, feats, 6, 15, 1), lambda a, b: a == b

    t = build_tree(Xt, y, 6, np.random.default_rng(0), max_features=4)
    args = (X, t.feature, t.threshold, t.left, t.right)
    yield "tree_apply", args, lambda a, b: np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    opts = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`",
              file=sys.stderr)
    print(f"{'kernel':<20}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, args, same in cases(opts.scale, np.random.default_rng(0)):
        fn = getattr(kernels, name)
        times, outs = {}, {}
        for b, impl in backends.items():
            outs[b] = fn(*args, impl=impl)
            times[b] = min(timeit.repeat(lambda: fn(*args, impl=impl), number=1,
                                         repeat=opts.repeat))
        if len(outs) == 2 and not same(outs["python"], outs["cython"]):
            raise SystemExit(f"{name}: backends disagree")
        py, cy = times.get("python"), times.get("cython")
        speed = f"{py / cy:>9.1f}x" if cy else f"{'-':>10}"
        print(f"{name:<20}{py:>12.4f}{cy if cy else float('nan'):>12.4f}{speed}")


if __name__ == "__main__":
    main()
