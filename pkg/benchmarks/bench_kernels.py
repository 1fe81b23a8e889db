"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time of each backend and
the speed-up. Inputs are sized like a desk-scale self-training iteration.
"""

import argparse
import timeit

import numpy as np

from dbst import kernels


def _probs(rng, T, n, K):
    z = rng.normal(size=(T, n, K))
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cases(rng):
    probs = _probs(rng, 30, 5000, 10)
    log_s = rng.normal(size=(30, 5000))
    X = rng.normal(size=(20000, 32))
    C = rng.normal(size=(12, 32))
    labels = rng.integers(0, 12, 20000)
    t, p = rng.integers(0, 10, 100000), rng.integers(0, 10, 100000)
    cur = np.full(len(X), np.inf)
    return {
        "kwon_terms": lambda m: m.kwon_terms(probs),
        "kendall_gal_terms": lambda m: m.kendall_gal_terms(probs, log_s),
        "assign_nearest": lambda m: m.assign_nearest(X, C),
        "min_sqdist": lambda m: m.min_sqdist(X, X[0], cur),
        "centroid_sums": lambda m: m.centroid_sums(X, labels, 12),
        "confusion_counts": lambda m: m.confusion_counts(t, p, 10),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = kernels.backends()
    if "compiled" not in impls:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name in impls) + ("     speed-up" if len(impls) > 1 else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for b, m in impls.items()}
        row = f"{name:<20}" + "".join(f"{times[b] * 1e3:>12.2f}ms" for b in impls)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>12.1f}x"
        print(row)


if __name__ == "__main__":
    main()
