"""Time the compiled kernels against the numpy fallback on identical inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same data under both backends; the outputs are
checked for equality before timings are reported.
"""

import argparse
import time

import numpy as np

from tradeshock.kernels import implementations
from tradeshock.models.trees import Binner


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cd_case(rng, n=2000, p=300):
    X = rng.standard_normal((n, p))
    y = X[:, :5] @ np.array([1.0, -0.5, 0.25, 0.8, -1.2]) + rng.standard_normal(n)
    Xa = np.column_stack([np.ones(n), X])
    G = np.asfortranarray(Xa.T @ Xa / n)
    c = Xa.T @ y / n
    pf = np.ones(p + 1)
    pf[0] = 0.0

    def run(mod):
        beta = np.zeros(p + 1)
        mod.cd_gram(G, c, beta, 0.002, pf, 10000, 1e-14)
        return beta

    return run


def tree_case(rng, n=20000, p=40):
    X = rng.standard_normal((n, p))
    t = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.float64)
    binner = Binner.fit(X)
    Xb = binner.transform(X)
    w = np.ones(n)
    rows = np.arange(n, dtype=np.int64)

    def run(mod):
        return mod.build_tree(Xb, binner.n_bins, t, w, rows, 10, 5.0, 0, 1)

    return run


def apply_case(rng, n=200000, p=40):
    X = rng.standard_normal((n, p))
    tree = tree_case(rng, 5000, p)(implementations()["python"])
    feature, split_bin, left, right = tree[:4]
    threshold = np.where(feature >= 0, (split_bin - 128) / 64.0, 0.0).astype(np.float64)

    def run(mod):
        return mod.tree_apply(X, feature, threshold, left, right)

    return run


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    impls = implementations()
    if "compiled" not in impls:
        print("compiled backend not built; only the fallback is available")
    rng = np.random.default_rng(0)
    cases = {"cd_gram": cd_case(rng), "build_tree": tree_case(rng), "tree_apply": apply_case(rng)}
    print(f"{'kernel':<12}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}{'equal':>8}")
    for name, run in cases.items():
        results = {b: best_of(lambda m=mod: run(m), args.repeat) for b, mod in impls.items()}
        cells = "".join(f"{results[b][0]:>11.4f}s" for b in impls)
        if "compiled" in results:
            speed = results["python"][0] / results["compiled"][0]
            eq = same(results["python"][1], results["compiled"][1])
            print(f"{name:<12}{cells}{speed:>9.1f}x{str(eq):>8}")
        else:
            print(f"{name:<12}{cells}")


if __name__ == "__main__":
    main()
