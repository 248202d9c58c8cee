import os
import subprocess
import sys

import numpy as np
import pytest

from tradeshock import kernels
from tradeshock.models.trees import Binner

impls = kernels.implementations()
needs_compiled = pytest.mark.skipif("compiled" not in impls, reason="compiled backend not built")


@needs_compiled
def test_cd_gram_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n, p = 200, int(rng.integers(2, 30))
        X = np.column_stack([np.ones(n), rng.standard_normal((n, p))])
        y = X[:, 1] - X[:, 2] + rng.standard_normal(n)
        G = np.asfortranarray(X.T @ X / n)
        c = X.T @ y / n
        pf = np.r_[0.0, np.ones(p)]
        lam = float(rng.uniform(0.001, 0.3))
        out = []
        for mod in (impls["python"], impls["compiled"]):
            beta = np.zeros(p + 1)
            sweeps, converged = mod.cd_gram(G, c, beta, lam, pf, 10000, 1e-14)
            assert converged
            out.append(beta)
        assert np.allclose(out[0], out[1], atol=1e-12)


@needs_compiled
def test_tree_kernels_agree():
    rng = np.random.default_rng(1)
    for seed in range(10):
        n, p = 400, 6
        X = rng.standard_normal((n, p))
        t = (X[:, 0] + rng.standard_normal(n) > 0).astype(float)
        b = Binner.fit(X)
        Xb = b.transform(X)
        w = rng.integers(0, 3, n).astype(float)
        rows = np.flatnonzero(w > 0)
        a = impls["python"].build_tree(Xb, b.n_bins, t, w, rows, 6, 3.0, 3, seed)
        c = impls["compiled"].build_tree(Xb, b.n_bins, t, w, rows, 6, 3.0, 3, seed)
        for u, v in zip(a, c):
            assert np.allclose(u, v, atol=1e-12)
        feature, split_bin, left, right = a[:4]
        thr = np.array([b.threshold(f, s) if f >= 0 else 0.0 for f, s in zip(feature, split_bin)])
        la = impls["python"].tree_apply(X, feature, thr, left, right)
        lc = impls["compiled"].tree_apply(X, feature, thr, left, right)
        assert np.array_equal(la, lc)


def test_cd_gram_solves_the_lasso_quadratic():
    # one-dimensional quadratic: 0.5*a*b^2 - c*b + lam*|b| has b = soft(c, lam) / a
    mod = kernels
    for a, c, lam in [(2.0, 3.0, 1.0), (1.0, -0.5, 1.0), (4.0, -3.0, 0.5)]:
        G = np.asfortranarray([[a]])
        beta = np.zeros(1)
        mod.cd_gram(G, np.array([c]), beta, lam, np.ones(1), 100, 1e-16)
        assert beta[0] == pytest.approx(np.sign(c) * max(abs(c) - lam, 0) / a)


def test_environment_variable_forces_the_fallback():
    env = dict(os.environ, TRADESHOCK_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from tradeshock import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
