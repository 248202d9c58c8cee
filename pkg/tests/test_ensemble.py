import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import nnls as scipy_nnls

from tradeshock import ensemble
from tradeshock.models import ClassifierSpec


def simplex_grid_risk(Z, y, step=0.001):
    """Oracle for min |Zw - y|^2 / n over w >= 0.

    Every nonnegative w is a scale s >= 0 times a point v of the simplex; v runs
    over a grid of the 3-simplex and s is solved in closed form for each v.
    Returns ``(risk, direction)``.
    """
    k = int(round(1 / step))
    best, arg = np.inf, None
    a = np.arange(k + 1)
    for i in range(k + 1):
        b = a[: k + 1 - i]
        V = np.column_stack([np.full(b.size, i), b, k - i - b]) * step
        P = Z @ V.T
        scale = np.maximum((P * y[:, None]).sum(axis=0) / np.maximum((P * P).sum(axis=0), 1e-300), 0.0)
        r = np.mean((P * scale - y[:, None]) ** 2, axis=0)
        j = int(np.argmin(r))
        if r[j] < best:
            best, arg = float(r[j]), V[j]
    return best, arg


def convex_instance(rng, n=20):
    y = rng.integers(0, 2, n).astype(float)
    base = np.clip(0.5 + 0.6 * (y - 0.5) + 0.25 * rng.standard_normal(n), 0, 1)
    Z = np.column_stack([np.clip(base + s * rng.standard_normal(n), 0, 1) for s in (0.05, 0.2, 0.4)])
    return Z, y


def test_weights_match_simplex_grid_search():
    rng = np.random.default_rng(3)
    for _ in range(20):
        Z, y = convex_instance(rng)
        ew = ensemble.solve_weights(Z, y)
        w = np.array(list(ew.weights.values()))
        oracle_risk, direction = simplex_grid_risk(Z, y)
        assert abs(ew.cv_risk - oracle_risk) <= 1e-3
        # the normalized weights are the direction the grid found
        assert np.abs(w - direction).max() <= 2e-3
        assert w.min() >= 0 and w.sum() == pytest.approx(1.0)


def test_nnls_kkt_and_agreement_with_scipy():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n, m = int(rng.integers(5, 60)), int(rng.integers(1, 8))
        Z = rng.standard_normal((n, m))
        y = rng.standard_normal(n)
        w, g = ensemble.nnls(Z, y)
        ref, _ = scipy_nnls(Z, y)
        assert np.all(w >= 0)
        assert np.max(np.abs(g[w > 0]), initial=0.0) < 1e-8
        assert np.min(g[w == 0], initial=0.0) > -1e-8
        assert np.allclose(w, ref, atol=1e-8)


def test_nnls_on_collinear_columns():
    rng = np.random.default_rng(5)
    a = rng.random(50)
    Z = np.column_stack([a, a, rng.random(50)])
    y = 0.7 * a + 0.1
    w, g = ensemble.nnls(Z, y)
    assert np.all(w >= 0)
    assert np.max(np.abs(g[w > 0])) < 1e-8
    assert w[0] + w[1] > 0.5


def test_all_zero_solution_falls_back_to_best_member():
    Z = np.array([[0.9, 0.8], [0.8, 0.7], [0.7, 0.95]])
    y = -np.ones(3)
    ew = ensemble.solve_weights(Z, y, ["a", "b"])
    assert sum(ew.raw_weights.values()) == 0.0
    best = min(ew.per_model_risk, key=ew.per_model_risk.get)
    assert ew.weights[best] == 1.0


def test_stacked_risk_not_worse_than_best_member():
    rng = np.random.default_rng(6)
    for _ in range(20):
        Z, y = convex_instance(rng)
        ew = ensemble.solve_weights(Z, y)
        raw = np.array(list(ew.raw_weights.values()))
        assert ew.cv_risk == pytest.approx(np.mean((Z @ raw - y) ** 2), abs=1e-15)
        assert ew.cv_risk <= min(ew.per_model_risk.values()) + 1e-9
        assert sum(ew.weights.values()) == pytest.approx(1.0, abs=1e-12)


def test_perfect_column_takes_all_weight():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 2, 30).astype(float)
    Z = np.column_stack([rng.random(30), y, rng.random(30)])
    ew = ensemble.solve_weights(Z, y, ["a", "b", "c"])
    assert ew.weights["b"] == pytest.approx(1.0)
    assert ew.cv_risk == pytest.approx(0.0, abs=1e-20)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(0, 1)), arrays(np.float64, 12, elements=st.floats(0, 1)))
def test_nnls_is_optimal_on_arbitrary_level_one_data(Z, y):
    w, g = ensemble.nnls(Z, y)
    assert np.all(w >= 0)
    scale = max(1.0, float(np.abs(Z).sum()))
    assert np.max(np.abs(g[w > 0]), initial=0.0) < 1e-8 * scale
    assert np.min(g[w == 0], initial=0.0) > -1e-8 * scale


def test_level_one_is_out_of_fold_and_order_free():
    rng = np.random.default_rng(7)
    n = 300
    X = rng.standard_normal((n, 4))
    y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(float)
    ids = [f"r{i}" for i in range(n)]
    specs = [ClassifierSpec("logit"), ClassifierSpec("tree", {"max_depth": 3})]
    Z = ensemble.level_one(specs, X, y, folds=5, seed=1, row_ids=ids)
    perm = rng.permutation(n)
    Zp = ensemble.level_one(specs, X[perm], y[perm], folds=5, seed=1, row_ids=[ids[i] for i in perm])
    assert np.allclose(Zp, Z[perm], atol=1e-12)
    assert Z.shape == (n, 2) and np.all((Z >= 0) & (Z <= 1))


def test_ensemble_prediction_and_missing_member():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((200, 3))
    y = (X[:, 0] > 0).astype(float)
    specs = [ClassifierSpec("logit"), ClassifierSpec("tree", {"max_depth": 2})]
    fitted = ensemble.fit_members(specs, X, y)
    ew = ensemble.EnsembleWeights({"logit": 0.25, "tree": 0.75}, {"logit": 0.25, "tree": 0.75}, 0.0, {})
    p = ensemble.predict_ensemble(ew, fitted, X)
    expect = 0.25 * fitted["logit"].predict_proba(X) + 0.75 * fitted["tree"].predict_proba(X)
    assert np.allclose(p, expect)
    with pytest.raises(KeyError, match="tree"):
        ensemble.predict_ensemble(ew, {"logit": fitted["logit"]}, X)


def test_member_names_and_weights_round_trip():
    specs = [ClassifierSpec("logit"), ClassifierSpec("tree"), ClassifierSpec("tree", {"max_depth": 2})]
    assert ensemble.member_names(specs) == ["logit", "tree", "tree_2"]
    ew = ensemble.EnsembleWeights({"a": 0.4, "b": 0.6}, {"a": 0.2, "b": 0.3}, 0.1, {"a": 0.2, "b": 0.3})
    back = ensemble.EnsembleWeights.from_dict(json.loads(ew.to_json()))
    assert back == ew
    table = ensemble.weights_table({"Apr": ew})
    assert "40" in table and "60" in table
