import numpy as np
import pytest

from tradeshock.models.lasso import (FINAL_KKT_TOL, Standardizer, fit_logit_lasso, fit_path, kkt_violation,
                                     lambda_max)
from tradeshock.models.logit import fit_irls, sigmoid


def logit_data(rng, n=50, p=5, coef=None):
    X = rng.standard_normal((n, p))
    coef = np.array([1.0, -0.8, 0.5, 0.0, 0.3]) if coef is None else coef
    y = (rng.random(n) < sigmoid(0.2 + X @ coef)).astype(float)
    return X, y


def ids(n):
    return [f"row{i}" for i in range(n)]


def test_kkt_conditions_at_fixed_lambda():
    rng = np.random.default_rng(0)
    X, y = logit_data(rng, n=400, p=5)
    X = np.column_stack([X, rng.standard_normal((400, 15))])
    st = Standardizer.fit(X)
    lmax = lambda_max(st.transform(X), y)
    for frac in (0.5, 0.1, 0.01):
        _, coef, info = fit_logit_lasso(X, y, ids(400), lam=frac * lmax)
        v = kkt_violation(info["gradient"], info["std_coef"], frac * lmax, st.usable)
        assert v.max() < FINAL_KKT_TOL


def test_kkt_conditions_along_the_path():
    rng = np.random.default_rng(1)
    X, y = logit_data(rng, n=300)
    path = fit_path(X, y, n_lambda=30, early_stop=False)
    st = Standardizer.fit(X)
    for lam, beta, g in zip(path["lambdas"], path["std_coefs"], path["gradients"]):
        assert kkt_violation(g, beta, lam, st.usable).max() < 1e-5


def test_null_model_at_and_above_lambda_max():
    rng = np.random.default_rng(2)
    X, y = logit_data(rng)
    lmax = lambda_max(Standardizer.fit(X).transform(X), y)
    pbar = y.mean()
    for lam in (lmax, 1.5 * lmax):
        b0, coef, _ = fit_logit_lasso(X, y, ids(50), lam=lam)
        assert np.all(coef == 0.0)
        assert b0 == pytest.approx(np.log(pbar / (1 - pbar)), abs=1e-10)


def test_lambda_zero_matches_maximum_likelihood():
    rng = np.random.default_rng(3)
    X, y = logit_data(rng, n=50)
    b0_ml, coef_ml, _, converged, _ = fit_irls(X, y, tol=1e-12)
    assert converged
    b0, coef, _ = fit_logit_lasso(X, y, ids(50), lam=0.0)
    assert b0 == pytest.approx(b0_ml, abs=1e-4)
    assert np.allclose(coef, coef_ml, atol=1e-4)


def test_duplicated_column_keeps_finite_solution():
    rng = np.random.default_rng(4)
    X, y = logit_data(rng, n=200)
    Xd = np.column_stack([X, X[:, 0]])
    b0, coef, info = fit_logit_lasso(Xd, y, ids(200), lam=0.01)
    assert np.all(np.isfinite(coef))
    # the two copies share the effect of the single column
    single = fit_logit_lasso(X, y, ids(200), lam=0.01)[1]
    assert coef[0] + coef[5] == pytest.approx(single[0], abs=1e-4)


def test_constant_column_gets_zero_coefficient():
    rng = np.random.default_rng(5)
    X, y = logit_data(rng, n=200)
    X = np.column_stack([X, np.full(200, 3.0)])
    _, coef, _ = fit_logit_lasso(X, y, ids(200), n_lambda=30)
    assert coef[-1] == 0.0


def test_cross_validation_selects_informative_columns():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        n, p = 500, 30
        X = rng.standard_normal((n, p))
        eta = 1.5 * X[:, 0] - 1.5 * X[:, 1] + 1.0 * X[:, 2]
        y = (rng.random(n) < sigmoid(eta)).astype(float)
        _, coef, _ = fit_logit_lasso(X, y, ids(n), n_lambda=50, seed=seed)
        hits += bool(np.all(coef[:3] != 0))
    assert hits >= 19


def test_cv_choice_is_reproducible():
    rng = np.random.default_rng(6)
    X, y = logit_data(rng, n=300)
    a = fit_logit_lasso(X, y, ids(300), n_lambda=40, seed=3)
    b = fit_logit_lasso(X, y, ids(300), n_lambda=40, seed=3)
    assert a[2]["lambda"] == b[2]["lambda"]
    assert np.array_equal(a[1], b[1])


def test_binary_columns_are_centered_not_scaled():
    X = np.column_stack([np.array([0.0, 1.0, 1.0, 0.0]), np.array([1.0, 2.0, 3.0, 4.0])])
    st = Standardizer.fit(X)
    assert st.scale[0] == 1.0
    assert st.scale[1] == pytest.approx(X[:, 1].std())
