"""L1-penalized logistic regression fitted by coordinate descent along a lambda path.

The penalized objective on standardized predictors is

    (1/n) * sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + lam * sum_j |b_j|

with an unpenalized intercept. Each lambda is solved by repeated quadratic
approximations of the log-likelihood; every approximation is minimized by
coordinate descent with covariance updates (``kernels.cd_gram``) over the
coordinates kept by the sequential strong rule, warm-started from the
previous lambda. A full gradient check readmits any discarded coordinate
that violates optimality.

The path and the cross-validation folds advance together so the path can stop
once the held-out deviance has clearly passed its minimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .. import kernels
from ..parallel import pmap
from .folds import fold_assignment
from .logit import sigmoid

logger = logging.getLogger(__name__)

MIN_WEIGHT = 1e-5
# optimality residual (gradient of the mean loss) at which a lambda counts as solved
PATH_KKT_TOL = 1e-5
FINAL_KKT_TOL = 1e-8
PATH_CD_TOL = 1e-10
FINAL_CD_TOL = 1e-18
# grid points past the cross-validated minimum before the path stops
CV_PATIENCE = 10


def _is_binary(col):
    return bool(np.all((col == 0.0) | (col == 1.0)))


@dataclass
class Standardizer:
    """Centers every column and scales the non-binary ones to unit variance."""

    mean: np.ndarray
    scale: np.ndarray
    usable: np.ndarray

    @classmethod
    def fit(cls, X):
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        binary = np.array([_is_binary(X[:, j]) for j in range(X.shape[1])], dtype=bool)
        usable = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(binary | ~usable, 1.0, sd)
        return cls(mean, scale, usable)

    def transform(self, X):
        Z = (X - self.mean) / self.scale
        Z[:, ~self.usable] = 0.0
        return Z


def lambda_max(Xs, y):
    """Smallest penalty at which every slope is zero."""
    n = Xs.shape[0]
    return float(np.max(np.abs(Xs.T @ (y - y.mean())))) / n if Xs.shape[1] else 0.0


def lambda_grid(lmax, n_lambda=100, min_ratio=1e-4):
    return lmax * np.geomspace(1.0, min_ratio, n_lambda)


def deviance(y, eta):
    return 2.0 * float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def kkt_violation(g, beta, lam, usable):
    """Departure from the lasso optimality conditions, per coordinate."""
    v = np.where(beta != 0.0, np.abs(g + lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
    return np.where(usable, v, 0.0)


class PathSolver:
    """Warm-started solutions of one design along a decreasing lambda sequence.

    The standardized design is never materialized: the raw design is held in
    compressed sparse columns and centering and scaling are applied to the
    products, which keeps the weighted Gram matrices cheap on dummy-heavy
    panels.
    """

    def __init__(self, X, y, standardizer=None):
        X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.st = standardizer or Standardizer.fit(X)
        self.X = sparse.csc_matrix(X)
        self.mean = np.where(self.st.usable, self.st.mean, 0.0)
        self.inv = np.where(self.st.usable, 1.0 / self.st.scale, 0.0)
        self.n, self.p = X.shape
        ybar = float(self.y.mean())
        self.b0 = float(np.log(ybar / (1.0 - ybar)))
        self.beta = np.zeros(self.p)
        self.g = self._gradient(self.y - sigmoid(np.full(self.n, self.b0)))
        self.prev_lam = None
        self.null_deviance = deviance(self.y, np.full(self.n, self.b0))

    def lambda_max(self):
        """Smallest penalty at which every slope is zero."""
        return float(np.max(np.abs(self.xs_t(self.y - self.y.mean())), initial=0.0)) / self.n

    def linear(self, beta, b0=0.0):
        """``b0 + Xs @ beta`` for standardized slopes ``beta``."""
        v = beta * self.inv
        return self.X @ v + (b0 - float(self.mean @ v))

    def xs_t(self, r):
        """``Xs.T @ r``."""
        return self.inv * (self.X.T @ r - self.mean * float(r.sum()))

    def _gradient(self, resid):
        return -self.xs_t(resid) / self.n

    def weighted_gram(self, cols, w, z):
        """Gram matrix and right-hand side of the weighted least-squares step.

        Built over ``[intercept, Xs[:, cols]]`` with weights ``w / n``.
        """
        n = self.n
        Xa = self.X[:, cols]
        m = self.mean[cols]
        inv = self.inv[cols]
        sw = float(w.sum())
        xw = Xa.T @ w
        cross = (Xa.T @ Xa.multiply(w[:, None]).tocsc()).toarray()
        cross -= np.outer(m, xw)
        cross -= np.outer(xw, m)
        cross += sw * np.outer(m, m)
        k = cols.size + 1
        G = np.empty((k, k), order="F")
        G[0, 0] = sw
        G[0, 1:] = G[1:, 0] = inv * (xw - m * sw)
        G[1:, 1:] = cross * np.outer(inv, inv)
        G /= n
        wz = w * z
        swz = float(wz.sum())
        c = np.empty(k)
        c[0] = swz
        c[1:] = inv * (Xa.T @ wz - m * swz)
        return G, c / n

    def solve(self, lam, cd_tol=PATH_CD_TOL, kkt_tol=PATH_KKT_TOL, max_outer=100, max_sweeps=100000):
        """Advance to ``lam``; returns ``(intercept, slopes)`` on the standardized scale."""
        usable = self.st.usable
        prev = lam if self.prev_lam is None else self.prev_lam
        self.prev_lam = lam
        if not self.beta.any() and np.max(np.abs(self.g[usable]), initial=0.0) <= lam:
            # null model: the intercept stays at the log-odds of the mean
            return self.b0, self.beta.copy()

        y = self.y
        active = usable & ((np.abs(self.g) >= 2.0 * lam - prev) | (self.beta != 0.0))
        for _ in range(max_outer):
            cols = np.flatnonzero(active)
            eta = self.linear(self.beta, self.b0)
            prob = sigmoid(eta)
            w = np.maximum(prob * (1.0 - prob), MIN_WEIGHT)
            z = eta + (y - prob) / w
            G, c = self.weighted_gram(cols, w, z)
            coef = np.concatenate([[self.b0], self.beta[cols]])
            pf = np.ones(cols.size + 1)
            pf[0] = 0.0
            kernels.cd_gram(G, c, coef, lam, pf, max_sweeps, cd_tol)
            self.b0 = float(coef[0])
            self.beta[:] = 0.0
            self.beta[cols] = coef[1:]

            resid = y - sigmoid(self.linear(self.beta, self.b0))
            self.g = self._gradient(resid)
            viol = kkt_violation(self.g, self.beta, lam, usable)
            outside = ~active & (viol > 0.0)
            if outside.any():
                active |= outside
                continue
            if viol.max(initial=0.0) < kkt_tol and abs(float(np.mean(resid))) < kkt_tol:
                break
        else:
            logger.warning("lasso: lambda %.4g not solved to %.1e in %d passes", lam, kkt_tol, max_outer)
        return self.b0, self.beta.copy()

    def deviance(self, b0, beta):
        return deviance(self.y, self.linear(beta, b0))

    def unstandardize(self, b0, beta):
        coef = beta * self.inv
        return float(b0 - coef @ self.mean), coef


def fit_path(X, y, lambdas=None, n_lambda=100, min_ratio=1e-4, early_stop=True,
             cd_tol=PATH_CD_TOL, kkt_tol=PATH_KKT_TOL):
    """Whole coefficient path on the original scale.

    Returns a dict with ``lambdas``, ``intercepts`` (L,), ``coefs`` (L, p),
    ``deviance`` per lambda, ``null_deviance`` and the standardized-scale
    ``std_intercepts``, ``std_coefs`` and ``gradients``.
    """
    solver = PathSolver(X, y)
    if lambdas is None:
        lambdas = lambda_grid(solver.lambda_max(), n_lambda, min_ratio)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    rows = []
    for lam in lambdas:
        b0, beta = solver.solve(lam, cd_tol, kkt_tol)
        dev = solver.deviance(b0, beta)
        rows.append((b0, beta, solver.g.copy(), dev))
        if early_stop and _path_saturated([r[3] for r in rows], solver.null_deviance):
            break
    std_b0 = np.array([r[0] for r in rows])
    std_beta = np.vstack([r[1] for r in rows])
    coefs = std_beta * solver.inv
    return {
        "lambdas": lambdas[: len(rows)],
        "intercepts": std_b0 - coefs @ solver.mean,
        "coefs": coefs,
        "deviance": np.array([r[3] for r in rows]),
        "null_deviance": solver.null_deviance,
        "std_intercepts": std_b0,
        "std_coefs": std_beta,
        "gradients": np.vstack([r[2] for r in rows]),
    }


def _path_saturated(devs, null_dev):
    """Stop once the explained deviance stalls or is nearly complete."""
    if len(devs) < 6 or null_dev <= 0:
        return False
    ratio = 1.0 - devs[-1] / null_dev
    return (devs[-2] - devs[-1]) / null_dev < 1e-5 * ratio or ratio > 0.999


def _log_odds(p):
    p = min(max(p, 1e-6), 1 - 1e-6)
    return float(np.log(p / (1 - p)))


def fit_logit_lasso(X, y, row_ids, n_lambda=100, min_ratio=1e-4, n_folds=5, seed=0, lam=None,
                    patience=CV_PATIENCE):
    """Fit along the path; choose lambda by cross-validated deviance unless ``lam`` is fixed.

    Returns ``(intercept, coef, info)`` with ``coef`` on the original scale.
    ``info`` carries the chosen ``lambda``, the standardized solution
    (``std_intercept``, ``std_coef``) and its ``gradient`` for optimality checks.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    full = PathSolver(X, y)
    lmax = full.lambda_max()

    if lam is not None:
        lam = float(lam)
        if lam >= lmax:
            return full.b0, np.zeros(X.shape[1]), {
                "lambda": lam, "lambda_max": lmax, "std_intercept": full.b0,
                "std_coef": np.zeros(X.shape[1]), "gradient": full.g.copy()}
        stop = max(lam, lmax * min_ratio)
        lambdas = list(lmax * np.geomspace(1.0, stop / lmax, 20))
        if lambdas[-1] != lam:
            lambdas.append(lam)
        for value in lambdas[:-1]:
            full.solve(value)
        b0, beta = full.solve(lam, FINAL_CD_TOL, FINAL_KKT_TOL)
        intercept, coef = full.unstandardize(b0, beta)
        return intercept, coef, {
            "lambda": lam, "lambda_max": lmax, "std_intercept": b0, "std_coef": beta,
            "gradient": full.g.copy()}

    lambdas = lambda_grid(lmax, n_lambda, min_ratio)
    folds = fold_assignment(row_ids, n_folds, seed)
    fold_solvers = []
    for k in range(n_folds):
        tr = folds != k
        if y[tr].min() == y[tr].max():
            fold_solvers.append((None, ~tr, _log_odds(float(y[tr].mean()))))
        else:
            fold_solvers.append((PathSolver(X[tr], y[tr]), ~tr, None))

    def advance(job):
        solver, test, const, lam_k = job
        if solver is None:
            return deviance(y[test], np.full(int(test.sum()), const))
        b0, beta = solver.solve(lam_k)
        intercept, coef = solver.unstandardize(b0, beta)
        return deviance(y[test], intercept + X[test] @ coef)

    cv, devs = [], []
    snapshot = None
    for k, lam_k in enumerate(lambdas):
        fold_dev = pmap(advance, [(s, t, c, lam_k) for s, t, c in fold_solvers])
        cv.append(sum(fold_dev) / len(y))
        b0, beta = full.solve(lam_k)
        devs.append(full.deviance(b0, beta))
        best = int(np.argmin(cv))
        if best == k:
            snapshot = (full.b0, full.beta.copy(), full.g.copy())
        if k - best >= patience or _path_saturated(devs, full.null_deviance):
            break

    best = int(np.argmin(cv))
    # polish the chosen lambda to tight optimality from its path solution
    full.b0, full.beta, full.g = snapshot[0], snapshot[1], snapshot[2]
    full.prev_lam = lambdas[best]
    b0, beta = full.solve(lambdas[best], FINAL_CD_TOL, FINAL_KKT_TOL)
    intercept, coef = full.unstandardize(b0, beta)
    return intercept, coef, {
        "lambda": float(lambdas[best]), "lambda_max": lmax, "lambda_index": best,
        "n_lambda_fitted": len(cv), "cv_deviance": np.array(cv), "lambdas": lambdas[: len(cv)],
        "std_intercept": b0, "std_coef": beta, "gradient": full.g.copy()}
