"""Unpenalized logistic regression by iteratively reweighted least squares."""

import logging

import numpy as np

logger = logging.getLogger(__name__)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def independent_columns(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of columns kept by a left-to-right rank scan.

    A column is dropped when its component orthogonal to the previously kept
    columns is below ``tol`` relative to its own norm, so in any collinear
    group the earliest columns survive.
    """
    A = np.asarray(A, dtype=np.float64)
    norms = np.linalg.norm(A, axis=0)
    kept = []
    Q = np.zeros((A.shape[0], 0))
    for j in range(A.shape[1]):
        if norms[j] == 0.0:
            continue
        v = A[:, j] / norms[j]
        # two passes of Gram-Schmidt keep the projection accurate
        for _ in range(2):
            v = v - Q @ (Q.T @ v)
        r = np.linalg.norm(v)
        if r > tol:
            kept.append(j)
            Q = np.column_stack([Q, v / r])
    return np.asarray(kept, dtype=np.int64)


def fit_irls(X, y, max_iter: int = 100, tol: float = 1e-8, sample_weight=None):
    """Maximum-likelihood logit with an intercept.

    Returns ``(intercept, coef, kept, converged, n_iter)`` where ``coef`` is
    zero for the collinear columns that were dropped and ``kept`` lists the
    retained column indices. Iteration stops once the largest absolute score
    component is below ``tol`` or after ``max_iter`` Newton steps.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    sw = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    A_full = np.column_stack([np.ones(n), X])
    kept_all = independent_columns(A_full)
    if kept_all.size == 0 or kept_all[0] != 0:
        kept_all = np.concatenate([[0], kept_all[kept_all != 0]])
    A = A_full[:, kept_all]

    ybar = float(np.sum(sw * y) / np.sum(sw))
    beta = np.zeros(A.shape[1])
    if 0.0 < ybar < 1.0:
        beta[0] = np.log(ybar / (1.0 - ybar))

    def nll(b):
        eta = A @ b
        return float(np.sum(sw * (np.logaddexp(0.0, eta) - y * eta)))

    converged = False
    it = 0
    current = nll(beta)
    for it in range(1, max_iter + 1):
        p_hat = sigmoid(A @ beta)
        score = A.T @ (sw * (y - p_hat))
        if np.max(np.abs(score)) < tol:
            converged = True
            it -= 1
            break
        w = sw * p_hat * (1.0 - p_hat)
        H = A.T @ (A * w[:, None])
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
        # halve the step until the likelihood does not get worse
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            val = nll(cand)
            if val <= current + 1e-12 * max(1.0, abs(current)):
                break
            t *= 0.5
        beta, current = cand, val
    else:
        p_hat = sigmoid(A @ beta)
        score = A.T @ (sw * (y - p_hat))
        converged = bool(np.max(np.abs(score)) < tol)
        if not converged:
            logger.warning("logit did not converge in %d iterations (max |score| %.3g)",
                           max_iter, np.max(np.abs(score)))

    coef = np.zeros(p)
    kept = kept_all[1:] - 1
    coef[kept] = beta[1:]
    return float(beta[0]), coef, kept, converged, it
