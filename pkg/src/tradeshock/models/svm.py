"""Linear soft-margin SVM by averaged subgradient descent, with Platt calibration."""

from __future__ import annotations

import numpy as np

from .lasso import Standardizer
from .logit import fit_irls, sigmoid


def fit_hinge(X, y, C=1.0, n_iter=1000, eta0=1.0):
    """Minimize ``lam/2 * |w|^2 + mean(max(0, 1 - s * (Xw + b)))`` with ``lam = 1/(C n)``.

    ``y`` is 0/1 and mapped to ``s = 2y - 1``. Full-batch subgradient steps of
    size ``eta0 / sqrt(t)``; the returned solution is the running average of
    the iterates, which makes the result a fixed function of the data.
    Returns ``(w, b)`` on the scale of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    lam = 1.0 / (C * n)
    w = np.zeros(p)
    b = 0.0
    w_avg = np.zeros(p)
    b_avg = 0.0
    for t in range(1, n_iter + 1):
        margin = s * (X @ w + b)
        viol = margin < 1.0
        sv = s * viol
        gw = lam * w - (X.T @ sv) / n
        gb = -float(sv.sum()) / n
        eta = eta0 / np.sqrt(t)
        w = w - eta * gw
        b = b - eta * gb
        w_avg += (w - w_avg) / t
        b_avg += (b - b_avg) / t
    return w_avg, b_avg


def platt(scores, y):
    """Sigmoid calibration ``p = 1 / (1 + exp(-(a * score + c)))`` fitted by maximum likelihood.

    Targets are smoothed to ``(N+ + 1)/(N+ + 2)`` and ``1/(N- + 2)`` so the fit
    stays finite when the scores separate the classes. Returns ``(a, c)``.
    """
    y = np.asarray(y, dtype=np.float64)
    n_pos = float(y.sum())
    n_neg = float(y.size - n_pos)
    target = np.where(y > 0.5, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    c, coef, _, _, _ = fit_irls(np.asarray(scores, dtype=np.float64)[:, None], target)
    return float(coef[0]), float(c)


class LinearSVM:
    """Hinge-loss classifier on standardized features plus Platt probabilities."""

    def __init__(self, mean, inv_scale, w, b, a, c):
        self.mean, self.inv_scale, self.w, self.b, self.a, self.c = mean, inv_scale, w, b, a, c

    @classmethod
    def fit(cls, X, y, holdout, C=1.0, n_iter=1000):
        """Train on rows outside ``holdout`` (boolean mask) and calibrate on the rest."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        train = ~holdout
        st = Standardizer.fit(X[train])
        Z = st.transform(X)
        w, b = fit_hinge(Z[train], y[train], C=C, n_iter=n_iter)
        inv = np.where(st.usable, 1.0 / st.scale, 0.0)
        model = cls(st.mean, inv, w, b, 1.0, 0.0)
        model.a, model.c = platt(model.decision(X[holdout]), y[holdout])
        return model

    def decision(self, X):
        return ((np.asarray(X, dtype=np.float64) - self.mean) * self.inv_scale) @ self.w + self.b

    def predict_proba(self, X):
        return sigmoid(self.a * self.decision(X) + self.c)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "inv_scale": self.inv_scale.tolist(), "w": self.w.tolist(),
                "b": self.b, "a": self.a, "c": self.c}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["inv_scale"], dtype=np.float64),
                   np.asarray(d["w"], dtype=np.float64), float(d["b"]), float(d["a"]), float(d["c"]))
