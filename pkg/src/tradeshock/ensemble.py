"""Stacked ensemble with non-negative least-squares weights.

Each member's out-of-fold probabilities form one column of the level-one
matrix ``Z``. Weights minimize the squared error ``|Zw - y|^2`` over
``w >= 0`` and are then rescaled to sum to one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import models
from .models.folds import fold_assignment, merge_degenerate
from .parallel import pmap

logger = logging.getLogger(__name__)

RIDGE_JITTER = 1e-10


def _passive_solve(Z, y, passive):
    """Least squares restricted to the passive columns, jittered if singular."""
    A = Z[:, passive]
    AtA = A.T @ A
    Aty = A.T @ y
    rank = np.linalg.matrix_rank(AtA)
    if rank < AtA.shape[0]:
        logger.warning("nnls: rank-deficient active set (%d of %d); adding ridge %.0e",
                       rank, AtA.shape[0], RIDGE_JITTER)
        AtA = AtA + RIDGE_JITTER * np.eye(AtA.shape[0])
    out = np.zeros(Z.shape[1])
    out[passive] = np.linalg.solve(AtA, Aty)
    return out


def nnls(Z, y, tol=None, max_iter=None):
    """Lawson-Hanson active-set solution of ``min |Zw - y|^2`` subject to ``w >= 0``.

    Returns ``(w, gradient)`` where ``gradient = Z'(Zw - y)``; at the solution it
    is non-negative on zero weights and zero on positive ones.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = Z.shape
    if tol is None:
        tol = 10.0 * max(n, m) * np.finfo(float).eps * max(1.0, float(np.abs(Z).max(initial=0.0)))
    if max_iter is None:
        max_iter = 3 * m + 30
    w = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        neg_grad = Z.T @ (y - Z @ w)
        candidates = ~passive & (neg_grad > tol)
        if not candidates.any():
            break
        j = int(np.argmax(np.where(candidates, neg_grad, -np.inf)))
        passive[j] = True
        while True:
            s = _passive_solve(Z, y, passive)
            if np.all(s[passive] > 0):
                w = s
                break
            # step back toward w until the first passive weight hits zero
            bad = passive & (s <= 0)
            alpha = float(np.min(w[bad] / (w[bad] - s[bad])))
            w = w + alpha * (s - w)
            passive &= w > tol
            w[~passive] = 0.0
            if not passive.any():
                break
    else:
        logger.warning("nnls: iteration limit reached")
    return w, Z.T @ (Z @ w - y)


@dataclass(frozen=True)
class EnsembleWeights:
    weights: dict
    raw_weights: dict
    cv_risk: float
    per_model_risk: dict

    @property
    def names(self):
        return list(self.weights)

    def to_dict(self):
        return {"weights": self.weights, "raw_weights": self.raw_weights, "cv_risk": self.cv_risk,
                "per_model_risk": self.per_model_risk}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["weights"]), dict(d["raw_weights"]), float(d["cv_risk"]),
                   dict(d["per_model_risk"]))


def member_names(specs):
    """Unique column labels: the kind, suffixed when a kind repeats."""
    names, seen = [], {}
    for spec in specs:
        k = seen.get(spec.kind, 0)
        seen[spec.kind] = k + 1
        names.append(spec.kind if k == 0 else f"{spec.kind}_{k + 1}")
    return names


def level_one(specs, X, y=None, folds: int = 5, seed: int = 0, row_ids=None, feature_names=None):
    """Out-of-fold probabilities, one column per spec.

    Fold membership is a function of the row ids and ``seed`` only, so the
    matrix does not depend on row order.
    """
    if hasattr(X, "row_ids"):
        row_ids = X.row_ids if row_ids is None else row_ids
        y = X.y if y is None else y
        feature_names = list(X.columns)
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if folds < 2:
        raise ValueError("level_one needs at least 2 folds")
    if row_ids is None:
        row_ids = models.content_row_ids(X, y)
    assign = merge_degenerate(fold_assignment(row_ids, folds, seed, salt="level_one"), y, logger)
    ids = np.asarray(row_ids, dtype=object)
    jobs = [(m, k) for m in range(len(specs)) for k in np.unique(assign)]

    def run(job):
        m, k = job
        train = assign != k
        model = models.fit(specs[m], X[train], y[train], feature_names, list(ids[train]))
        return models.predict_proba(model, X[~train], feature_names)

    Z = np.empty((X.shape[0], len(specs)))
    for (m, k), pred in zip(jobs, pmap(run, jobs)):
        Z[assign == k, m] = pred
    return Z


def solve_weights(Z, y, names=None) -> EnsembleWeights:
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if Z.shape[0] != y.size:
        raise ValueError(f"{Z.shape[0]} level-one rows for {y.size} labels")
    names = list(names) if names is not None else [f"m{j}" for j in range(Z.shape[1])]
    w, _ = nnls(Z, y)
    risks = {n: float(np.mean((Z[:, j] - y) ** 2)) for j, n in enumerate(names)}
    cv_risk = float(np.mean((Z @ w - y) ** 2))
    total = float(w.sum())
    if total > 0:
        norm = w / total
    else:
        # all-zero solution: fall back to the best single member
        norm = np.zeros_like(w)
        norm[int(np.argmin([risks[n] for n in names]))] = 1.0
        logger.warning("ensemble: all NNLS weights are zero; using the best single model")
    return EnsembleWeights({n: float(v) for n, v in zip(names, norm)},
                           {n: float(v) for n, v in zip(names, w)}, cv_risk, risks)


def predict_ensemble(weights: EnsembleWeights, fitted, X, feature_names=None):
    """Weighted combination of member probabilities.

    ``fitted`` maps member names to trained classifiers (a list is matched to
    the weight names in order).
    """
    if not isinstance(fitted, dict):
        fitted = dict(zip(weights.names, fitted))
    out = None
    for name, w in weights.weights.items():
        if w == 0.0:
            continue
        if name not in fitted:
            raise KeyError(f"no fitted model for ensemble member {name!r}")
        p = w * models.predict_proba(fitted[name], X, feature_names)
        out = p if out is None else out + p
    if out is None:
        raise ValueError("ensemble has no positive weight")
    return np.clip(out, 0.0, 1.0)


def fit_members(specs, X, y=None, feature_names=None, row_ids=None):
    names = member_names(specs)
    fitted = pmap(lambda s: models.fit(s, X, y, feature_names, row_ids), specs)
    return dict(zip(names, fitted))


def weights_table(columns, title="Ensemble weights (%)"):
    """Text table of percent weights, one column per fitted ensemble.

    ``columns`` maps a column header (for example a month) to EnsembleWeights.
    """
    headers = list(columns)
    names = []
    for ew in columns.values():
        names += [n for n in ew.weights if n not in names]
    width = max([len("Model")] + [len(n) for n in names])
    lines = [title, f"{'Model':<{width}}" + "".join(f"{str(h):>8}" for h in headers)]
    for n in names:
        cells = "".join(f"{round(100 * columns[h].weights.get(n, 0.0)):>8d}" for h in headers)
        lines.append(f"{n:<{width}}{cells}")
    return "\n".join(lines) + "\n"
