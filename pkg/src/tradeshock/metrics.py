"""Evaluation statistics for probabilistic binary predictions.

Five statistics, all in [0, 1]: Efron's pseudo-R², ROC AUC, precision-recall
AUC, balanced accuracy and the positive-class F1 score. Threshold-based
statistics call a row positive when ``score >= threshold``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

UNDEFINED = math.nan
STATISTICS = ("r2", "auc", "pr_auc", "bacc", "f1")
LABELS = {"r2": "R2", "auc": "AUC", "pr_auc": "PR", "bacc": "BACC", "f1": "F1"}


@dataclass(frozen=True)
class MetricsReport:
    r2: float
    auc: float
    pr_auc: float
    bacc: float
    f1: float
    n: int
    positive_rate: float
    threshold: float

    def to_dict(self):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (UNDEFINED if v is None else v) for k, v in d.items()})


def _inputs(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("empty input")
    if s.size != y.size:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def roc_auc(scores, labels):
    """Mann-Whitney probability that a positive outranks a negative, ties counted half."""
    s, y = _inputs(scores, labels)
    n1 = float(y.sum())
    n0 = float(y.size - n1)
    if n1 == 0 or n0 == 0:
        return UNDEFINED
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def pr_auc(scores, labels):
    """Area under the precision-recall step curve.

    Thresholds run over the distinct scores in decreasing order (tied rows
    enter together); each recall increment is weighted by the precision
    reached at that threshold, with no interpolation between points.
    """
    s, y = _inputs(scores, labels)
    n1 = float(y.sum())
    if n1 == 0 or n1 == y.size:
        return UNDEFINED
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    tp = np.cumsum(y[order])
    # last index of every run of tied scores
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tp = tp[last]
    predicted = last + 1.0
    precision = tp / predicted
    recall = tp / n1
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def confusion(scores, labels, threshold=0.5):
    """``(tp, fp, tn, fn)`` with positives predicted at ``score >= threshold``."""
    s, y = _inputs(scores, labels)
    pred = s >= threshold
    pos = y == 1.0
    return (int(np.sum(pred & pos)), int(np.sum(pred & ~pos)), int(np.sum(~pred & ~pos)),
            int(np.sum(~pred & pos)))


def balanced_accuracy(scores, labels, threshold=0.5):
    """Mean of the true-positive and true-negative rates; a missing class drops its rate."""
    tp, fp, tn, fn = confusion(scores, labels, threshold)
    rates = []
    if tp + fn:
        rates.append(tp / (tp + fn))
    if tn + fp:
        rates.append(tn / (tn + fp))
    return float(np.mean(rates))


def f1_score(scores, labels, threshold=0.5):
    """Harmonic mean of precision and recall for the positive class; 0 when undefined."""
    tp, fp, _, fn = confusion(scores, labels, threshold)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def efron_r2(scores, labels):
    """``1 - SSE/SST`` on probabilities, clamped to [0, 1]; 0 when the labels do not vary."""
    s, y = _inputs(scores, labels)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return 0.0
    sse = float(np.sum((y - s) ** 2))
    return float(min(max(1.0 - sse / sst, 0.0), 1.0))


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    s, y = _inputs(scores, labels)
    return MetricsReport(
        r2=efron_r2(s, y),
        auc=roc_auc(s, y),
        pr_auc=pr_auc(s, y),
        bacc=balanced_accuracy(s, y, threshold),
        f1=f1_score(s, y, threshold),
        n=int(y.size),
        positive_rate=float(y.mean()),
        threshold=float(threshold),
    )


def degenerate(scores, threshold=0.5):
    """Name the degeneracy of a prediction vector, or None.

    A classifier that puts every row in the same class at the threshold is
    reported rather than silently scored.
    """
    s = np.asarray(scores, dtype=np.float64)
    if np.all(s >= threshold):
        return "predicts positive for every row"
    if np.all(s < threshold):
        return "predicts negative for every row"
    return None


def format_table(reports, title=None):
    """Fixed-width table with one row per model and one column per statistic."""
    names = list(reports)
    width = max([len("Model")] + [len(n) for n in names])
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Model':<{width}}" + "".join(f"{LABELS[k]:>8}" for k in STATISTICS) + f"{'n':>8}")
    for name in names:
        r = reports[name]
        cells = "".join("      NA" if math.isnan(getattr(r, k)) else f"{getattr(r, k):8.4f}" for k in STATISTICS)
        lines.append(f"{name:<{width}}{cells}{r.n:>8d}")
    return "\n".join(lines) + "\n"
