"""Binned CART trees, random forests and gradient boosting for binary outcomes.

Features are discretized once into at most 256 ordered bins; split search then
works on per-bin sums. A split sends a row left when its raw value is at most
the bin's upper edge, so fitted trees can be applied to unbinned data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..parallel import pmap
from .logit import sigmoid

MAX_BINS = 256


@dataclass
class Binner:
    """Per-feature upper bin edges; ``edges[j]`` has ``n_bins[j] - 1`` entries."""

    edges: list

    @classmethod
    def fit(cls, X, max_bins=MAX_BINS):
        edges = []
        for j in range(X.shape[1]):
            values = np.unique(X[:, j])
            if values.size <= max_bins:
                cuts = (values[:-1] + values[1:]) / 2.0
            else:
                qs = np.quantile(X[:, j], np.arange(1, max_bins) / max_bins)
                cuts = np.unique(qs)
                cuts = cuts[cuts < values[-1]]
            edges.append(np.asarray(cuts, dtype=np.float64))
        return cls(edges)

    @property
    def n_bins(self):
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X):
        codes = np.empty(X.shape, dtype=np.uint8, order="F")
        for j, e in enumerate(self.edges):
            codes[:, j] = np.searchsorted(e, X[:, j], side="left")
        return codes

    def threshold(self, feature, b):
        return float(self.edges[feature][b])


@dataclass
class Tree:
    """Array-encoded binary tree; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self):
        return int((self.feature < 0).sum())

    def apply(self, X):
        return kernels.tree_apply(np.asarray(X, dtype=np.float64), self.feature, self.threshold,
                                  self.left, self.right)

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def grow(binner, Xb, target, weight, max_depth, min_leaf, max_features=0, seed=0):
    """Fit one squared-error tree on binned data; rows with zero weight are ignored."""
    rows = np.flatnonzero(weight > 0)
    feature, split_bin, left, right, value, _ = kernels.build_tree(
        Xb, binner.n_bins, np.ascontiguousarray(target, dtype=np.float64),
        np.ascontiguousarray(weight, dtype=np.float64), rows, int(max_depth), float(min_leaf),
        int(max_features), int(seed) & 0xFFFFFFFFFFFFFFFF)
    threshold = np.array([binner.threshold(f, b) if f >= 0 else 0.0
                          for f, b in zip(feature.tolist(), split_bin.tolist())], dtype=np.float64)
    return Tree(feature, threshold, left, right, value)


def fit_tree(X, y, max_depth=8, min_leaf=10):
    """CART classification tree; leaf values are positive-class frequencies."""
    binner = Binner.fit(X)
    return grow(binner, binner.transform(X), y, np.ones(len(y)), max_depth, min_leaf)


def _tree_seeds(seed, n):
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [int(s.generate_state(2, np.uint64)[0]) for s in ss.spawn(n)]


def fit_forest(X, y, n_trees=500, max_features=None, min_leaf=5, max_depth=64, seed=0):
    """Random forest: bootstrap row weights and random feature subsets at each split."""
    n, p = X.shape
    if max_features is None:
        max_features = max(1, int(np.sqrt(p)))
    binner = Binner.fit(X)
    Xb = binner.transform(X)
    seeds = _tree_seeds(seed, n_trees)

    def one(s):
        rng = np.random.default_rng(s)
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
        return grow(binner, Xb, y, counts, max_depth, min_leaf, max_features, s)

    return pmap(one, seeds)


def forest_predict(trees, X):
    X = np.asarray(X, dtype=np.float64)
    total = np.zeros(X.shape[0])
    for t in trees:
        total += t.predict(X)
    return total / len(trees)


def fit_boosting(X, y, n_rounds=100, max_depth=3, learning_rate=0.1, min_leaf=5):
    """Gradient boosting on the logistic loss.

    Each round fits a regression tree to the residuals ``y - p`` and replaces
    its leaf values by a one-step Newton estimate
    ``sum(r) / sum(p * (1 - p))`` within the leaf.
    Returns ``(f0, trees)`` where the score is ``f0 + sum(learning_rate * tree)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ybar = float(y.mean())
    f0 = float(np.log(ybar / (1.0 - ybar)))
    binner = Binner.fit(X)
    Xb = binner.transform(X)
    ones = np.ones(len(y))
    F = np.full(len(y), f0)
    trees = []
    for _ in range(n_rounds):
        p = sigmoid(F)
        r = y - p
        tree = grow(binner, Xb, r, ones, max_depth, min_leaf)
        leaf = tree.apply(X)
        num = np.bincount(leaf, weights=r, minlength=tree.value.size)
        den = np.bincount(leaf, weights=p * (1.0 - p), minlength=tree.value.size)
        tree.value = learning_rate * np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
        F += tree.value[leaf]
        trees.append(tree)
    return f0, trees


def boosting_predict(f0, trees, X):
    X = np.asarray(X, dtype=np.float64)
    F = np.full(X.shape[0], f0)
    for t in trees:
        F += t.predict(X)
    return sigmoid(F)
