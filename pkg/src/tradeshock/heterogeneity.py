"""Where the estimated effects differ: subgroup means, OLS, correlation and a regression tree.

Every operation joins an EffectTable to the treated cohort's feature panels on
``(firm_id, month)``, so the panels must cover the months in the table.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .counterfactual import EffectTable
from .models.logit import independent_columns
from .panel import ATTRIBUTE_COLUMNS, BASE_FEATURES, FeaturePanel

WINDOWS = {"placebo": (1, 2, 3), "treated": (4, 5, 6, 7)}
MIN_GROUP = 5
UNDEFINED = math.nan
EXHAUSTIVE_LEVELS = 12
DEFAULT_EXPLANATORY = ("month", "size_quartile", "main_industry", "main_transport", "HH_p", "HH_d",
                       "NP", "ND", "main_continent", "main_destination", "main_department")
# factors with many levels enter the tree with their most frequent levels only
REDUCED_LEVELS = {"main_destination": 8, "main_department": 8}
CATEGORICAL = {"month", *ATTRIBUTE_COLUMNS}


def window_months(window) -> tuple:
    if isinstance(window, str):
        if window not in WINDOWS:
            raise KeyError(f"unknown window {window!r}; expected one of {', '.join(WINDOWS)}")
        return WINDOWS[window]
    return tuple(int(m) for m in window)


def _panels_by_month(panels):
    if isinstance(panels, FeaturePanel):
        return {panels.month: panels}
    if isinstance(panels, Mapping):
        return dict(panels)
    return {p.month: p for p in panels}


def joined(effects: EffectTable, panels, window=None) -> pd.DataFrame:
    """Effects with each row's attributes and base features."""
    by_month = _panels_by_month(panels)
    table = effects if window is None else effects.window(window_months(window))
    parts = []
    for m in table.months:
        if m not in by_month:
            raise KeyError(f"no feature panel for month {m}")
        p = by_month[m]
        feats = pd.DataFrame({c: p.column(c) for c in BASE_FEATURES if c in p.columns})
        feats = pd.concat([p.attributes.reset_index(drop=True), feats], axis=1)
        feats["month"] = m
        feats["_row"] = np.arange(p.n_rows)
        parts.append(feats)
    if not parts:
        return table.frame.iloc[0:0].copy()
    feats = pd.concat(parts, ignore_index=True)
    out = table.frame.merge(feats, on=["firm_id", "month"], how="left", validate="one_to_one")
    if out["_row"].isna().any():
        missing = out.loc[out["_row"].isna(), ["firm_id", "month"]].iloc[0]
        raise KeyError(f"firm {missing['firm_id']} month {missing['month']} not in the feature panels")
    return out


# ---------------------------------------------------------------- subgroup means


@dataclass(frozen=True)
class SubgroupSummary:
    feature: str
    level: str
    window: str
    mean: float
    se: float
    n: int


def _decile_labels(x):
    cuts = np.unique(np.quantile(x, np.arange(1, 10) / 10.0))
    codes = np.searchsorted(cuts, x, side="left")
    edges = np.r_[-np.inf, cuts, np.inf]
    labels = [f"({edges[k]:.6g}, {edges[k + 1]:.6g}]" for k in range(edges.size - 1)]
    return codes, labels


def conditional_means(effects: EffectTable, panels, by: str, window, min_n: int = MIN_GROUP,
                      value: str = "alpha"):
    """Mean effect with its standard error per level (or decile bin) of ``by``.

    Returns ``(summaries, n_suppressed)``; groups with fewer than ``min_n``
    rows are left out and counted.
    """
    data = joined(effects, panels, window)
    if by not in data.columns or by in ("_row", "alpha", "log_effect", "y_sum", "y_sam", "firm_id"):
        raise KeyError(f"unknown feature {by!r}")
    name = window if isinstance(window, str) else ",".join(str(m) for m in window_months(window))
    if by in CATEGORICAL:
        keys = data[by].astype(str).to_numpy()
        order = sorted(set(keys), key=lambda s: (len(s), s) if s.isdigit() else (0, s))
        codes = pd.Index(order).get_indexer(keys)
        labels = order
    else:
        codes, labels = _decile_labels(data[by].to_numpy(dtype=float))
    y = data[value].to_numpy(dtype=float)
    out, suppressed = [], 0
    for k, label in enumerate(labels):
        g = y[codes == k]
        if g.size == 0:
            continue
        if g.size < min_n:
            suppressed += 1
            continue
        se = float(g.std(ddof=1) / np.sqrt(g.size))
        out.append(SubgroupSummary(by, label, name, float(g.mean()), se, int(g.size)))
    return out, suppressed


def summaries_frame(summaries) -> pd.DataFrame:
    cols = ["feature", "level", "window", "mean", "se", "n"]
    return pd.DataFrame([asdict(s) for s in summaries], columns=cols)


# ---------------------------------------------------------------- OLS


@dataclass
class OLSResult:
    names: list
    coef: np.ndarray
    se: np.ndarray
    r2: float
    adj_r2: float
    n: int
    dropped: list
    orthogonality: float

    def table(self) -> pd.DataFrame:
        t = np.divide(self.coef, self.se, out=np.full_like(self.coef, np.nan), where=self.se > 0)
        return pd.DataFrame({"term": self.names, "coef": self.coef, "se": self.se, "t": t})

    def to_text(self, title="OLS: log effect on firm characteristics"):
        width = max(len("term"), *(len(n) for n in self.names))
        lines = [title, f"{'term':<{width}}{'coef':>14}{'se':>14}"]
        for n, c, s in zip(self.names, self.coef, self.se):
            lines.append(f"{n:<{width}}{c:>14.6f}{s:>14.6f}")
        lines += [f"{'n':<{width}}{self.n:>14d}", f"{'R2':<{width}}{self.r2:>14.4f}",
                  f"{'adj. R2':<{width}}{self.adj_r2:>14.4f}"]
        if self.dropped:
            lines.append("dropped (collinear): " + ", ".join(self.dropped))
        return "\n".join(lines) + "\n"


def _dummies(values, prefix, drop_first=True):
    levels = sorted(set(values), key=str)
    if drop_first:
        levels = levels[1:]
    vals = np.asarray(values, dtype=object)
    return {f"{prefix}{lv}": (vals == lv).astype(float) for lv in levels}


def ols_design(data: pd.DataFrame, panels) -> tuple[np.ndarray, list]:
    """Regressors: intercept, month, HH_d, HH_p, NP, ND, transport, size and fixed effects."""
    by_month = _panels_by_month(panels)
    cols = {"const": np.ones(len(data))}
    cols.update(_dummies(data["month"].to_numpy(), "month_"))
    for c in ("HH_d", "HH_p", "NP", "ND"):
        cols[c] = data[c].to_numpy(dtype=float)
    transport = [c for c in next(iter(by_month.values())).columns if c.startswith("transport_")]
    month = data["month"].to_numpy()
    rows = data["_row"].to_numpy(dtype=np.int64)
    for c in transport:
        v = np.empty(len(data))
        for m in np.unique(month):
            sel = month == m
            v[sel] = by_month[m].column(c)[rows[sel]]
        cols[c] = v
    cols.update(_dummies(data["size_quartile"].astype(int).map(lambda q: f"Q{q}").to_numpy(), "size_"))
    cols.update(_dummies(data["main_destination"].to_numpy(), "dest_fe_"))
    cols.update(_dummies(data["main_department"].to_numpy(), "dept_fe_"))
    cols.update(_dummies(data["main_industry"].to_numpy(), "industry_fe_"))
    names = list(cols)
    return np.column_stack([cols[n] for n in names]), names


def ols(X, y, names):
    """Least squares by QR after a left-to-right rank scan drops collinear columns."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    kept = independent_columns(X)
    dropped = [names[j] for j in range(X.shape[1]) if j not in set(kept.tolist())]
    A = X[:, kept]
    Q, R = np.linalg.qr(A)
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - A @ beta
    k = A.shape[1]
    sse = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if sst <= 0 else max(0.0, 1.0 - sse / sst)
    if sst > 0 and sse <= 1e-30 * max(sst, 1.0):
        r2 = 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k) if n > k else UNDEFINED
    dof = n - k
    if dof > 0:
        Rinv = np.linalg.solve(R, np.eye(k))
        se = np.sqrt(sse / dof * np.sum(Rinv ** 2, axis=1))
    else:
        se = np.full(k, np.nan)
    norms = np.linalg.norm(A, axis=0)
    orth = float(np.max(np.abs(A.T @ resid) / np.where(norms > 0, norms, 1.0), initial=0.0))
    return OLSResult([names[j] for j in kept], beta, se, r2, adj, n, dropped, orth)


def ols_heterogeneity(effects: EffectTable, panels, window, value: str = "log_effect") -> OLSResult:
    data = joined(effects, panels, window)
    X, names = ols_design(data, panels)
    return ols(X, data[value].to_numpy(dtype=float), names)


# ---------------------------------------------------------------- correlation


def pearson(x, y):
    """Pearson r and its two-sided p-value from the t distribution with ``n - 2`` d.o.f."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        return UNDEFINED, UNDEFINED
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx <= 0 or syy <= 0:
        return UNDEFINED, UNDEFINED
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), n - 2))


def stringency_correlation(effects: EffectTable, panels, covariates, month: int, value: str = "alpha"):
    """Correlation across main destinations between the mean effect and the stringency index.

    Each firm counts toward its main destination (largest export value). The
    index is taken from the label month of the treated cohort. Returns
    ``(r, p_value, per_destination_frame)``.
    """
    data = joined(effects.month(month), panels)
    year = _panels_by_month(panels)[month].year + 1
    cov = covariates.month(year, month)
    per = data.groupby("main_destination", sort=True)[value].agg(["mean", "size"])
    per = per.loc[per.index.isin(cov.index)]
    per["stringency_index"] = cov.loc[per.index, "stringency_index"].to_numpy(dtype=float)
    r, p = pearson(per["stringency_index"].to_numpy(), per["mean"].to_numpy())
    return r, p, per.reset_index().rename(columns={"main_destination": "destination", "size": "n"})


# ---------------------------------------------------------------- regression tree


@dataclass
class Split:
    feature: str
    kind: str  # "categorical" or "numeric"
    left_levels: list = field(default_factory=list)
    threshold: float = math.nan

    def goes_left(self, values):
        if self.kind == "numeric":
            return np.asarray(values, dtype=float) <= self.threshold
        return np.isin(np.asarray(values, dtype=object).astype(str), self.left_levels)

    def describe(self, left=True):
        if self.kind == "numeric":
            return f"{self.feature} {'<=' if left else '>'} {self.threshold:.6g}"
        return f"{self.feature} {'in' if left else 'not in'} {{{', '.join(self.left_levels)}}}"


@dataclass
class Node:
    id: int
    depth: int
    n: int
    share: float
    mean: float
    sse: float
    split: Split | None = None
    left: int = -1
    right: int = -1
    right_levels: list = field(default_factory=list)

    @property
    def is_leaf(self):
        return self.split is None


@dataclass
class EffectTree:
    nodes: list
    min_improvement: float
    max_depth: int
    min_leaf: int
    features: list

    @property
    def root(self):
        return self.nodes[0]

    def leaves(self):
        return [nd for nd in self.nodes if nd.is_leaf]

    def paths(self):
        """Root-to-leaf lists of ``(node, went_left)`` pairs, ending at the leaf."""
        out = []

        def walk(i, acc):
            nd = self.nodes[i]
            if nd.is_leaf:
                out.append(acc + [(nd, None)])
                return
            walk(nd.left, acc + [(nd, True)])
            walk(nd.right, acc + [(nd, False)])

        walk(0, [])
        return out

    def apply(self, data: pd.DataFrame):
        leaf = np.zeros(len(data), dtype=np.int64)
        pending = np.arange(len(data))
        stack = [(0, pending)]
        while stack:
            i, rows = stack.pop()
            nd = self.nodes[i]
            if nd.is_leaf:
                leaf[rows] = i
                continue
            go = nd.split.goes_left(data[nd.split.feature].to_numpy()[rows])
            stack.append((nd.left, rows[go]))
            stack.append((nd.right, rows[~go]))
        return leaf

    def predict(self, data: pd.DataFrame):
        means = np.array([nd.mean for nd in self.nodes])
        return means[self.apply(data)]

    def to_dict(self):
        return {"min_improvement": self.min_improvement, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "features": list(self.features),
                "nodes": [asdict(nd) for nd in self.nodes]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = []

        def walk(i, indent, label):
            nd = self.nodes[i]
            head = f"{'  ' * indent}{label}"
            stats_ = f"n={nd.n} share={nd.share:.4f} mean={nd.mean:.6g}"
            if nd.is_leaf:
                lines.append(f"{head}leaf: {stats_}")
                return
            lines.append(f"{head}{stats_}")
            walk(nd.left, indent + 1, f"[{nd.split.describe(True)}] ")
            walk(nd.right, indent + 1, f"[{nd.split.describe(False)}] ")

        walk(0, 0, "")
        return "\n".join(lines) + "\n"


def reduce_levels(values, max_levels):
    """Keep the ``max_levels`` most frequent levels (ties by label); the rest become ``other``."""
    s = pd.Series(np.asarray(values, dtype=object).astype(str))
    counts = s.value_counts()
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = {k for k, _ in ranked[:max_levels]}
    return np.where(s.isin(keep), s, "other").astype(object)


def tree_frame(effects: EffectTable, panels, explanatory=DEFAULT_EXPLANATORY, window=None):
    data = joined(effects, panels, window)
    for f in explanatory:
        if f not in data.columns:
            raise KeyError(f"unknown feature {f!r}")
        if f in REDUCED_LEVELS:
            data[f] = reduce_levels(data[f], REDUCED_LEVELS[f])
    return data


def _best_categorical(levels_arr, y, min_leaf):
    """Best two-group partition of the levels, as ``(gain, left_levels)``.

    Up to EXHAUSTIVE_LEVELS levels every partition is tried; above that the
    levels are ordered by mean and only contiguous cuts are scanned.
    """
    labels, inv = np.unique(levels_arr, return_inverse=True)
    L = labels.size
    if L < 2:
        return -np.inf, None
    cnt = np.bincount(inv, minlength=L).astype(float)
    sm = np.bincount(inv, weights=y, minlength=L)
    N, S = cnt.sum(), sm.sum()
    parent = S * S / N
    best, best_set = -np.inf, None
    if L <= EXHAUSTIVE_LEVELS:
        # the last level stays right so each partition is visited once
        for mask in range(1, 1 << (L - 1)):
            sel = np.array([(mask >> k) & 1 for k in range(L - 1)] + [0], dtype=bool)
            nl = cnt[sel].sum()
            nr = N - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = sm[sel].sum()
            gain = sl * sl / nl + (S - sl) ** 2 / nr - parent
            if gain > best:
                best, best_set = gain, sel
    else:
        means = sm / cnt
        order = np.lexsort((labels, means))
        cl = np.cumsum(cnt[order])[:-1]
        sl = np.cumsum(sm[order])[:-1]
        ok = (cl >= min_leaf) & (N - cl >= min_leaf)
        gain = np.where(ok, sl * sl / np.where(ok, cl, 1) + (S - sl) ** 2 / np.where(ok, N - cl, 1) - parent,
                        -np.inf)
        k = int(np.argmax(gain))
        if np.isfinite(gain[k]):
            best = float(gain[k])
            best_set = np.zeros(L, dtype=bool)
            best_set[order[: k + 1]] = True
    if best_set is None:
        return -np.inf, None
    return float(best), sorted(labels[best_set].tolist(), key=str)


def _best_numeric(x, y, min_leaf):
    order = np.argsort(x, kind="mergesort")
    xs, ys = x[order], y[order]
    N = xs.size
    S = ys.sum()
    cs = np.cumsum(ys)[:-1]
    nl = np.arange(1, N, dtype=float)
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (N - nl >= min_leaf)
    if not valid.any():
        return -np.inf, math.nan
    gain = np.where(valid, cs * cs / nl + (S - cs) ** 2 / (N - nl) - S * S / N, -np.inf)
    k = int(np.argmax(gain))
    return float(gain[k]), float((xs[k] + xs[k + 1]) / 2.0)


def fit_effect_tree(effects: EffectTable, panels, explanatory: Sequence[str] = DEFAULT_EXPLANATORY,
                    min_improvement: float = 0.01, max_depth: int = 6, min_leaf: int = 20,
                    window=None, target: str = "log_effect") -> EffectTree:
    """Regression tree on the effects with a relative-improvement stopping rule.

    A node splits only if the best split lowers its sum of squared residuals
    by at least ``min_improvement`` times the node's own SSE and both children
    keep ``min_leaf`` rows. Categorical features split on level subsets and
    numeric ones on midpoints between observed values.
    """
    data = tree_frame(effects, panels, explanatory, window)
    return grow_effect_tree(data, explanatory, min_improvement, max_depth, min_leaf, target)


def grow_effect_tree(data: pd.DataFrame, explanatory, min_improvement=0.01, max_depth=6, min_leaf=20,
                     target="log_effect") -> EffectTree:
    y_all = data[target].to_numpy(dtype=float)
    N = y_all.size
    if N == 0:
        raise ValueError("no rows to fit")
    cols = {}
    for f in explanatory:
        if f in CATEGORICAL:
            cols[f] = ("categorical", data[f].astype(str).to_numpy(dtype=object))
        else:
            cols[f] = ("numeric", data[f].to_numpy(dtype=float))
    nodes: list[Node] = []

    def make(rows, depth):
        y = y_all[rows]
        mean = float(y.mean())
        sse = float(np.sum((y - mean) ** 2))
        nd = Node(len(nodes), depth, int(rows.size), rows.size / N, mean, sse)
        nodes.append(nd)
        if depth >= max_depth or rows.size < 2 * min_leaf or sse <= 1e-12 * rows.size:
            return nd.id
        best_gain, best_split = -np.inf, None
        for f in explanatory:
            kind, values = cols[f]
            v = values[rows]
            if kind == "categorical":
                gain, left_levels = _best_categorical(v, y, min_leaf)
                split = Split(f, kind, left_levels=left_levels or [])
            else:
                gain, thr = _best_numeric(v, y, min_leaf)
                split = Split(f, kind, threshold=thr)
            if gain > best_gain:
                best_gain, best_split = gain, split
        if best_split is None or best_gain < min_improvement * sse or best_gain <= 0:
            return nd.id
        go = best_split.goes_left(cols[best_split.feature][1][rows])
        nd.split = best_split
        if best_split.kind == "categorical":
            nd.right_levels = sorted(set(cols[best_split.feature][1][rows][~go].tolist()), key=str)
        nd.left = make(rows[go], depth + 1)
        nd.right = make(rows[~go], depth + 1)
        return nd.id

    make(np.arange(N), 0)
    return EffectTree(nodes, min_improvement, max_depth, min_leaf, list(explanatory))


def split_features_on_paths(tree: EffectTree):
    """Set of split features along each root-to-leaf path."""
    return [{nd.split.feature for nd, went in path if went is not None} for path in tree.paths()]


__all__ = [
    "WINDOWS", "SubgroupSummary", "conditional_means", "summaries_frame", "OLSResult", "ols",
    "ols_design", "ols_heterogeneity", "pearson", "stringency_correlation", "Split", "Node",
    "EffectTree", "fit_effect_tree", "grow_effect_tree", "tree_frame", "reduce_levels",
    "split_features_on_paths", "joined", "window_months",
]
