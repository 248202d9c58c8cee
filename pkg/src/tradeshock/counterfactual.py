"""Shock-unaware and shock-aware prediction machines and the per-firm effects.

The shock-unaware machine (SUM) is trained, month by month, on the cohort of
the year before the treated cohort and scores the treated cohort with its
own-year features; it never sees pandemic covariates. The shock-aware machine
(SAM) is trained on the treated cohort itself, including covariates of the
label month, and scores each firm with a model from a fold that excluded it.
A firm's effect is the difference between the two probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from . import models
from .models.folds import fold_assignment, merge_degenerate
from .panel import FLOAT_FORMAT, FeaturePanel
from .parallel import pmap

logger = logging.getLogger(__name__)

EPS = 1e-6
EFFECT_COLUMNS = ("firm_id", "month", "y_sum", "y_sam", "alpha", "log_effect")
COVARIATE_PREFIXES = ("cov_", "covmiss_", "covw_")


class ProtocolError(ValueError):
    pass


def _default_spec():
    return models.ClassifierSpec("logit_lasso")


@dataclass(frozen=True)
class ProtocolConfig:
    train_cohort_year: int
    treated_cohort_year: int
    months: tuple = (1, 2, 3, 4, 5, 6, 7)
    model_spec: models.ClassifierSpec = field(default_factory=_default_spec)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.treated_cohort_year != self.train_cohort_year + 1:
            raise ProtocolError("treated_cohort_year must be train_cohort_year + 1")
        if self.folds < 2:
            raise ProtocolError("folds must be at least 2")
        object.__setattr__(self, "months", tuple(int(m) for m in self.months))


class EffectTable:
    """Per firm-month probabilities from both machines and their differences."""

    def __init__(self, frame: pd.DataFrame):
        frame = frame.loc[:, list(EFFECT_COLUMNS)]
        self.frame = frame.sort_values(["month", "firm_id"], kind="mergesort").reset_index(drop=True)

    def __len__(self):
        return len(self.frame)

    @property
    def alpha(self):
        return self.frame["alpha"].to_numpy()

    @property
    def log_effect(self):
        return self.frame["log_effect"].to_numpy()

    @property
    def months(self):
        return sorted(self.frame["month"].unique().tolist())

    def month(self, m):
        return EffectTable(self.frame.loc[self.frame["month"] == m])

    def window(self, months):
        return EffectTable(self.frame.loc[self.frame["month"].isin(list(months))])

    @staticmethod
    def concat(tables):
        return EffectTable(pd.concat([t.frame for t in tables], ignore_index=True))

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    @classmethod
    def read_csv(cls, path):
        return cls(pd.read_csv(path, dtype={"firm_id": str}, keep_default_na=False))


def _check_sum_blind(panel: FeaturePanel):
    for name, group in zip(panel.columns, panel.groups):
        if group == "SAM" or name.startswith(COVARIATE_PREFIXES):
            raise models.SchemaError(f"shock-unaware machine given pandemic covariate column {name!r}")


def _by_month(panels):
    if isinstance(panels, FeaturePanel):
        return {panels.month: panels}
    if isinstance(panels, Mapping):
        return dict(panels)
    return {p.month: p for p in panels}


def fit_sum(config: ProtocolConfig, panel_train, panel_treated):
    """Train one SUM per month and score the treated cohort.

    Returns ``(models_by_month, y_sum_by_month)``. Months missing from either
    side are skipped with a warning.
    """
    train, treated = _by_month(panel_train), _by_month(panel_treated)
    months = []
    for m in config.months:
        if m not in train or m not in treated:
            logger.warning("SUM: month %d missing from the %s panel; skipped", m,
                           "training" if m not in train else "treated")
            continue
        _check_sum_blind(train[m])
        _check_sum_blind(treated[m])
        if list(train[m].columns) != list(treated[m].columns):
            raise models.SchemaError(f"month {m}: training and treated panels have different columns")
        months.append(m)

    def one(m):
        model = models.fit(config.model_spec, train[m])
        return model, models.predict_proba(model, treated[m])

    out = pmap(one, months)
    return {m: r[0] for m, r in zip(months, out)}, {m: r[1] for m, r in zip(months, out)}


def out_of_fold(spec, panel: FeaturePanel, folds: int, seed: int):
    """Out-of-fold probabilities for every row of ``panel``."""
    y = np.asarray(panel.y, dtype=np.float64)
    ids = np.asarray(panel.row_ids, dtype=object)
    assign = merge_degenerate(fold_assignment(ids, folds, seed, salt="sam"), y, logger)
    parts = np.unique(assign)

    def one(k):
        train = assign != k
        model = models.fit(spec, panel.X[train], y[train], panel.columns, list(ids[train]))
        return models.predict_proba(model, panel.X[~train], panel.columns)

    out = np.empty(len(y))
    for k, pred in zip(parts, pmap(one, parts)):
        out[assign == k] = pred
    return out


def fit_sam(config: ProtocolConfig, panel_treated_aware, require_covariates=True):
    """Out-of-fold SAM probabilities per month, ``{month: y_sam}``."""
    panels = _by_month(panel_treated_aware)
    result = {}
    months = []
    for m in config.months:
        if m not in panels:
            logger.warning("SAM: month %d missing from the treated panel; skipped", m)
            continue
        if require_covariates and not panels[m].sam_only_columns:
            raise models.SchemaError(f"month {m}: shock-aware panel has no pandemic covariates")
        months.append(m)
    for m in months:
        result[m] = out_of_fold(config.model_spec, panels[m], config.folds, config.seed)
    return result


def effects(y_sum, y_sam, firm_ids, month) -> EffectTable:
    """Per-row ``alpha = y_sam - y_sum`` and the difference of clamped log probabilities."""
    y_sum = np.asarray(y_sum, dtype=np.float64)
    y_sam = np.asarray(y_sam, dtype=np.float64)
    firm_ids = np.asarray(firm_ids, dtype=object)
    if not (y_sum.shape == y_sam.shape == firm_ids.shape):
        raise ValueError(f"length mismatch: y_sum {y_sum.size}, y_sam {y_sam.size}, firms {firm_ids.size}")
    months = np.broadcast_to(np.asarray(month, dtype=np.int64), y_sum.shape)
    frame = pd.DataFrame({
        "firm_id": firm_ids,
        "month": months,
        "y_sum": y_sum,
        "y_sam": y_sam,
        "alpha": y_sam - y_sum,
        "log_effect": np.log(np.maximum(y_sam, EPS)) - np.log(np.maximum(y_sum, EPS)),
    })
    return EffectTable(frame)


def monthly_average(table: EffectTable) -> pd.DataFrame:
    """Mean effect, its standard error ``sd/sqrt(n)`` and the count, per month."""
    if len(table) == 0:
        raise ValueError("empty effect table")
    rows = []
    for m, g in table.frame.groupby("month", sort=True):
        a = g["alpha"].to_numpy()
        se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
        rows.append({"month": int(m), "mean_alpha": float(a.mean()), "se": se, "n": int(a.size)})
    return pd.DataFrame(rows, columns=["month", "mean_alpha", "se", "n"])


def estimate_effects(config: ProtocolConfig, train_panels, treated_panels, aware_panels):
    """Both machines for every configured month, merged into one EffectTable.

    Returns ``(table, sum_models)``.
    """
    sum_models, y_sum = fit_sum(config, train_panels, treated_panels)
    aware = _by_month(aware_panels)
    y_sam = fit_sam(config, {m: aware[m] for m in y_sum if m in aware})
    treated = _by_month(treated_panels)
    tables = []
    for m in sorted(y_sum):
        if m not in y_sam:
            continue
        if list(treated[m].firm_ids) != list(aware[m].firm_ids):
            raise ProtocolError(f"month {m}: treated and shock-aware panels list different firms")
        tables.append(effects(y_sum[m], y_sam[m], treated[m].firm_ids, m))
    return EffectTable.concat(tables), sum_models


def calibration_diagnostic(table: EffectTable, treated_panels) -> pd.DataFrame:
    """Observed survival rate next to each machine's mean prediction and Brier score, per month.

    On months without a shock both machines should track the observed rate;
    a gap between them there signals different prediction errors.
    """
    treated = _by_month(treated_panels)
    rows = []
    for m in table.months:
        t = table.month(m).frame
        panel = treated[m]
        outcome = pd.Series(panel.y, index=pd.Index(panel.firm_ids)).loc[t["firm_id"]].to_numpy(float)
        rows.append({
            "month": m,
            "observed": float(outcome.mean()),
            "mean_y_sum": float(t["y_sum"].mean()),
            "mean_y_sam": float(t["y_sam"].mean()),
            "brier_sum": float(np.mean((t["y_sum"].to_numpy() - outcome) ** 2)),
            "brier_sam": float(np.mean((t["y_sam"].to_numpy() - outcome) ** 2)),
        })
    return pd.DataFrame(rows)
