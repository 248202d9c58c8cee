"""Six probabilistic binary classifiers behind one fit / predict_proba contract.

Kinds: ``logit``, ``logit_lasso``, ``tree``, ``random_forest``, ``svm`` and
``gradient_boosting``. Hyperparameters are validated per kind before fitting;
fitted models are immutable, serializable to JSON and reload to bit-identical
predictions.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lasso, logit, svm, trees
from .folds import holdout_mask

KINDS = ("logit", "logit_lasso", "tree", "random_forest", "svm", "gradient_boosting")
FORMAT = "tradeshock-classifier"
FORMAT_VERSION = 1

DEFAULTS = {
    "logit": {"max_iter": 100, "tol": 1e-8},
    "logit_lasso": {"n_lambda": 100, "min_ratio": 1e-4, "n_folds": 5, "lam": None},
    "tree": {"max_depth": 8, "min_leaf": 10},
    "random_forest": {"n_trees": 500, "max_features": None, "min_leaf": 5, "max_depth": 64},
    "svm": {"C": 1.0, "n_iter": 1000, "holdout": 0.2},
    "gradient_boosting": {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 5},
}

# (type, lower bound, lower inclusive, upper bound, nullable)
_RULES = {
    "max_iter": (int, 1, True, None, False),
    "tol": (float, 0.0, False, None, False),
    "n_lambda": (int, 2, True, None, False),
    "min_ratio": (float, 0.0, False, 1.0, False),
    "n_folds": (int, 2, True, None, False),
    "lam": (float, 0.0, True, None, True),
    "max_depth": (int, 0, True, None, False),
    "min_leaf": (int, 1, True, None, False),
    "n_trees": (int, 1, True, None, False),
    "max_features": (int, 1, True, None, True),
    "C": (float, 0.0, False, None, False),
    "n_iter": (int, 1, True, None, False),
    "holdout": (float, 0.0, False, 1.0, False),
    "n_rounds": (int, 1, True, None, False),
    "learning_rate": (float, 0.0, False, None, False),
}


class SpecError(ValueError):
    """Invalid classifier specification; ``field`` holds the offending path."""

    def __init__(self, field_path, msg):
        super().__init__(f"{field_path}: {msg}")
        self.field = field_path


class SchemaError(ValueError):
    """Feature matrix does not match what the model expects."""


class UnfitError(RuntimeError):
    """The model cannot be fitted to the given data."""


class UnsupportedOperation(TypeError):
    pass


def _check_value(name, value):
    typ, lo, lo_incl, hi, nullable = _RULES[name]
    path = f"hyperparameters.{name}"
    if value is None:
        if nullable:
            return None
        raise SpecError(path, "must not be null")
    if isinstance(value, bool):
        raise SpecError(path, f"expected {typ.__name__}, got bool")
    if typ is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, (int, np.integer)):
            raise SpecError(path, f"expected integer, got {value!r}")
        value = int(value)
    else:
        if not isinstance(value, (int, float, np.integer, np.floating)):
            raise SpecError(path, f"expected number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise SpecError(path, "must be finite")
    if lo is not None and (value < lo or (value == lo and not lo_incl)):
        raise SpecError(path, f"must be {'>=' if lo_incl else '>'} {lo}")
    if hi is not None and value >= hi:
        raise SpecError(path, f"must be < {hi}")
    return value


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError("kind", f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        unknown = sorted(set(self.hyperparameters) - set(DEFAULTS[self.kind]))
        if unknown:
            raise SpecError(f"hyperparameters.{unknown[0]}", f"not a {self.kind} hyperparameter")
        merged = dict(DEFAULTS[self.kind])
        for name, value in self.hyperparameters.items():
            merged[name] = _check_value(name, value)
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise SpecError("seed", "expected integer")
        object.__setattr__(self, "hyperparameters", merged)
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self):
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)))


def default_specs(seed=0):
    return [ClassifierSpec(kind, seed=seed) for kind in KINDS]


@dataclass(frozen=True)
class TrainedClassifier:
    spec: ClassifierSpec
    feature_names: tuple
    params: dict
    selected_features: tuple = ()

    @property
    def kind(self):
        return self.spec.kind

    def predict_proba(self, X, feature_names=None):
        return predict_proba(self, X, feature_names)

    def to_dict(self):
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "spec": self.spec.to_dict(),
            "feature_names": list(self.feature_names),
            "selected_features": list(self.selected_features),
            "params": _encode(self.params),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise SchemaError("not a serialized classifier")
        if d.get("version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported classifier format version {d.get('version')!r}")
        return cls(ClassifierSpec.from_dict(d["spec"]), tuple(d["feature_names"]),
                   _decode(d["params"]), tuple(d["selected_features"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _encode(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            out[k] = {"array": v.tolist(), "dtype": str(v.dtype)}
        elif isinstance(v, trees.Tree):
            out[k] = {"tree": v.to_dict()}
        elif isinstance(v, list) and v and isinstance(v[0], trees.Tree):
            out[k] = {"trees": [t.to_dict() for t in v]}
        elif isinstance(v, svm.LinearSVM):
            out[k] = {"svm": v.to_dict()}
        else:
            out[k] = v
    return out


def _decode(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, dict) and "array" in v:
            out[k] = np.asarray(v["array"], dtype=v["dtype"])
        elif isinstance(v, dict) and "tree" in v:
            out[k] = trees.Tree.from_dict(v["tree"])
        elif isinstance(v, dict) and "trees" in v:
            out[k] = [trees.Tree.from_dict(t) for t in v["trees"]]
        elif isinstance(v, dict) and "svm" in v:
            out[k] = svm.LinearSVM.from_dict(v["svm"])
        else:
            out[k] = v
    return out


def _unpack(X, feature_names):
    """Matrix and column names from a FeaturePanel or an array."""
    if hasattr(X, "columns") and hasattr(X, "X"):
        return np.asarray(X.X, dtype=np.float64), list(X.columns)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SchemaError(f"expected a 2-d feature matrix, got {X.ndim} dimensions")
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise SchemaError(f"{len(names)} feature names for {X.shape[1]} columns")
    return X, names


def _check_finite(X, names):
    bad = ~np.isfinite(X)
    if bad.any():
        j = int(np.flatnonzero(bad.any(axis=0))[0])
        raise SchemaError(f"column {names[j]!r} contains missing or non-finite values")


def content_row_ids(X, y):
    """Row identifiers derived from row contents, so fold assignment survives reordering."""
    ids = []
    for row, label in zip(np.ascontiguousarray(X), y):
        h = hashlib.blake2b(row.tobytes(), digest_size=8)
        h.update(np.float64(label).tobytes())
        ids.append(h.hexdigest())
    return ids


def fit(spec: ClassifierSpec, X, y=None, feature_names=None, row_ids=None) -> TrainedClassifier:
    """Fit ``spec`` to features ``X`` (array or FeaturePanel) and 0/1 labels ``y``.

    ``y`` defaults to the panel's outcome when ``X`` is a FeaturePanel.
    ``row_ids`` key the internal folds and holdouts; panels supply their own
    and arrays default to content hashes.
    """
    if hasattr(X, "row_ids"):
        if row_ids is None:
            row_ids = X.row_ids
        if y is None:
            y = X.y
    if y is None:
        raise SchemaError("labels are required for an array design")
    X, names = _unpack(X, feature_names)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise SchemaError(f"{y.size} labels for {X.shape[0]} rows")
    if X.shape[0] == 0:
        raise UnfitError("no training rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise SchemaError("labels must be 0 or 1")
    _check_finite(X, names)
    if row_ids is None:
        row_ids = content_row_ids(X, y)
    hp = spec.hyperparameters
    names = tuple(names)

    if y.min() == y.max():
        if spec.kind == "svm":
            raise UnfitError("svm: all labels equal, hinge loss has no separating direction")
        return TrainedClassifier(spec, names, {"constant": float(y[0])})

    selected = ()
    if spec.kind == "logit":
        b0, coef, _, converged, n_iter = logit.fit_irls(X, y, hp["max_iter"], hp["tol"])
        params = {"intercept": b0, "coef": coef, "converged": bool(converged), "n_iter": int(n_iter)}
    elif spec.kind == "logit_lasso":
        b0, coef, info = lasso.fit_logit_lasso(X, y, row_ids, hp["n_lambda"], hp["min_ratio"],
                                               hp["n_folds"], spec.seed, hp["lam"])
        params = {"intercept": float(b0), "coef": coef, "lambda": info["lambda"],
                  "lambda_max": info["lambda_max"]}
        selected = tuple(n for n, c in zip(names, coef) if c != 0.0)
    elif spec.kind == "tree":
        params = {"tree": trees.fit_tree(X, y, hp["max_depth"], hp["min_leaf"])}
    elif spec.kind == "random_forest":
        params = {"trees": trees.fit_forest(X, y, hp["n_trees"], hp["max_features"], hp["min_leaf"],
                                            hp["max_depth"], spec.seed)}
    elif spec.kind == "gradient_boosting":
        f0, fitted = trees.fit_boosting(X, y, hp["n_rounds"], hp["max_depth"], hp["learning_rate"],
                                        hp["min_leaf"])
        params = {"f0": f0, "trees": fitted}
    else:
        hold = holdout_mask(row_ids, hp["holdout"], spec.seed)
        if y[~hold].min() == y[~hold].max():
            raise UnfitError("svm: training part after the calibration holdout has one class")
        params = {"svm": svm.LinearSVM.fit(X, y, hold, hp["C"], hp["n_iter"])}
    return TrainedClassifier(spec, names, params, selected)


def _check_schema(model, names):
    expected = list(model.feature_names)
    for i in range(max(len(expected), len(names))):
        want = expected[i] if i < len(expected) else None
        got = names[i] if i < len(names) else None
        if want != got:
            col = got if got is not None else want
            raise SchemaError(f"feature schema mismatch at position {i}: column {col!r} (expected {want!r})")


def predict_proba(model: TrainedClassifier, X, feature_names=None) -> np.ndarray:
    """Positive-class probabilities, one per row of ``X``.

    Column names come from a FeaturePanel or ``feature_names``; a bare array
    is taken to be in fit-time order and only its width is checked.
    """
    if feature_names is None and not hasattr(X, "columns"):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2 and X.shape[1] == len(model.feature_names):
            feature_names = model.feature_names
    X, names = _unpack(X, feature_names)
    _check_schema(model, names)
    _check_finite(X, names)
    p = model.params
    if "constant" in p:
        out = np.full(X.shape[0], p["constant"])
    elif model.kind in ("logit", "logit_lasso"):
        out = logit.sigmoid(p["intercept"] + X @ p["coef"])
    elif model.kind == "tree":
        out = p["tree"].predict(X)
    elif model.kind == "random_forest":
        out = trees.forest_predict(p["trees"], X)
    elif model.kind == "gradient_boosting":
        out = trees.boosting_predict(p["f0"], p["trees"], X)
    else:
        out = p["svm"].predict_proba(X)
    return np.clip(out, 0.0, 1.0)


def selected_variables(model: TrainedClassifier) -> list:
    """Features with a nonzero coefficient at the chosen penalty (logit_lasso only)."""
    if model.kind != "logit_lasso":
        raise UnsupportedOperation(f"selected_variables is defined for logit_lasso, not {model.kind}")
    return list(model.selected_features)


__all__ = [
    "KINDS", "DEFAULTS", "ClassifierSpec", "TrainedClassifier", "SpecError", "SchemaError",
    "UnfitError", "UnsupportedOperation", "fit", "predict_proba", "selected_variables",
    "default_specs", "content_row_ids",
]
