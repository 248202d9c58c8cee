"""Command-line pipeline: generate, featurize, descriptives, train, evaluate, superlearner,
effects, placebo, tree and report.

Every stage writes under ``<root>/<stage>/`` and records its outputs (with
SHA-256 digests) in ``<root>/manifest.json``; later stages locate their inputs
through the manifest only. The artifact root is ``--root``, else the
``TRADESHOCK_ROOT`` environment variable, else ``./artifacts``.

Configuration precedence, highest first: ``--seed`` / ``--set section.key=value``
flags, the TOML config file, built-in defaults.

Exit codes: 0 success, 2 missing upstream stage, 3 configuration error,
4 data validation failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, counterfactual, ensemble, heterogeneity, metrics, models, panel, plots, synthgen
from .models import ClassifierSpec, TrainedClassifier
from .parallel import set_threads

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("tradeshock")

EXIT_OK, EXIT_MISSING, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4
ROOT_ENV = "TRADESHOCK_ROOT"
MANIFEST = "manifest.json"
TIMINGS = "timings.json"
CONFIG_DIR = Path(__file__).parent / "configs"

DEPENDENCIES = {
    "generate": (),
    "featurize": ("generate",),
    "descriptives": ("featurize",),
    "train": ("featurize",),
    "evaluate": ("featurize", "train"),
    "superlearner": ("featurize",),
    "effects": ("featurize", "train"),
    "placebo": ("featurize", "effects"),
    "tree": ("featurize", "effects"),
    "report": ("evaluate", "superlearner", "effects", "placebo", "tree"),
}
STAGES = tuple(DEPENDENCIES)
REPORT_FILES = ("metrics.txt", "ensemble_weights.txt", "monthly_effects.svg", "effect_tree.svg",
                "ols.txt", "stringency_correlation.txt")

DEFAULT_CONFIG = {
    "run": {
        "seed": 7,
        "train_cohort_year": 2018,
        "treated_cohort_year": 2019,
        "months": [1, 2, 3, 4, 5, 6, 7],
        "placebo_months": [1, 2, 3],
        "treated_months": [4, 5, 6, 7],
        "folds": 5,
        "threshold": 0.5,
    },
    "inputs": {"transactions": "", "covariates": ""},
    "models": {
        "zoo": list(models.KINDS),
        "effect_model": "logit_lasso",
        "hyperparameters": {},
    },
    "descriptives": {"quarter": 2},
    "tree": {
        "min_improvement": 0.01,
        "max_depth": 6,
        "min_leaf": 20,
        "explanatory": list(heterogeneity.DEFAULT_EXPLANATORY),
    },
    "generator": {},
}


class ConfigSchemaError(Exception):
    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


class MissingStage(Exception):
    def __init__(self, stages):
        super().__init__(", ".join(stages))
        self.stages = list(stages)


class DataError(Exception):
    pass


# ---------------------------------------------------------------- configuration


def _check_type(path, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = True
    if not ok:
        raise ConfigSchemaError(path, f"expected {type(default).__name__}, got {value!r}")
    return value


def _merge(base, update, path=""):
    for key, value in update.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigSchemaError(here, "unknown field")
        if isinstance(base[key], dict) and key not in ("generator", "hyperparameters"):
            if not isinstance(value, dict):
                raise ConfigSchemaError(here, "expected a table")
            _merge(base[key], value, here)
        elif key in ("generator", "hyperparameters"):
            if not isinstance(value, dict):
                raise ConfigSchemaError(here, "expected a table")
            base[key].update(value)
        else:
            base[key] = _check_type(here, value, base[key])


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set_path(data, dotted, value):
    parts = dotted.split(".")
    cur = data
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigSchemaError(dotted, "not a table")
    cur[parts[-1]] = value


def load_config(path, overrides=(), seed=None):
    """Resolved configuration dict; raises ConfigSchemaError with the offending field path."""
    path = Path(path)
    if not path.exists() and (CONFIG_DIR / f"{path.name}.toml").exists():
        path = CONFIG_DIR / f"{path.name}.toml"
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigSchemaError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigSchemaError("config", f"invalid TOML: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigSchemaError(item, "override must look like section.key=value")
        key, text = item.split("=", 1)
        _set_path(raw, key.strip(), _parse_value(text.strip()))
    if seed is not None:
        _set_path(raw, "run.seed", int(seed))
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    _merge(cfg, raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    run = cfg["run"]
    if run["treated_cohort_year"] != run["train_cohort_year"] + 1:
        raise ConfigSchemaError("run.treated_cohort_year", "must equal run.train_cohort_year + 1")
    for key in ("months", "placebo_months", "treated_months"):
        if any(not isinstance(m, int) or not 1 <= m <= 12 for m in run[key]):
            raise ConfigSchemaError(f"run.{key}", "months must be integers in 1-12")
    if run["folds"] < 2:
        raise ConfigSchemaError("run.folds", "must be at least 2")
    zoo = cfg["models"]["zoo"]
    for i, kind in enumerate(zoo):
        if kind not in models.KINDS:
            raise ConfigSchemaError(f"models.zoo[{i}]", f"unknown model kind {kind!r}")
    if cfg["models"]["effect_model"] not in models.KINDS:
        raise ConfigSchemaError("models.effect_model", "unknown model kind")
    for kind, hp in cfg["models"]["hyperparameters"].items():
        if kind not in models.KINDS:
            raise ConfigSchemaError(f"models.hyperparameters.{kind}", "unknown model kind")
        try:
            ClassifierSpec(kind, dict(hp))
        except models.SpecError as exc:
            raise ConfigSchemaError(f"models.{exc.field.replace('hyperparameters', f'hyperparameters.{kind}')}",
                                    str(exc).split(": ", 1)[1]) from None
    if cfg["descriptives"]["quarter"] not in (1, 2, 3, 4):
        raise ConfigSchemaError("descriptives.quarter", "must be 1-4")
    for i, f in enumerate(cfg["tree"]["explanatory"]):
        if not isinstance(f, str):
            raise ConfigSchemaError(f"tree.explanatory[{i}]", "expected a feature name")
    generator_config(cfg)


def generator_config(cfg):
    gen = dict(cfg["generator"])
    gen.setdefault("seed", cfg["run"]["seed"])
    try:
        return synthgen.GeneratorConfig.from_mapping(gen, prefix="generator.")
    except synthgen.ConfigError as exc:
        raise ConfigSchemaError(exc.field, str(exc).split(": ", 1)[1]) from None


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def spec_for(cfg, kind):
    hp = dict(cfg["models"]["hyperparameters"].get(kind, {}))
    return ClassifierSpec(kind, hp, seed=cfg["run"]["seed"])


# ---------------------------------------------------------------- manifest


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    """Artifact root plus its manifest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / MANIFEST
        self.manifest = json.loads(path.read_text()) if path.exists() else {"stages": {}}

    def stage_dir(self, stage):
        d = self.root / stage
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        return d

    def require(self, stage):
        missing = []
        for dep in DEPENDENCIES[stage]:
            entry = self.manifest["stages"].get(dep)
            if entry is None or any(not (self.root / o["path"]).exists() for o in entry["outputs"].values()):
                missing.append(dep)
        if missing:
            raise MissingStage(missing)

    def output(self, stage, name):
        return self.root / self.manifest["stages"][stage]["outputs"][name]["path"]

    def outputs(self, stage):
        return {k: self.root / v["path"] for k, v in self.manifest["stages"][stage]["outputs"].items()}

    def record(self, stage, cfg, outdir, inputs, seconds):
        outputs = {}
        for p in sorted(Path(outdir).rglob("*")):
            if p.is_file():
                rel = p.relative_to(self.root).as_posix()
                outputs[p.relative_to(outdir).as_posix()] = {"path": rel, "sha256": sha256(p)}
        self.manifest.update({
            "tool": "tradeshock",
            "version": __version__,
            "config_hash": config_hash(cfg),
            "seed": cfg["run"]["seed"],
            "config": cfg,
        })
        self.manifest["stages"][stage] = {
            "config_hash": config_hash(cfg),
            "inputs": {k: {"path": self._portable(v), "sha256": sha256(v)} for k, v in sorted(inputs.items())},
            "outputs": outputs,
        }
        # invalidate stages downstream of this one
        for later in STAGES:
            if later != stage and stage in _ancestors(later):
                self.manifest["stages"].pop(later, None)
        self._write()
        # wall-clock times live outside the manifest so that it stays byte-stable
        tpath = self.root / TIMINGS
        timings = json.loads(tpath.read_text()) if tpath.exists() else {}
        timings[stage] = round(seconds, 3)
        tpath.write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")

    def _portable(self, path):
        path = Path(path).resolve()
        try:
            return path.relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return str(path)

    def source(self, name):
        p = Path(self.manifest["stages"]["featurize"]["inputs"][name]["path"])
        return p if p.is_absolute() else self.root / p

    def _write(self):
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.root / MANIFEST)


def _ancestors(stage):
    out = set()
    for dep in DEPENDENCIES[stage]:
        out.add(dep)
        out |= _ancestors(dep)
    return out


# ---------------------------------------------------------------- helpers


def _write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=panel.FLOAT_FORMAT, lineterminator="\n")


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _clean_nan(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _clean_nan(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean_nan(v) for v in obj]
    return obj


def _source_files(ws, cfg):
    tx, cov = cfg["inputs"]["transactions"], cfg["inputs"]["covariates"]
    if tx:
        if not cov:
            raise ConfigSchemaError("inputs.covariates", "required when inputs.transactions is set")
        return {"transactions": Path(tx), "covariates": Path(cov)}
    return {"transactions": ws.output("generate", "transactions.csv"),
            "covariates": ws.output("generate", "covariates.csv")}


def _ingest(sources):
    try:
        tx = panel.ingest_transactions(sources["transactions"])
        cov = panel.ingest_covariates(sources["covariates"])
    except panel.IngestError as exc:
        raise DataError(str(exc)) from None
    return tx, cov


def _panel_name(kind, year, month):
    return f"panels/{kind}_{year}_{month:02d}.csv"


def _load_panels(ws, cfg, kind):
    run = cfg["run"]
    year = run["train_cohort_year"] if kind == "train" else run["treated_cohort_year"]
    out = {}
    for m in run["months"]:
        p = panel.FeaturePanel.read_csv(ws.output("featurize", _panel_name(kind, year, m)))
        out[m] = p
    return out


def _model_name(kind, month):
    return f"models/{kind}_m{month:02d}.json"


# ---------------------------------------------------------------- stages


def stage_generate(ws, cfg, out):
    world = synthgen.generate(generator_config(cfg))
    world.write(out)
    return {}


def stage_featurize(ws, cfg, out):
    sources = _source_files(ws, cfg)
    ingested, cov = _ingest(sources)
    report = [ingested.report(), f"{len(cov.covariates)} destination-months of covariates, "
              f"{len(cov.rejects)} covariate rows rejected"]
    report += [f"  covariates line {r.line}: {r.reason}" for r in cov.rejects]
    (out / "ingest_report.txt").write_text("\n".join(report) + "\n")
    builder = panel.PanelBuilder(ingested.records, cov.covariates)
    run = cfg["run"]
    (out / "panels").mkdir()
    summary = []
    for m in run["months"]:
        try:
            train = builder.build(run["train_cohort_year"], m, shock_aware=False)
            treated = builder.build(run["treated_cohort_year"], m, shock_aware=True)
        except panel.CovariatesMissingError as exc:
            raise DataError(str(exc)) from None
        except ValueError as exc:
            raise DataError(str(exc)) from None
        train.to_csv(out / _panel_name("train", run["train_cohort_year"], m))
        treated.to_csv(out / _panel_name("treated", run["treated_cohort_year"], m))
        summary.append({"month": m, "train_rows": train.n_rows, "train_success": float(np.mean(train.y)),
                        "treated_rows": treated.n_rows, "treated_success": float(np.mean(treated.y)),
                        "sum_columns": len(treated.sum_columns),
                        "sam_columns": len(treated.columns)})
    _write_csv(pd.DataFrame(summary), out / "panel_summary.csv")
    return sources


def stage_descriptives(ws, cfg, out):
    ingested, _ = _ingest({k: ws.source(k) for k in ("transactions", "covariates")})
    records = ingested.records
    q = cfg["descriptives"]["quarter"]
    years = sorted(set(records.frame["year"].unique().tolist()))
    pairs = [(a, a + 1) for a in years if a + 1 in years]
    status_rows = []
    for a, b in pairs:
        st = panel.classify_firm_status(records.select(years=[a]), records.select(years=[b]), q)
        s = panel.status_summary(st)
        s.insert(0, "years", f"{a}-{b}")
        status_rows.append(s)
    _write_csv(pd.concat(status_rows, ignore_index=True), out / "firm_status.csv")
    for a, b in pairs:
        for g in ("destination", "sector"):
            gr = panel.growth_by_group(records.select(years=[a]), records.select(years=[b]), g, q)
            _write_csv(gr, out / f"growth_{g}_{a}_{b}.csv")
    monthly = (records.frame.groupby(["year", "month"])
               .agg(exporters=("firm_id", "nunique"), value=("fob_value_usd", "sum"),
                    transactions=("firm_id", "size")).reset_index())
    _write_csv(monthly, out / "monthly_totals.csv")
    return {}


def stage_train(ws, cfg, out):
    run = cfg["run"]
    kinds = list(dict.fromkeys(cfg["models"]["zoo"] + [cfg["models"]["effect_model"]]))
    train = _load_panels(ws, cfg, "train")
    (out / "models").mkdir()
    selected = []
    for m in run["months"]:
        p = train[m].sum_view()
        for kind in kinds:
            try:
                model = models.fit(spec_for(cfg, kind), p)
            except models.UnfitError as exc:
                logger.warning("month %d: %s not fitted (%s)", m, kind, exc)
                continue
            model.save(out / _model_name(kind, m))
            if kind == "logit_lasso":
                names = models.selected_variables(model)
                coef = dict(zip(model.feature_names, model.params["coef"]))
                selected += [{"month": m, "variable": v, "coef": float(coef[v])} for v in names]
    _write_csv(pd.DataFrame(selected, columns=["month", "variable", "coef"]), out / "selected_variables.csv")
    return {}


def stage_evaluate(ws, cfg, out):
    run = cfg["run"]
    treated = _load_panels(ws, cfg, "treated")
    models_dir = ws.root / "train"
    rows, tables = [], []
    for m in run["months"]:
        p = treated[m].sum_view()
        reports, notes = {}, []
        for kind in cfg["models"]["zoo"]:
            path = models_dir / _model_name(kind, m)
            if not path.exists():
                continue
            model = TrainedClassifier.load(path)
            scores = models.predict_proba(model, p)
            r = metrics.evaluate(scores, p.y, run["threshold"])
            reports[kind] = r
            flag = metrics.degenerate(scores, run["threshold"])
            if flag:
                notes.append(f"  note: {kind} is degenerate ({flag})\n")
            rows.append({"month": m, "model": kind, **r.to_dict(), "degenerate": flag or ""})
        tables.append(metrics.format_table(reports, title=f"Month {m}: SUM models on the treated cohort")
                      + "".join(notes))
    frame = pd.DataFrame(rows)
    _write_csv(frame, out / "metrics.csv")
    _write_json(_clean_nan(rows), out / "metrics.json")
    (out / "metrics_table.txt").write_text("\n".join(tables))
    return {}


def stage_superlearner(ws, cfg, out):
    run = cfg["run"]
    train = _load_panels(ws, cfg, "train")
    specs = [spec_for(cfg, k) for k in cfg["models"]["zoo"]]
    names = ensemble.member_names(specs)
    weights = {}
    for m in run["months"]:
        p = train[m].sum_view()
        Z = ensemble.level_one(specs, p, folds=run["folds"], seed=run["seed"])
        ew = ensemble.solve_weights(Z, p.y, names)
        weights[m] = ew
        z = pd.DataFrame(Z, columns=names)
        z.insert(0, "firm_id", p.firm_ids)
        z.insert(1, "success", p.y)
        _write_csv(z, out / f"level_one_m{m:02d}.csv")
    _write_json({str(m): w.to_dict() for m, w in weights.items()}, out / "weights.json")
    (out / "weights_table.txt").write_text(ensemble.weights_table(
        {plots.MONTH_NAMES[m - 1]: w for m, w in weights.items()}))
    return {}


def stage_effects(ws, cfg, out):
    run = cfg["run"]
    kind = cfg["models"]["effect_model"]
    treated = _load_panels(ws, cfg, "treated")
    spec = spec_for(cfg, kind)
    tables = []
    for m in run["months"]:
        path = ws.root / "train" / _model_name(kind, m)
        if not path.exists():
            raise MissingStage(["train"])
        sum_model = TrainedClassifier.load(path)
        y_sum = models.predict_proba(sum_model, treated[m].sum_view())
        if not treated[m].sam_only_columns:
            raise DataError(f"month {m}: treated panel has no pandemic covariates")
        y_sam = counterfactual.out_of_fold(spec, treated[m], run["folds"], run["seed"])
        tables.append(counterfactual.effects(y_sum, y_sam, treated[m].firm_ids, m))
    table = counterfactual.EffectTable.concat(tables)
    table.to_csv(out / "effects.csv")
    monthly = counterfactual.monthly_average(table)
    _write_csv(monthly, out / "monthly.csv")
    _write_json(monthly.to_dict(orient="records"), out / "monthly.json")
    _write_csv(counterfactual.calibration_diagnostic(table, treated), out / "calibration.csv")
    (out / "monthly_effects.svg").write_text(plots.monthly_effects_svg(
        monthly["month"], monthly["mean_alpha"], monthly["se"], shaded=set(run["treated_months"])))
    return {}


def _effects_and_panels(ws, cfg):
    table = counterfactual.EffectTable.read_csv(ws.output("effects", "effects.csv"))
    panels = {m: p.sum_view() for m, p in _load_panels(ws, cfg, "treated").items()}
    return table, panels


def _covariates(ws):
    try:
        return panel.ingest_covariates(ws.source("covariates")).covariates
    except panel.IngestError as exc:
        raise DataError(str(exc)) from None


def _correlations(table, panels, cov, months):
    rows = []
    for m in months:
        r, p, _ = heterogeneity.stringency_correlation(table, panels, cov, m)
        rows.append({"month": m, "pearson_r": r, "p_value": p})
    return pd.DataFrame(rows, columns=["month", "pearson_r", "p_value"])


CONDITIONAL_FEATURES = ("size_quartile", "main_transport", "main_industry", "NP", "ND", "HH_p", "HH_d")


def stage_placebo(ws, cfg, out):
    run = cfg["run"]
    table, panels = _effects_and_panels(ws, cfg)
    window = [m for m in run["placebo_months"] if m in run["months"]]
    monthly = counterfactual.monthly_average(table.window(window))
    monthly["abs_mean"] = monthly["mean_alpha"].abs()
    _write_csv(monthly, out / "placebo_monthly.csv")
    rows, suppressed = [], {}
    for f in CONDITIONAL_FEATURES:
        s, k = heterogeneity.conditional_means(table, panels, f, window)
        rows += s
        suppressed[f] = k
    frame = heterogeneity.summaries_frame(rows)
    frame["window"] = "placebo"
    _write_csv(frame, out / "conditional_means.csv")
    _write_json(suppressed, out / "suppressed_groups.json")
    _write_csv(_correlations(table, panels, _covariates(ws), window), out / "stringency_correlation.csv")
    t = heterogeneity.fit_effect_tree(table, panels, cfg["tree"]["explanatory"], cfg["tree"]["min_improvement"],
                                      cfg["tree"]["max_depth"], cfg["tree"]["min_leaf"], window=window)
    (out / "placebo_tree.txt").write_text(t.to_text())
    return {}


def stage_tree(ws, cfg, out):
    run = cfg["run"]
    table, panels = _effects_and_panels(ws, cfg)
    tc = cfg["tree"]
    t = heterogeneity.fit_effect_tree(table, panels, tc["explanatory"], tc["min_improvement"], tc["max_depth"],
                                      tc["min_leaf"])
    (out / "effect_tree.txt").write_text(t.to_text())
    (out / "effect_tree.json").write_text(t.to_json())
    (out / "effect_tree.svg").write_text(plots.tree_svg(t))
    texts, coefs = [], []
    for name, months in (("treated", run["treated_months"]), ("placebo", run["placebo_months"])):
        months = [m for m in months if m in run["months"]]
        if not months:
            continue
        res = heterogeneity.ols_heterogeneity(table, panels, months)
        texts.append(res.to_text(title=f"OLS of the log effect, {name} window (months {months})"))
        c = res.table()
        c.insert(0, "window", name)
        coefs.append(c)
        coefs.append(pd.DataFrame({"window": [name] * 3, "term": ["_R2", "_adj_R2", "_n"],
                                   "coef": [res.r2, res.adj_r2, float(res.n)]}))
    (out / "ols.txt").write_text("\n".join(texts))
    _write_csv(pd.concat(coefs, ignore_index=True), out / "ols.csv")
    window = [m for m in run["treated_months"] if m in run["months"]]
    rows = []
    for f in CONDITIONAL_FEATURES:
        rows += heterogeneity.conditional_means(table, panels, f, window)[0]
    frame = heterogeneity.summaries_frame(rows)
    frame["window"] = "treated"
    _write_csv(frame, out / "conditional_means.csv")
    _write_csv(_correlations(table, panels, _covariates(ws), window), out / "stringency_correlation.csv")
    return {}


def stage_report(ws, cfg, out):
    shutil.copyfile(ws.output("evaluate", "metrics_table.txt"), out / "metrics.txt")
    shutil.copyfile(ws.output("superlearner", "weights_table.txt"), out / "ensemble_weights.txt")
    shutil.copyfile(ws.output("effects", "monthly_effects.svg"), out / "monthly_effects.svg")
    shutil.copyfile(ws.output("tree", "effect_tree.svg"), out / "effect_tree.svg")
    shutil.copyfile(ws.output("tree", "ols.txt"), out / "ols.txt")
    lines = ["Correlation between the mean effect per main destination and the stringency index",
             f"{'window':<10}{'month':>6}{'r':>12}{'p-value':>12}"]
    for stage, name in (("placebo", "placebo"), ("tree", "treated")):
        c = pd.read_csv(ws.output(stage, "stringency_correlation.csv"))
        for _, row in c.iterrows():
            r = "NA" if pd.isna(row["pearson_r"]) else f"{row['pearson_r']:.4f}"
            p = "NA" if pd.isna(row["p_value"]) else f"{row['p_value']:.4f}"
            lines.append(f"{name:<10}{int(row['month']):>6}{r:>12}{p:>12}")
    (out / "stringency_correlation.txt").write_text("\n".join(lines) + "\n")
    return {}


RUNNERS = {
    "generate": stage_generate,
    "featurize": stage_featurize,
    "descriptives": stage_descriptives,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "superlearner": stage_superlearner,
    "effects": stage_effects,
    "placebo": stage_placebo,
    "tree": stage_tree,
    "report": stage_report,
}


def run(stage, cfg, root):
    ws = Workspace(root)
    deps_ok = cfg["inputs"]["transactions"] and stage == "featurize"
    if not deps_ok:
        ws.require(stage)
    start = time.perf_counter()
    out = ws.stage_dir(stage)
    inputs = RUNNERS[stage](ws, cfg, out) or {}
    ws.record(stage, cfg, out, inputs, time.perf_counter() - start)
    return ws


def build_parser():
    parser = argparse.ArgumentParser(prog="tradeshock", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--root", default=None, help=f"artifact directory (default ${ROOT_ENV} or ./artifacts)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field, e.g. --set run.folds=3")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    root = args.root or os.environ.get(ROOT_ENV) or "artifacts"
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigSchemaError("--threads", "must be at least 1")
            set_threads(args.threads)
        cfg = load_config(args.config, args.overrides, args.seed)
        run(args.stage, cfg, root)
    except ConfigSchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingStage as exc:
        names = ", ".join(exc.stages)
        print(f"missing upstream artifact: run stage(s) {names} before {args.stage}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, models.SchemaError, panel.CovariatesMissingError) as exc:
        print(f"data validation failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"{args.stage}: done ({Path(root) / args.stage})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
