"""Acceptance criteria 1-8, each reported as one PASS/FAIL line in the terminal summary."""

import filecmp
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from test_ensemble import simplex_grid_risk
from test_metrics import auc_pairs, bacc_counts, f1_counts, pr_auc_thresholds
from test_panel import check_panel_invariants
from tradeshock import cli, ensemble, heterogeneity, metrics, models
from tradeshock.counterfactual import ProtocolConfig, estimate_effects, monthly_average
from tradeshock.models.lasso import FINAL_KKT_TOL, Standardizer, fit_logit_lasso, kkt_violation, lambda_max
from tradeshock.models.logit import fit_irls, sigmoid
from tradeshock.panel import PanelBuilder
from tradeshock.parallel import set_threads
from tradeshock.synthgen import GeneratorConfig, generate

SEEDS = list(range(1, 21))
PLACEBO = (1, 2, 3)
TREATED = (4, 5, 6, 7)
APRIL = 4


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# ---------------------------------------------------------------- shared synthetic runs


def run_seed(seed):
    start = time.perf_counter()
    world = generate(GeneratorConfig(n_firms=5000, seed=seed))
    b = PanelBuilder(world.records, world.covariates)
    months = range(1, 8)
    train = {m: b.build(2018, m) for m in months}
    aware = {m: b.build(2019, m, shock_aware=True) for m in months}
    treated = {m: p.sum_view() for m, p in aware.items()}
    table, _ = estimate_effects(ProtocolConfig(2018, 2019, tuple(months), seed=seed), train, treated, aware)
    seconds = time.perf_counter() - start
    monthly = monthly_average(table).set_index("month")["mean_alpha"]
    tree = heterogeneity.fit_effect_tree(table, treated)
    placebo_tree = heterogeneity.fit_effect_tree(table, treated, window=PLACEBO)
    ols = {}
    for name, window in (("treated", TREATED), ("placebo", PLACEBO)):
        data = heterogeneity.joined(table, treated, window)
        X, names = heterogeneity.ols_design(data, treated)
        res = heterogeneity.ols(X, data["log_effect"].to_numpy(), names)
        kept = [names.index(n) for n in res.names]
        resid = data["log_effect"].to_numpy() - X[:, kept] @ res.coef
        ols[name] = (res, float(np.max(np.abs(X.T @ resid))))
    return {
        "seed": seed, "seconds": seconds, "monthly": monthly,
        "oracle": {m: world.oracle.mean_effect(2019, m) for m in months},
        "tree": tree, "placebo_tree": placebo_tree, "ols": ols,
    }


@pytest.fixture(scope="session")
def seed_runs():
    set_threads(1)
    return [run_seed(s) for s in SEEDS]


# ---------------------------------------------------------------- 1


def test_criterion_1_metric_oracles():
    rng = np.random.default_rng(20240401)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 13))
        s = rng.integers(0, 6, n) / 5.0 if rng.random() < 0.5 else rng.random(n)
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[int(rng.integers(n))] ^= 1
        sl, yl = s.tolist(), y.tolist()
        t = float(rng.choice([0.3, 0.5, 0.7]))
        worst = max(worst,
                    abs(metrics.roc_auc(s, y) - auc_pairs(sl, yl)),
                    abs(metrics.pr_auc(s, y) - pr_auc_thresholds(sl, yl)),
                    abs(metrics.balanced_accuracy(s, y, t) - bacc_counts(sl, yl, t)),
                    abs(metrics.f1_score(s, y, t) - f1_counts(sl, yl, t)))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-12 and seconds < 5
    report(1, ok, f"max deviation {worst:.1e} over 200 instances in {seconds:.2f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_lasso():
    rng = np.random.default_rng(2)
    n, p = 50, 5
    X = rng.standard_normal((n, p))
    y = (rng.random(n) < sigmoid(0.3 + X @ np.array([1.0, -1.0, 0.5, 0.0, 0.25]))).astype(float)
    ids = [f"r{i}" for i in range(n)]
    st = Standardizer.fit(X)
    lmax = lambda_max(st.transform(X), y)
    kkt = 0.0
    for frac in (0.8, 0.3, 0.05):
        _, _, info = fit_logit_lasso(X, y, ids, lam=frac * lmax)
        kkt = max(kkt, kkt_violation(info["gradient"], info["std_coef"], frac * lmax, st.usable).max())
    b0, coef, _ = fit_logit_lasso(X, y, ids, lam=lmax)
    null_err = abs(b0 - np.log(y.mean() / (1 - y.mean())))
    null_ok = np.all(coef == 0) and null_err <= 1e-10
    ml_b0, ml_coef, _, converged, _ = fit_irls(X, y, tol=1e-12)
    z_b0, z_coef, _ = fit_logit_lasso(X, y, ids, lam=0.0)
    gap = float(np.max(np.abs(np.r_[z_b0 - ml_b0, z_coef - ml_coef])))
    ok = kkt < FINAL_KKT_TOL and null_ok and converged and gap <= 1e-4
    report(2, ok, f"KKT {kkt:.1e}, null intercept error {null_err:.1e}, lambda=0 vs IRLS {gap:.1e}")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_nnls():
    rng = np.random.default_rng(3)
    worst_gap, worst_kkt = 0.0, 0.0
    for _ in range(20):
        n = 20
        y = rng.integers(0, 2, n).astype(float)
        base = np.clip(0.5 + 0.6 * (y - 0.5) + 0.25 * rng.standard_normal(n), 0, 1)
        Z = np.column_stack([np.clip(base + s * rng.standard_normal(n), 0, 1) for s in (0.05, 0.2, 0.4)])
        ew = ensemble.solve_weights(Z, y)
        oracle, _ = simplex_grid_risk(Z, y)
        worst_gap = max(worst_gap, abs(ew.cv_risk - oracle))
        w, g = ensemble.nnls(Z, y)
        worst_kkt = max(worst_kkt, np.max(np.abs(g[w > 0]), initial=0.0), -np.min(g[w == 0], initial=0.0))

    # level-one matrix of the six-model zoo on a synthetic panel
    world = generate(GeneratorConfig(n_firms=5000, seed=3, months=(4,), month_coefs={4: 0.0},
                                     shock_targets={4: -0.2}))
    p = PanelBuilder(world.records, world.covariates).build(2018, 4)
    specs = models.default_specs(seed=3)
    Z = ensemble.level_one(specs, p, folds=5, seed=3)
    ew = ensemble.solve_weights(Z, p.y, ensemble.member_names(specs))
    margin = min(ew.per_model_risk.values()) - ew.cv_risk
    ok = worst_gap <= 1e-3 and worst_kkt < 1e-8 and margin >= -1e-9
    report(3, ok, f"grid gap {worst_gap:.1e}, KKT {worst_kkt:.1e}, best member - ensemble risk {margin:.2e}")
    assert ok


# ---------------------------------------------------------------- 4


@pytest.mark.slow
def test_criterion_4_effect_recovery(seed_runs):
    april_err = [abs(r["monthly"][APRIL] - r["oracle"][APRIL]) for r in seed_runs]
    placebo_ok = [all(abs(r["monthly"][m]) <= 0.02 for m in PLACEBO) for r in seed_runs]
    slowest = max(r["seconds"] for r in seed_runs)
    ok = max(april_err) <= 0.05 and sum(placebo_ok) >= 18 and slowest < 300
    report(4, ok, f"April max |error| {max(april_err):.4f}, placebo within 0.02 in {sum(placebo_ok)}/20 seeds, "
                  f"slowest seed {slowest:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5


def root_is_month_window(tree):
    split = tree.root.split
    if split is None or split.feature != "month":
        return False
    left = {int(m) for m in split.left_levels}
    # the placebo months stay together on one side
    return set(PLACEBO) <= left or not (set(PLACEBO) & left)


@pytest.mark.slow
def test_criterion_5_heterogeneity(seed_runs):
    recovered = 0
    for r in seed_runs:
        paths = heterogeneity.split_features_on_paths(r["tree"])
        if root_is_month_window(r["tree"]) and any({"main_industry", "size_quartile"} <= s for s in paths):
            recovered += 1
    single = sum(len(r["placebo_tree"].nodes) == 1 for r in seed_runs)
    ok = recovered >= 18 and single == len(seed_runs)
    report(5, ok, f"month root with industry and size on one path in {recovered}/20 seeds; "
                  f"placebo-only tree is a single leaf in {single}/20 seeds")
    assert ok


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_criterion_6_ols_contrast(seed_runs):
    contrasts = [r["ols"]["treated"][0].r2 - r["ols"]["placebo"][0].r2 for r in seed_runs]
    orth = max(max(r["ols"]["treated"][1], r["ols"]["placebo"][1]) for r in seed_runs)
    ok = min(contrasts) >= 0.15 and orth < 1e-8
    report(6, ok, f"R2 contrast min {min(contrasts):.3f} (mean {np.mean(contrasts):.3f}), max |X'e| {orth:.1e}")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_determinism(tmp_path):
    roots = {1: tmp_path / "threads1", 8: tmp_path / "threads8"}
    for threads, root in roots.items():
        for stage in cli.STAGES:
            assert cli.main([stage, "--config", "smoke", "--root", str(root), "--threads", str(threads)]) == 0
    set_threads(1)
    diffs = []

    def compare(d):
        diffs.extend(str(d.left) + "/" + f for f in d.diff_files + d.left_only + d.right_only
                     if f != cli.TIMINGS)
        for sub in d.subdirs.values():
            compare(sub)

    compare(filecmp.dircmp(roots[1], roots[8]))
    # dircmp compares by size and mtime; confirm byte equality explicitly
    files = sorted(p.relative_to(roots[1]) for p in roots[1].rglob("*") if p.is_file() and p.name != cli.TIMINGS)
    mismatched = [str(f) for f in files if (roots[1] / f).read_bytes() != (roots[8] / f).read_bytes()]
    ok = not diffs and not mismatched and len(files) > 0
    report(7, ok, f"{len(files)} artifacts compared between --threads 1 and 8, {len(mismatched) + len(diffs)} differ")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_panel_invariants():
    rng = np.random.default_rng(8)
    failures = 0
    for i in range(100):
        cfg = GeneratorConfig(n_firms=int(rng.integers(20, 120)), seed=int(rng.integers(2 ** 31)),
                              months=(1, 2, 3), month_coefs={1: 0.0, 2: 0.0, 3: 0.0}, shock_targets={})
        try:
            check_panel_invariants(generate(cfg), rng)
        except AssertionError:
            failures += 1
    ok = failures == 0
    report(8, ok, f"HH/NP/ND scaling, status partition and experience monotonicity on 100 panels, "
                  f"{failures} failures")
    assert ok
