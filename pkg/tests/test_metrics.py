import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradeshock import metrics


# brute-force oracles -------------------------------------------------------

def auc_pairs(s, y):
    pos = [a for a, l in zip(s, y) if l == 1]
    neg = [a for a, l in zip(s, y) if l == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def pr_auc_thresholds(s, y):
    n1 = sum(y)
    area, prev_recall = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        pred = [a >= t for a in s]
        tp = sum(1 for p, l in zip(pred, y) if p and l == 1)
        recall = tp / n1
        precision = tp / sum(pred)
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def counts(s, y, t):
    tp = sum(1 for a, l in zip(s, y) if a >= t and l == 1)
    fp = sum(1 for a, l in zip(s, y) if a >= t and l == 0)
    tn = sum(1 for a, l in zip(s, y) if a < t and l == 0)
    fn = sum(1 for a, l in zip(s, y) if a < t and l == 1)
    return tp, fp, tn, fn


def bacc_counts(s, y, t):
    tp, fp, tn, fn = counts(s, y, t)
    rates = [r for r in ((tp / (tp + fn)) if tp + fn else None, (tn / (tn + fp)) if tn + fp else None)
             if r is not None]
    return sum(rates) / len(rates)


def f1_counts(s, y, t):
    tp, fp, tn, fn = counts(s, y, t)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def random_instance(rng):
    n = int(rng.integers(2, 13))
    # coarse grid so ties are common
    s = rng.integers(0, 5, n) / 4.0 if rng.random() < 0.5 else rng.random(n)
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return s, y


def test_metrics_match_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, y = random_instance(rng)
        sl, yl = s.tolist(), y.tolist()
        assert metrics.roc_auc(s, y) == pytest.approx(auc_pairs(sl, yl), abs=1e-12)
        assert metrics.pr_auc(s, y) == pytest.approx(pr_auc_thresholds(sl, yl), abs=1e-12)
        for t in (0.25, 0.5, 0.75):
            assert metrics.balanced_accuracy(s, y, t) == pytest.approx(bacc_counts(sl, yl, t), abs=1e-12)
            assert metrics.f1_score(s, y, t) == pytest.approx(f1_counts(sl, yl, t), abs=1e-12)


def test_auc_exhaustive_over_all_labelings_of_five():
    s = np.array([0.1, 0.4, 0.4, 0.7, 0.9])
    for bits in itertools.product((0, 1), repeat=5):
        y = np.array(bits)
        if y.min() == y.max():
            assert math.isnan(metrics.roc_auc(s, y))
            continue
        assert metrics.roc_auc(s, y) == pytest.approx(auc_pairs(s.tolist(), list(bits)), abs=1e-12)


def test_known_values():
    s = [0.9, 0.8, 0.7, 0.6, 0.55, 0.54, 0.53, 0.52, 0.51, 0.505]
    y = [1, 1, 0, 1, 1, 1, 0, 0, 1, 0]
    assert metrics.roc_auc(s, y) == pytest.approx(0.75)
    tp, fp, tn, fn = metrics.confusion(s, y, 0.5)
    assert (tp, fp, tn, fn) == (6, 4, 0, 0)
    assert metrics.balanced_accuracy(s, y, 0.5) == pytest.approx(0.5)
    assert metrics.f1_score(s, y, 0.5) == pytest.approx(12 / 16)


def test_perfect_and_reversed_rankings():
    y = np.array([0, 0, 1, 1])
    assert metrics.roc_auc([0.1, 0.2, 0.8, 0.9], y) == 1.0
    assert metrics.roc_auc([0.9, 0.8, 0.2, 0.1], y) == 0.0
    assert metrics.pr_auc([0.1, 0.2, 0.8, 0.9], y) == 1.0
    assert metrics.roc_auc([0.5] * 4, y) == 0.5
    assert metrics.pr_auc([0.5] * 4, y) == 0.5


def test_single_class_is_undefined_where_needed():
    s = [0.2, 0.7, 0.9]
    assert math.isnan(metrics.roc_auc(s, [1, 1, 1]))
    assert math.isnan(metrics.pr_auc(s, [0, 0, 0]))
    # balanced accuracy falls back to the one available rate
    assert metrics.balanced_accuracy(s, [1, 1, 1]) == pytest.approx(2 / 3)
    assert metrics.f1_score(s, [0, 0, 0], threshold=0.95) == 0.0
    assert metrics.efron_r2(s, [1, 1, 1]) == 0.0


def test_efron_r2_is_clamped():
    y = np.array([0, 1, 0, 1])
    assert metrics.efron_r2(y, y) == 1.0
    assert metrics.efron_r2(1 - y, y) == 0.0
    assert metrics.efron_r2([0.5] * 4, y) == 0.0
    assert metrics.efron_r2([0.25, 0.75, 0.25, 0.75], y) == pytest.approx(0.75)


def test_input_validation():
    with pytest.raises(ValueError):
        metrics.roc_auc([0.1, 0.2], [0, 2])
    with pytest.raises(ValueError):
        metrics.roc_auc([0.1], [0, 1])
    with pytest.raises(ValueError):
        metrics.roc_auc([np.nan, 0.2], [0, 1])
    with pytest.raises(ValueError):
        metrics.evaluate([], [])


def test_report_round_trips_with_null_for_undefined():
    r = metrics.evaluate([0.2, 0.7], [1, 1])
    d = json.loads(r.to_json())
    assert d["auc"] is None and d["pr_auc"] is None
    back = metrics.MetricsReport.from_dict(d)
    assert math.isnan(back.auc) and back.n == 2


def test_degenerate_flags_constant_classifiers():
    assert metrics.degenerate([0.6, 0.9]) == "predicts positive for every row"
    assert metrics.degenerate([0.1, 0.2]) == "predicts negative for every row"
    assert metrics.degenerate([0.1, 0.9]) is None


def test_format_table_lists_every_model():
    reports = {"logit": metrics.evaluate([0.2, 0.8, 0.6], [0, 1, 1]),
               "tree": metrics.evaluate([0.5, 0.5, 0.5], [0, 1, 1])}
    text = metrics.format_table(reports, title="t")
    assert text.splitlines()[0] == "t"
    assert any(line.startswith("logit") for line in text.splitlines())
    assert any(line.startswith("tree") for line in text.splitlines())


scores = st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=30)
# scores on a grid, so strictly monotone maps keep distinct values distinct in floating point
grid_scores = st.lists(st.integers(0, 1000).map(lambda k: k / 1000), min_size=2, max_size=30)


@settings(max_examples=150, deadline=None)
@given(scores, st.data())
def test_statistics_lie_in_unit_interval(s, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(s), max_size=len(s)))
    r = metrics.evaluate(s, y)
    for name in metrics.STATISTICS:
        v = getattr(r, name)
        assert math.isnan(v) or 0.0 <= v <= 1.0 + 1e-12


@settings(max_examples=150, deadline=None)
@given(grid_scores, st.data())
def test_auc_is_invariant_to_monotone_transforms_and_flips_under_negation(s, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(s), max_size=len(s)))
    if min(y) == max(y):
        return
    s = np.asarray(s)
    a = metrics.roc_auc(s, y)
    assert metrics.roc_auc(np.exp(3 * s) - 7, y) == pytest.approx(a, abs=1e-12)
    assert metrics.roc_auc(-s, y) == pytest.approx(1 - a, abs=1e-12)
    assert metrics.pr_auc(np.exp(3 * s), y) == pytest.approx(metrics.pr_auc(s, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(scores, st.data())
def test_metrics_do_not_depend_on_row_order(s, data):
    y = data.draw(st.lists(st.integers(0, 1), min_size=len(s), max_size=len(s)))
    perm = data.draw(st.permutations(range(len(s))))
    s, y = np.asarray(s), np.asarray(y)
    a, b = metrics.evaluate(s, y), metrics.evaluate(s[list(perm)], y[list(perm)])
    for name in metrics.STATISTICS:
        x1, x2 = getattr(a, name), getattr(b, name)
        assert (math.isnan(x1) and math.isnan(x2)) or x1 == pytest.approx(x2, abs=1e-12)
