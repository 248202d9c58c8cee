import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradeshock import panel
from tradeshock.panel import (FeaturePanel, PanelBuilder, TransactionTable, classify_firm_status, herfindahl,
                              ingest_covariates, ingest_transactions, size_quartiles, status_summary)

HEADER = "firm_id,date,product_code,origin_department,transport_mode,destination,fob_value_usd,is_reexport\n"


def tx_frame(rows):
    f = pd.DataFrame(rows, columns=list(panel.TRANSACTION_COLUMNS))
    f["date"] = pd.to_datetime(f["date"])
    f["fob_value_usd"] = f["fob_value_usd"].astype(float)
    return TransactionTable(f)


def two_firm_table():
    return tx_frame([
        ("A", "2018-01-05", "0901110000", "ANT", "sea", "USA", 300.0),
        ("A", "2018-01-09", "0901110000", "ANT", "sea", "DEU", 100.0),
        ("A", "2018-01-20", "8517120000", "ANT", "air", "USA", 100.0),
        ("B", "2018-01-03", "0603110000", "CUN", "air", "USA", 50.0),
        ("A", "2019-01-04", "0901110000", "ANT", "sea", "USA", 10.0),
        ("B", "2018-02-03", "0603110000", "CUN", "air", "NLD", 50.0),
        ("B", "2019-02-03", "0603110000", "CUN", "air", "NLD", 50.0),
    ])


def test_hand_computed_features():
    b = PanelBuilder(two_firm_table())
    p = b.build(2018, 1)
    assert list(p.firm_ids) == ["A", "B"]
    a = p.X[0]
    col = {c: i for i, c in enumerate(p.columns)}
    assert a[col["NP"]] == 2 and a[col["ND"]] == 2
    # products: 0901110000 -> 400, 8517120000 -> 100
    assert a[col["HH_p"]] == pytest.approx(0.8 ** 2 + 0.2 ** 2)
    # destinations: USA 400, DEU 100
    assert a[col["HH_d"]] == pytest.approx(0.8 ** 2 + 0.2 ** 2)
    assert a[col["total_export_value_ln"]] == pytest.approx(np.log(500.0))
    assert a[col["transport_sea"]] == 1 and a[col["transport_air"]] == 1
    assert p.X[1, col["HH_p"]] == 1.0 and p.X[1, col["ND"]] == 1
    assert list(p.y) == [1, 0]
    assert p.attributes["main_destination"].tolist() == ["USA", "USA"]
    # B ships to NLD in February after a January shipment to USA
    q = b.build(2018, 2)
    assert q.X[0, q.columns.index("destexp_USA")] == 1.0
    assert q.X[0, q.columns.index("destexp_NLD")] == 0.0
    assert list(q.y) == [1]


def test_herfindahl_matches_direct_formula():
    values = np.array([3.0, 1.0, 5.0, 5.0, 2.0])
    groups = np.array([0, 0, 1, 1, 2])
    hh = herfindahl(values, groups, 3)
    assert hh == pytest.approx([0.75 ** 2 + 0.25 ** 2, 0.5, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=1, max_size=20), st.floats(1e-3, 1e3), st.data())
def test_herfindahl_is_scale_invariant_and_bounded(values, c, data):
    values = np.array(values)
    groups = np.array(data.draw(st.lists(st.integers(0, 3), min_size=len(values), max_size=len(values))))
    hh = herfindahl(values, groups, 4)
    assert np.allclose(herfindahl(values * c, groups, 4), hh, rtol=1e-12)
    counts = np.bincount(groups, minlength=4)
    present = counts > 0
    assert np.all(hh[present] <= 1 + 1e-12)
    assert np.all(hh[present] >= 1.0 / counts[present] - 1e-12)


def test_size_quartiles_put_ties_low():
    q = size_quartiles(np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]))
    assert list(q) == [1, 1, 2, 2, 3, 3, 4, 4]


def test_ingest_rejects_malformed_rows_with_line_numbers():
    text = HEADER + "\n".join([
        "A,2018-01-05,0901110000,ANT,sea,USA,300,0",
        "B,2018-13-05,0901110000,ANT,sea,USA,300,0",
        "C,2018-01-05,09011,ANT,sea,USA,300,0",
        "D,2018-01-05,0901110000,ANT,boat,USA,300,0",
        "E,2018-01-05,0901110000,ANT,sea,USA,-1,0",
        "F,2018-01-05,0901110000,ANT,sea,USA,20,1",
        ",2018-01-05,0901110000,ANT,sea,USA,20,0",
    ]) + "\n"
    res = ingest_transactions(text.encode())
    assert len(res.records) == 1
    assert res.n_reexports_excluded == 1
    lines = {r.line: r.reason for r in res.rejects}
    assert set(lines) == {3, 4, 5, 6, 8}
    assert "bad date" in lines[3] and "10 digits" in lines[4]
    assert "transport" in lines[5] and "negative" in lines[6] and "firm_id" in lines[8]


def test_ingest_missing_header_column():
    with pytest.raises(panel.IngestError, match="destination"):
        ingest_transactions(b"firm_id,date,product_code,origin_department,transport_mode,fob_value_usd\n")


def test_covariates_average_daily_values_and_reject_out_of_range():
    text = ("destination,date,economic_index,government_index,health_index,stringency_index,"
            "cases_per_100k,deaths_per_100k\n"
            "USA,2020-04-01,10,20,30,40,5,1\n"
            "USA,2020-04-02,20,20,30,60,,1\n"
            "USA,2020-04-03,20,20,30,160,7,1\n")
    res = ingest_covariates(text.encode())
    assert [r.line for r in res.rejects] == [4]
    m = res.covariates.month(2020, 4).loc["USA"]
    assert m["stringency_index"] == pytest.approx(50.0)
    assert m["cases_per_100k"] == pytest.approx(5.0)


def test_missing_covariates_raise():
    b = PanelBuilder(two_firm_table(), covariates=None)
    with pytest.raises(panel.CovariatesMissingError):
        b.build(2018, 1, shock_aware=True)


def test_panel_csv_round_trip(tmp_path, small_panels):
    _, aware = small_panels
    p = aware[4]
    p.to_csv(tmp_path / "p.csv")
    q = FeaturePanel.read_csv(tmp_path / "p.csv")
    assert q.columns == p.columns and q.groups == p.groups
    assert np.array_equal(q.X, p.X) and np.array_equal(q.y, p.y)
    assert q.row_ids == p.row_ids
    assert (q.attributes["main_industry"].astype(str) == p.attributes["main_industry"].astype(str)).all()


def test_shock_aware_panel_only_adds_covariate_columns(small_panels):
    _, aware = small_panels
    p = aware[4]
    sv = p.sum_view()
    assert p.columns[: len(sv.columns)] == sv.columns
    assert all(c.startswith(("cov_", "covmiss_", "covw_")) for c in p.sam_only_columns)
    assert np.array_equal(p.X[:, : len(sv.columns)], sv.X)


def test_panels_share_columns_across_years(small_panels):
    train, aware = small_panels
    assert train[1].columns == aware[1].sum_view().columns


# invariants on randomized generator panels ---------------------------------

def scaled(records, c):
    f = records.frame.loc[:, list(panel.TRANSACTION_COLUMNS)].copy()
    f["fob_value_usd"] = f["fob_value_usd"] * c
    return TransactionTable(f)


def check_panel_invariants(world, rng):
    """Scaling invariance of HH/NP/ND, status partition, experience monotonicity."""
    b = PanelBuilder(world.records)
    months = sorted(world.config.months)
    m = months[rng.integers(len(months))]
    p = b.build(2018, m)
    c = float(np.exp(rng.uniform(-5, 5)))
    q = PanelBuilder(scaled(world.records, c)).build(2018, m)
    for name in ("NP", "ND", "HH_p", "HH_d"):
        assert np.allclose(p.column(name), q.column(name), rtol=1e-12, atol=0), name
    assert np.allclose(q.column("total_export_value_ln"), p.column("total_export_value_ln") + np.log(c))

    quarter = int(rng.integers(1, 5))
    a, bb = world.records.select(years=[2018]), world.records.select(years=[2019])
    statuses = classify_firm_status(a, bb, quarter)
    firms = [s.firm_id for s in statuses]
    assert len(firms) == len(set(firms))
    months_q = [3 * quarter - 2, 3 * quarter - 1, 3 * quarter]
    seen_a = set(a.frame.loc[a.frame["month"].isin(months_q), "firm_id"])
    seen_b = set(bb.frame.loc[bb.frame["month"].isin(months_q), "firm_id"])
    assert set(firms) == seen_a | seen_b
    for s in statuses:
        expected = ("surviving" if s.firm_id in seen_a & seen_b else
                    "exiting" if s.firm_id in seen_a else "entrant")
        assert s.status == expected
    summ = status_summary(statuses)
    if len(statuses):
        assert summ["firm_share"].sum() == pytest.approx(1.0)

    # experience dummies never switch off for a firm seen again later
    panels = [b.build(y, mm) for y in (2018, 2019) for mm in months]
    exp_cols = [i for i, n in enumerate(p.columns) if n.startswith(("destexp_", "sectorexp_"))]
    last = {}
    for pp in panels:
        for fid, row in zip(pp.firm_ids, pp.X[:, exp_cols]):
            if fid in last:
                assert np.all(row >= last[fid])
            last[fid] = row


def test_panel_invariants_on_random_worlds():
    from tradeshock.synthgen import GeneratorConfig, generate
    rng = np.random.default_rng(2024)
    for i in range(10):
        cfg = GeneratorConfig(n_firms=int(rng.integers(20, 80)), seed=int(rng.integers(2 ** 31)),
                              months=(1, 2, 3), month_coefs={1: 0.0, 2: 0.0, 3: 0.0}, shock_targets={})
        check_panel_invariants(generate(cfg), rng)
