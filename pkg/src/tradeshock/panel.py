"""Customs-record ingestion, firm-month featurization and descriptive tables.

Transactions and destination covariates are read from comma-separated UTF-8
files with a header row. Transaction columns::

    firm_id,date,product_code,origin_department,transport_mode,destination,fob_value_usd[,is_reexport]

Covariate columns (one row per destination and day)::

    destination,date,economic_index,government_index,health_index,stringency_index,cases_per_100k,deaths_per_100k

Covariate cells may be empty; monthly values average the days with data.
"""

from __future__ import annotations

import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd

from .taxonomy import TRANSPORT_MODES, continent_of, section_of_chapter

logger = logging.getLogger(__name__)

TRANSACTION_COLUMNS = (
    "firm_id",
    "date",
    "product_code",
    "origin_department",
    "transport_mode",
    "destination",
    "fob_value_usd",
)
REEXPORT_COLUMN = "is_reexport"
COVARIATE_NAMES = (
    "economic_index",
    "government_index",
    "health_index",
    "stringency_index",
    "cases_per_100k",
    "deaths_per_100k",
)
INDEX_COVARIATES = COVARIATE_NAMES[:4]
BASE_FEATURES = ("total_export_value_ln", "NP", "ND", "HH_p", "HH_d")
ATTRIBUTE_COLUMNS = (
    "size_quartile",
    "main_destination",
    "main_continent",
    "main_transport",
    "main_sector",
    "main_industry",
    "main_department",
)
# share of all transactions a destination needs for its own covariate columns
COVARIATE_DESTINATION_SHARE = 0.005
FLOAT_FORMAT = "%.12g"


class IngestError(Exception):
    """Input stream cannot be read or lacks required columns."""


class CovariatesMissingError(ValueError):
    """A shock-aware panel was requested without covariates for its label month."""

    def __init__(self, missing):
        self.missing = list(missing)
        listed = ", ".join(f"{d} {y}-{m:02d}" for d, y, m in self.missing[:20])
        super().__init__(f"pandemic covariates missing for: {listed}")


@dataclass(frozen=True)
class TransactionRecord:
    firm_id: str
    date: pd.Timestamp
    product_code: str
    origin_department: str
    transport_mode: str
    destination: str
    fob_value_usd: float


@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str


class TransactionTable:
    """Validated transactions held column-wise.

    Iterating yields :class:`TransactionRecord` objects; the featurization code
    works on ``frame`` directly.
    """

    def __init__(self, frame: pd.DataFrame):
        frame = frame.loc[:, list(TRANSACTION_COLUMNS)].reset_index(drop=True)
        frame["year"] = frame["date"].dt.year.astype(np.int64)
        frame["month"] = frame["date"].dt.month.astype(np.int64)
        self.frame = frame

    @classmethod
    def from_records(cls, records: Iterable[TransactionRecord]) -> "TransactionTable":
        rows = [
            (r.firm_id, pd.Timestamp(r.date), r.product_code, r.origin_department,
             r.transport_mode, r.destination, float(r.fob_value_usd))
            for r in records
        ]
        frame = pd.DataFrame(rows, columns=list(TRANSACTION_COLUMNS))
        frame["date"] = pd.to_datetime(frame["date"])
        frame["fob_value_usd"] = frame["fob_value_usd"].astype(np.float64)
        return cls(frame)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[TransactionRecord]:
        cols = self.frame.loc[:, list(TRANSACTION_COLUMNS)]
        for row in cols.itertuples(index=False, name=None):
            yield TransactionRecord(*row)

    def select(self, years=None, months=None) -> "TransactionTable":
        mask = np.ones(len(self.frame), dtype=bool)
        if years is not None:
            mask &= self.frame["year"].isin(list(np.atleast_1d(years))).to_numpy()
        if months is not None:
            mask &= self.frame["month"].isin(list(np.atleast_1d(months))).to_numpy()
        return TransactionTable(self.frame.loc[mask])

    def to_csv(self, path) -> None:
        out = self.frame.loc[:, list(TRANSACTION_COLUMNS)].copy()
        out["date"] = out["date"].dt.strftime("%Y-%m-%d")
        out.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


@dataclass
class IngestResult:
    records: TransactionTable
    rejects: list[RejectedRow] = field(default_factory=list)
    n_reexports_excluded: int = 0

    def report(self) -> str:
        lines = [f"{len(self.records)} records accepted, {len(self.rejects)} rejected, "
                 f"{self.n_reexports_excluded} re-exports excluded"]
        lines += [f"  line {r.line}: {r.reason}" for r in self.rejects]
        return "\n".join(lines)


def _read_csv(source, what: str) -> pd.DataFrame:
    try:
        if isinstance(source, (bytes, bytearray)):
            source = io.BytesIO(source)
        elif isinstance(source, (str, os.PathLike)) and not isinstance(source, Path):
            source = Path(source)
        return pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestError(f"cannot read {what}: {exc}") from exc


def _first_reason(checks: Sequence[tuple[np.ndarray, str]], n: int) -> np.ndarray:
    reason = np.full(n, "", dtype=object)
    for bad, message in reversed(checks):
        reason[bad] = message
    return reason


def ingest_transactions(source, exclude_reexports: bool = True) -> IngestResult:
    """Read and validate a transaction file or byte stream.

    Malformed rows are returned in ``rejects`` with their physical line number
    (the header is line 1); they never reach the record table.
    """
    raw = _read_csv(source, "transactions")
    missing = [c for c in TRANSACTION_COLUMNS if c not in raw.columns]
    if missing:
        raise IngestError(f"transactions header lacks columns: {', '.join(missing)}")

    n_excluded = 0
    if exclude_reexports and REEXPORT_COLUMN in raw.columns:
        flag = raw[REEXPORT_COLUMN].str.strip().str.lower().isin(["1", "true", "yes", "y"])
        n_excluded = int(flag.sum())
        raw = raw.loc[~flag.to_numpy()]

    lines = raw.index.to_numpy() + 2
    raw = raw.reset_index(drop=True)
    n = len(raw)
    strip = {c: raw[c].str.strip() for c in TRANSACTION_COLUMNS}
    dates = pd.to_datetime(strip["date"], format="%Y-%m-%d", errors="coerce")
    values = pd.to_numeric(strip["fob_value_usd"], errors="coerce")
    transport = strip["transport_mode"].str.lower()
    destination = strip["destination"].str.upper()

    checks = [
        ((strip["firm_id"] == "").to_numpy(), "empty firm_id"),
        (dates.isna().to_numpy(), "bad date"),
        ((~strip["product_code"].str.fullmatch(r"\d{10}")).to_numpy(), "product_code is not 10 digits"),
        ((strip["origin_department"] == "").to_numpy(), "empty origin_department"),
        ((~transport.isin(TRANSPORT_MODES)).to_numpy(), "unknown transport_mode"),
        ((~destination.str.fullmatch(r"[A-Z]{2,3}")).to_numpy(), "destination is not an ISO-3166 code"),
        ((values.isna() | ~np.isfinite(values.fillna(0.0))).to_numpy(), "fob_value_usd is not a number"),
        ((values < 0).fillna(False).to_numpy(), "negative fob_value_usd"),
    ]
    reason = _first_reason(checks, n)
    bad = reason != ""
    rejects = []
    for i in np.flatnonzero(bad):
        text = reason[i]
        if text == "bad date":
            text = f"bad date {raw.at[i, 'date']!r}"
        rejects.append(RejectedRow(int(lines[i]), text))

    ok = ~bad
    frame = pd.DataFrame({
        "firm_id": strip["firm_id"][ok].to_numpy(),
        "date": dates[ok].to_numpy(),
        "product_code": strip["product_code"][ok].to_numpy(),
        "origin_department": strip["origin_department"][ok].to_numpy(),
        "transport_mode": transport[ok].to_numpy(),
        "destination": destination[ok].to_numpy(),
        "fob_value_usd": values[ok].to_numpy(dtype=np.float64),
    })
    if rejects:
        logger.warning("%d transaction rows rejected", len(rejects))
    return IngestResult(TransactionTable(frame), rejects, n_excluded)


@dataclass(frozen=True)
class PandemicCovariates:
    destination: str
    year_month: tuple[int, int]
    economic_index: float
    government_index: float
    health_index: float
    stringency_index: float
    cases_per_100k: float
    deaths_per_100k: float


class CovariateTable:
    """Monthly destination covariates (means over days with data)."""

    def __init__(self, frame: pd.DataFrame):
        cols = ["destination", "year", "month", *COVARIATE_NAMES]
        self.frame = (frame.loc[:, cols]
                      .sort_values(["destination", "year", "month"], kind="mergesort")
                      .reset_index(drop=True))

    @classmethod
    def from_records(cls, items: Iterable[PandemicCovariates]) -> "CovariateTable":
        rows = [(c.destination, c.year_month[0], c.year_month[1],
                 *(getattr(c, k) for k in COVARIATE_NAMES)) for c in items]
        return cls(pd.DataFrame(rows, columns=["destination", "year", "month", *COVARIATE_NAMES]))

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[PandemicCovariates]:
        for row in self.frame.itertuples(index=False, name=None):
            d, y, m, *vals = row
            yield PandemicCovariates(d, (int(y), int(m)), *(float(v) for v in vals))

    def month(self, year: int, month: int) -> pd.DataFrame:
        f = self.frame
        return f.loc[(f["year"] == year) & (f["month"] == month)].set_index("destination")


def aggregate_daily_covariates(daily: pd.DataFrame) -> CovariateTable:
    """Average daily covariates by destination and calendar month, skipping empty days."""
    frame = daily.copy()
    frame["year"] = frame["date"].dt.year
    frame["month"] = frame["date"].dt.month
    monthly = (frame.groupby(["destination", "year", "month"], sort=True)[list(COVARIATE_NAMES)]
               .mean()
               .reset_index())
    # a month where one covariate never has data cannot be represented
    monthly = monthly.dropna(subset=list(COVARIATE_NAMES))
    return CovariateTable(monthly)


@dataclass
class CovariateIngestResult:
    covariates: CovariateTable
    rejects: list[RejectedRow] = field(default_factory=list)


def ingest_covariates(source) -> CovariateIngestResult:
    """Read daily destination covariates and aggregate them to monthly means."""
    raw = _read_csv(source, "covariates")
    need = ("destination", "date", *COVARIATE_NAMES)
    missing = [c for c in need if c not in raw.columns]
    if missing:
        raise IngestError(f"covariates header lacks columns: {', '.join(missing)}")
    lines = raw.index.to_numpy() + 2
    n = len(raw)
    dates = pd.to_datetime(raw["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    values = {c: pd.to_numeric(raw[c].str.strip().replace("", np.nan), errors="coerce") for c in COVARIATE_NAMES}
    checks = [(dates.isna().to_numpy(), "bad date"),
              ((~raw["destination"].str.strip().str.upper().str.fullmatch(r"[A-Z]{2,3}")).to_numpy(),
               "destination is not an ISO-3166 code")]
    for c in COVARIATE_NAMES:
        unparsable = (values[c].isna() & (raw[c].str.strip() != "")).to_numpy()
        checks.append((unparsable, f"{c} is not a number"))
        v = values[c].to_numpy()
        with np.errstate(invalid="ignore"):
            if c in INDEX_COVARIATES:
                out = (v < 0) | (v > 100)
            else:
                out = v < 0
        checks.append((out, f"{c} out of range"))
    reason = _first_reason(checks, n)
    bad = reason != ""
    rejects = [RejectedRow(int(lines[i]), reason[i]) for i in np.flatnonzero(bad)]
    ok = ~bad
    daily = pd.DataFrame({"destination": raw["destination"].str.strip().str.upper()[ok].to_numpy(),
                          "date": dates[ok].to_numpy()})
    for c in COVARIATE_NAMES:
        daily[c] = values[c][ok].to_numpy(dtype=np.float64)
    return CovariateIngestResult(aggregate_daily_covariates(daily), rejects)


# ---------------------------------------------------------------------------
# featurization
# ---------------------------------------------------------------------------

def size_quartiles(log_totals: np.ndarray) -> np.ndarray:
    """Quartile index 1-4 of each value; values on a cut point go to the lower quartile."""
    x = np.asarray(log_totals, dtype=np.float64)
    finite = x[np.isfinite(x)]
    if finite.size == 0:
        return np.ones(x.shape, dtype=np.int64)
    cuts = np.quantile(finite, [0.25, 0.5, 0.75])
    return 1 + (x[:, None] > cuts[None, :]).sum(axis=1).astype(np.int64)


def herfindahl(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    """Sum of squared value shares within each group, computed from item-level values."""
    totals = np.bincount(groups, weights=values, minlength=n_groups)
    counts = np.bincount(groups, minlength=n_groups).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(totals[groups] > 0, values / totals[groups], 1.0 / counts[groups])
    return np.bincount(groups, weights=share * share, minlength=n_groups)


def _argmax_category(values, firm_codes, cat_codes, n_firms, cat_labels):
    """Category with the largest value per firm; ties go to the smallest label."""
    frame = pd.DataFrame({"f": firm_codes, "c": cat_codes, "v": values})
    agg = frame.groupby(["f", "c"], sort=True)["v"].sum().reset_index()
    agg["label"] = np.asarray(cat_labels, dtype=object)[agg["c"].to_numpy()]
    agg = agg.sort_values(["f", "v", "label"], ascending=[True, False, True], kind="mergesort")
    first = agg.drop_duplicates("f")
    out = np.empty(n_firms, dtype=object)
    out[first["f"].to_numpy()] = first["label"].to_numpy()
    return out


@dataclass
class FeaturePanel:
    """Firm-month design matrix with named columns and the binary success outcome."""

    year: int
    month: int
    firm_ids: np.ndarray
    X: np.ndarray
    columns: list[str]
    groups: list[str]
    y: np.ndarray
    attributes: pd.DataFrame
    shock_aware: bool = False
    years: np.ndarray | None = None
    months: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.firm_ids)
        if self.years is None:
            self.years = np.full(n, self.year, dtype=np.int64)
        if self.months is None:
            self.months = np.full(n, self.month, dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def row_ids(self) -> list[str]:
        return [f"{f}|{y}|{m:02d}" for f, y, m in zip(self.firm_ids, self.years, self.months)]

    @property
    def sum_columns(self) -> list[str]:
        return [c for c, g in zip(self.columns, self.groups) if g == "SUM"]

    @property
    def sam_only_columns(self) -> list[str]:
        return [c for c, g in zip(self.columns, self.groups) if g == "SAM"]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def select_columns(self, names: Sequence[str]) -> "FeaturePanel":
        idx = [self.columns.index(c) for c in names]
        return FeaturePanel(
            self.year, self.month, self.firm_ids, self.X[:, idx], list(names),
            [self.groups[i] for i in idx], self.y, self.attributes,
            shock_aware=any(self.groups[i] == "SAM" for i in idx),
            years=self.years, months=self.months)

    def sum_view(self) -> "FeaturePanel":
        return self.select_columns(self.sum_columns)

    def frame(self) -> pd.DataFrame:
        """Keys, outcome, attributes and features in one table."""
        out = pd.DataFrame({"firm_id": self.firm_ids, "year": self.years, "month": self.months,
                            "success": self.y})
        out = pd.concat([out, self.attributes.reset_index(drop=True).drop(columns="firm_id", errors="ignore"),
                         pd.DataFrame(self.X, columns=self.columns)], axis=1)
        return out

    def to_csv(self, path) -> Path:
        """Write the panel plus a ``<name>.schema.json`` descriptor; returns the schema path."""
        path = Path(path)
        # shortest round-trip representation, so a panel reads back bit-exactly
        self.frame().to_csv(path, index=False, lineterminator="\n")
        schema = {
            "year": self.year,
            "month": self.month,
            "shock_aware": self.shock_aware,
            "n_rows": self.n_rows,
            "columns": (
                [{"name": "firm_id", "type": "string", "group": "key"},
                 {"name": "year", "type": "int", "group": "key"},
                 {"name": "month", "type": "int", "group": "key"},
                 {"name": "success", "type": "int", "group": "outcome"}]
                + [{"name": c, "type": "int" if c == "size_quartile" else "string", "group": "attribute"}
                   for c in ATTRIBUTE_COLUMNS]
                + [{"name": c, "type": "float", "group": g} for c, g in zip(self.columns, self.groups)]
            ),
        }
        schema_path = path.with_suffix(".schema.json")
        schema_path.write_text(json.dumps(schema, indent=2) + "\n")
        return schema_path

    @classmethod
    def read_csv(cls, path) -> "FeaturePanel":
        path = Path(path)
        schema = json.loads(path.with_suffix(".schema.json").read_text())
        text_columns = {"firm_id": str, **{c: str for c in ATTRIBUTE_COLUMNS[1:]}}
        frame = pd.read_csv(path, dtype=text_columns, keep_default_na=False, float_precision="round_trip")
        features = [c for c in schema["columns"] if c["group"] in ("SUM", "SAM")]
        names = [c["name"] for c in features]
        attrs = frame.loc[:, ["firm_id", *ATTRIBUTE_COLUMNS]].copy()
        return cls(
            year=schema["year"], month=schema["month"],
            firm_ids=frame["firm_id"].to_numpy(dtype=object),
            X=np.ascontiguousarray(frame.loc[:, names].to_numpy(dtype=np.float64)),
            columns=names, groups=[c["group"] for c in features],
            y=frame["success"].to_numpy(dtype=np.int64),
            attributes=attrs, shock_aware=schema["shock_aware"],
            years=frame["year"].to_numpy(dtype=np.int64), months=frame["month"].to_numpy(dtype=np.int64))

    @staticmethod
    def concat(panels: Sequence["FeaturePanel"]) -> "FeaturePanel":
        first = panels[0]
        for p in panels[1:]:
            if p.columns != first.columns:
                raise ValueError("panels have different feature columns")
        return FeaturePanel(
            first.year, first.month,
            np.concatenate([p.firm_ids for p in panels]),
            np.vstack([p.X for p in panels]), list(first.columns), list(first.groups),
            np.concatenate([p.y for p in panels]),
            pd.concat([p.attributes for p in panels], ignore_index=True),
            shock_aware=first.shock_aware,
            years=np.concatenate([p.years for p in panels]),
            months=np.concatenate([p.months for p in panels]))


class PanelBuilder:
    """Featurizes any (year, month) of one record set with a shared column vocabulary.

    The vocabulary (destinations, sectors, departments, ...) is fixed from all
    records so every panel built from the same inputs has identical columns.
    """

    def __init__(self, records: TransactionTable, covariates: CovariateTable | None = None):
        f = records.frame.copy()
        f["hs6"] = f["product_code"].str.slice(0, 6)
        f["chapter"] = f["product_code"].str.slice(0, 2).astype(np.int64)
        f["section"] = f["chapter"].map(section_of_chapter).astype(np.int64)
        f["continent"] = f["destination"].map(continent_of)
        f["period"] = f["year"] * 12 + f["month"] - 1
        self.frame = f
        self.covariates = covariates

        self.destinations = sorted(f["destination"].unique())
        self.continents = sorted(f["continent"].unique())
        self.departments = sorted(f["origin_department"].unique())
        self.transports = [t for t in TRANSPORT_MODES if t in set(f["transport_mode"])]
        self.chapters = sorted(int(c) for c in f["chapter"].unique())
        self.sections = sorted(int(s) for s in f["section"].unique())
        share = f["destination"].value_counts(normalize=True)
        self.covariate_destinations = sorted(d for d, s in share.items() if s >= COVARIATE_DESTINATION_SHARE)

        first_dest = f.groupby(["firm_id", "destination"], sort=False)["period"].min()
        first_chap = f.groupby(["firm_id", "chapter"], sort=False)["period"].min()
        self._first_dest = first_dest.reset_index()
        self._first_chap = first_chap.reset_index()
        self._quartiles: dict[int, pd.Series] = {}

    def annual_size_quartiles(self, year: int) -> pd.Series:
        if year not in self._quartiles:
            f = self.frame
            totals = f.loc[f["year"] == year].groupby("firm_id", sort=True)["fob_value_usd"].sum()
            with np.errstate(divide="ignore"):
                logs = np.log(totals.to_numpy())
            self._quartiles[year] = pd.Series(size_quartiles(logs), index=totals.index)
        return self._quartiles[year]

    def _sum_column_names(self) -> list[str]:
        names = list(BASE_FEATURES)
        names += [f"size_Q{q}" for q in range(1, 5)]
        names += [f"dest_{d}" for d in self.destinations]
        names += [f"continent_{c}" for c in self.continents]
        names += [f"dept_{d}" for d in self.departments]
        names += [f"transport_{t}" for t in self.transports]
        names += [f"sector_{c:02d}" for c in self.chapters]
        names += [f"industry_{s:02d}" for s in self.sections]
        names += [f"destexp_{d}" for d in self.destinations]
        names += [f"sectorexp_{c:02d}" for c in self.chapters]
        names += [f"sizeXindustry_{s:02d}" for s in self.sections]
        names += [f"sizeXsector_{c:02d}" for c in self.chapters]
        names += [f"sizeXtransport_{t}" for t in self.transports]
        names += [f"sizeXdest_{d}" for d in self.destinations]
        return names

    def _sam_column_names(self) -> list[str]:
        names = [f"cov_{c}_{d}" for c in COVARIATE_NAMES for d in self.covariate_destinations]
        names += [f"covmiss_{d}" for d in self.covariate_destinations]
        names += [f"covw_{c}" for c in COVARIATE_NAMES]
        names += ["covw_missing"]
        return names

    def build(self, year: int, month: int, shock_aware: bool = False) -> FeaturePanel:
        f = self.frame
        cur = f.loc[(f["year"] == year) & (f["month"] == month)]
        nxt = f.loc[(f["year"] == year + 1) & (f["month"] == month)]
        if len(cur) and not len(nxt) and not (f["period"] > (year + 1) * 12 + month - 1).any():
            raise ValueError(f"records do not cover the label month {year + 1}-{month:02d}")

        firms = np.array(sorted(cur["firm_id"].unique()), dtype=object)
        n = len(firms)
        fcode = pd.Index(firms).get_indexer(cur["firm_id"])
        values = cur["fob_value_usd"].to_numpy(dtype=np.float64)

        def codes(col, vocab):
            return pd.Index(vocab).get_indexer(cur[col])

        def presence(cat_codes, n_cat):
            m = np.zeros((n, n_cat))
            m[fcode, cat_codes] = 1.0
            return m

        totals = np.bincount(fcode, weights=values, minlength=n)
        hs6_codes, hs6_uni = pd.factorize(cur["hs6"], sort=True)
        # item level: (firm, hs6) and (firm, destination) aggregates
        prod = pd.DataFrame({"f": fcode, "k": hs6_codes, "v": values}).groupby(["f", "k"], sort=True)["v"].sum()
        pf_ = prod.index.get_level_values(0).to_numpy()
        dest_codes = codes("destination", self.destinations)
        dest = pd.DataFrame({"f": fcode, "k": dest_codes, "v": values}).groupby(["f", "k"], sort=True)["v"].sum()
        df_ = dest.index.get_level_values(0).to_numpy()

        with np.errstate(divide="ignore"):
            ln_total = np.where(totals > 0, np.log(np.where(totals > 0, totals, 1.0)), 0.0)
        NP = np.bincount(pf_, minlength=n).astype(np.float64)
        ND = np.bincount(df_, minlength=n).astype(np.float64)
        HH_p = herfindahl(prod.to_numpy(), pf_, n)
        HH_d = herfindahl(dest.to_numpy(), df_, n)

        quart = self.annual_size_quartiles(year).reindex(firms).to_numpy(dtype=np.int64)
        size_dummies = np.zeros((n, 4))
        size_dummies[np.arange(n), quart - 1] = 1.0

        dest_m = presence(dest_codes, len(self.destinations))
        cont_m = presence(codes("continent", self.continents), len(self.continents))
        dept_m = presence(codes("origin_department", self.departments), len(self.departments))
        tran_m = presence(codes("transport_mode", self.transports), len(self.transports))
        chap_m = presence(pd.Index(self.chapters).get_indexer(cur["chapter"]), len(self.chapters))
        sect_m = presence(pd.Index(self.sections).get_indexer(cur["section"]), len(self.sections))

        period = year * 12 + month - 1
        destexp = self._experience(self._first_dest, "destination", self.destinations, firms, period)
        chapexp = self._experience(self._first_chap, "chapter", self.chapters, firms, period)

        q = quart[:, None].astype(np.float64)
        blocks = [
            np.column_stack([ln_total, NP, ND, HH_p, HH_d]),
            size_dummies, dest_m, cont_m, dept_m, tran_m, chap_m, sect_m, destexp, chapexp,
            sect_m * q, chap_m * q, tran_m * q, dest_m * q,
        ]
        columns = self._sum_column_names()
        groups = ["SUM"] * len(columns)

        if shock_aware:
            blocks.append(self._covariate_block(cur, fcode, n, year + 1, month))
            sam_cols = self._sam_column_names()
            columns += sam_cols
            groups += ["SAM"] * len(sam_cols)

        X = np.ascontiguousarray(np.hstack(blocks)) if n else np.zeros((0, len(columns)))
        success = np.isin(firms, nxt["firm_id"].unique()).astype(np.int64)

        attrs = pd.DataFrame({
            "firm_id": firms,
            "size_quartile": quart,
            "main_destination": _argmax_category(values, fcode, dest_codes, n, self.destinations),
            "main_continent": _argmax_category(values, fcode, codes("continent", self.continents), n,
                                               self.continents),
            "main_transport": _argmax_category(values, fcode, codes("transport_mode", self.transports), n,
                                               self.transports),
            "main_sector": _argmax_category(values, fcode, pd.Index(self.chapters).get_indexer(cur["chapter"]),
                                            n, [f"{c:02d}" for c in self.chapters]),
            "main_industry": _argmax_category(values, fcode, pd.Index(self.sections).get_indexer(cur["section"]),
                                              n, [f"{s:02d}" for s in self.sections]),
            "main_department": _argmax_category(values, fcode, codes("origin_department", self.departments), n,
                                                self.departments),
        })
        return FeaturePanel(year, month, firms, X, columns, groups, success, attrs, shock_aware=shock_aware)

    def _experience(self, first, col, vocab, firms, period):
        sub = first.loc[first["period"] < period]
        out = np.zeros((len(firms), len(vocab)))
        fi = pd.Index(firms).get_indexer(sub["firm_id"])
        ci = pd.Index(vocab).get_indexer(sub[col])
        keep = fi >= 0
        out[fi[keep], ci[keep]] = 1.0
        return out

    def _covariate_block(self, cur, fcode, n, label_year, label_month):
        if self.covariates is None:
            raise CovariatesMissingError((d, label_year, label_month) for d in self.covariate_destinations)
        month_cov = self.covariates.month(label_year, label_month)
        if month_cov.empty:
            raise CovariatesMissingError((d, label_year, label_month) for d in self.covariate_destinations)

        dests = self.covariate_destinations
        serve = np.zeros((n, len(self.destinations)))
        dcode = pd.Index(self.destinations).get_indexer(cur["destination"])
        np.add.at(serve, (fcode, dcode), cur["fob_value_usd"].to_numpy(dtype=np.float64))
        present = serve > 0
        # firms whose every shipment to a destination is zero-valued still serve it
        present[fcode, dcode] = True
        shares = serve / np.maximum(serve.sum(axis=1, keepdims=True), np.finfo(float).tiny)
        shares[serve.sum(axis=1) == 0] = present[serve.sum(axis=1) == 0] / np.maximum(
            present[serve.sum(axis=1) == 0].sum(axis=1, keepdims=True), 1)

        cov_all = month_cov.reindex(self.destinations)
        available = ~cov_all[list(COVARIATE_NAMES)].isna().any(axis=1).to_numpy()
        vals = cov_all[list(COVARIATE_NAMES)].fillna(0.0).to_numpy()

        sel = pd.Index(self.destinations).get_indexer(dests)
        per_dest = []
        for ci in range(len(COVARIATE_NAMES)):
            per_dest.append(present[:, sel] * vals[sel, ci][None, :])
        missing = present[:, sel] & ~available[sel][None, :]

        w = shares * available[None, :]
        wsum = w.sum(axis=1)
        weighted = np.where(wsum[:, None] > 0, (w @ vals) / np.where(wsum > 0, wsum, 1.0)[:, None], 0.0)
        any_missing = (present & ~available[None, :]).any(axis=1)
        return np.hstack(per_dest + [missing.astype(np.float64), weighted,
                                     (any_missing & (wsum == 0)).astype(np.float64)[:, None]])


def build_panel(records: TransactionTable, covariates: CovariateTable | None, year: int, month: int,
                shock_aware: bool = False) -> FeaturePanel:
    """One row per firm exporting in (year, month); success = exports again a year later."""
    return PanelBuilder(records, covariates).build(year, month, shock_aware)


# ---------------------------------------------------------------------------
# descriptives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FirmStatus:
    firm_id: str
    quarter: tuple[int, int]
    status: str
    avg_export_value: float


def _quarter_months(quarter: int) -> list[int]:
    if quarter not in (1, 2, 3, 4):
        raise ValueError(f"quarter must be 1-4, got {quarter}")
    return [3 * quarter - 2, 3 * quarter - 1, 3 * quarter]


def classify_firm_status(records_t: TransactionTable, records_t1: TransactionTable,
                         quarter: int) -> list[FirmStatus]:
    """Surviving / entrant / exiting status of every firm seen in either year's quarter."""
    months = _quarter_months(quarter)
    a = records_t.frame.loc[records_t.frame["month"].isin(months)]
    b = records_t1.frame.loc[records_t1.frame["month"].isin(months)]
    year = int(b["year"].iloc[0]) if len(b) else (int(a["year"].iloc[0]) + 1 if len(a) else 0)
    ta = a.groupby("firm_id")["fob_value_usd"].sum()
    tb = b.groupby("firm_id")["fob_value_usd"].sum()
    out = []
    for firm in sorted(set(ta.index) | set(tb.index)):
        in_a, in_b = firm in ta.index, firm in tb.index
        if in_a and in_b:
            status, avg = "surviving", (ta[firm] + tb[firm]) / 2.0
        elif in_a:
            status, avg = "exiting", ta[firm]
        else:
            status, avg = "entrant", tb[firm]
        out.append(FirmStatus(firm, (year, quarter), status, float(avg)))
    return out


def status_summary(statuses: Sequence[FirmStatus]) -> pd.DataFrame:
    """Share of firms and of summed average export value by status."""
    frame = pd.DataFrame([(s.status, s.avg_export_value) for s in statuses], columns=["status", "value"])
    g = (frame.groupby("status")["value"].agg(["count", "sum"])
         .reindex(["surviving", "entrant", "exiting"], fill_value=0))
    g["firm_share"] = g["count"] / max(g["count"].sum(), 1)
    g["value_share"] = g["sum"] / g["sum"].sum() if g["sum"].sum() > 0 else 0.0
    return g.rename(columns={"count": "n_firms", "sum": "value"}).reset_index()


def growth_by_group(records_t: TransactionTable, records_t1: TransactionTable, group_by: str,
                    quarter: int) -> pd.DataFrame:
    """Exporter-count and value growth per destination or HS chapter between two years' quarter.

    Groups are ordered by their share of year-t exporters; ``top80`` marks the
    groups needed to reach 80% of that share. Growth is NaN when the base is 0.
    """
    if group_by not in ("destination", "sector"):
        raise ValueError("group_by must be 'destination' or 'sector'")
    months = _quarter_months(quarter)

    def agg(rec):
        f = rec.frame.loc[rec.frame["month"].isin(months)]
        key = f["destination"] if group_by == "destination" else f["product_code"].str.slice(0, 2)
        g = f.assign(group=key.to_numpy()).groupby("group")
        return g["firm_id"].nunique(), g["fob_value_usd"].sum()

    ca, va = agg(records_t)
    cb, vb = agg(records_t1)
    groups = sorted(set(ca.index) | set(cb.index))
    out = pd.DataFrame({"group": groups})
    out["count_t"] = ca.reindex(groups).fillna(0).to_numpy(dtype=np.int64)
    out["count_t1"] = cb.reindex(groups).fillna(0).to_numpy(dtype=np.int64)
    out["value_t"] = va.reindex(groups).fillna(0.0).to_numpy()
    out["value_t1"] = vb.reindex(groups).fillna(0.0).to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        out["exporter_growth"] = np.where(out["count_t"] > 0,
                                          (out["count_t1"] - out["count_t"]) / out["count_t"], np.nan)
        out["value_growth"] = np.where(out["value_t"] > 0,
                                       (out["value_t1"] - out["value_t"]) / out["value_t"], np.nan)
    total = out["count_t"].sum()
    out["exporter_share_t"] = out["count_t"] / total if total else 0.0
    out = out.sort_values(["exporter_share_t", "group"], ascending=[False, True], kind="mergesort")
    before = out["exporter_share_t"].cumsum() - out["exporter_share_t"]
    out["top80"] = (before < 0.8) & (out["count_t"] > 0)
    return out.reset_index(drop=True)
