"""Synthetic exporter worlds with a known survival process and a planted shock.

A world spans consecutive years observed over the same calendar months. Each
firm has a home HS section, a product list inside that section, a set of
destinations, a transport profile and a latent size. Presence in month m of
year t+1 follows a logistic survival model evaluated on the firm's realized
features in month m of year t (size quartile, industry, NP, ND, air usage,
month). In the shock year the logit is shifted down by a heterogeneous amount
whose monthly scale is solved so the mean probability effect over the cohort
hits a configured target.

Shocked and counterfactual outcomes share the same uniform draw, so the
realized effect of every firm-month is recorded alongside its probabilities.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .panel import (
    COVARIATE_NAMES,
    FLOAT_FORMAT,
    CovariateTable,
    TransactionTable,
    aggregate_daily_covariates,
    size_quartiles,
)
from .taxonomy import CONTINENTS, chapters_of_section

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# logits beyond this make one of the probabilities round to exactly 0 or 1
MAX_ABS_LOGIT = 35.0

DEPARTMENTS = ("ANT", "ATL", "BOG", "BOL", "CAL", "CUN", "RIS", "SAN", "VAL")


class ConfigError(ValueError):
    """Invalid generator or pipeline configuration; ``field`` holds the offending path."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


def _default_industry_mix():
    mix = {s: 1.0 for s in range(1, 23)}
    mix.update({2: 2.5, 4: 2.0, 6: 1.5, 11: 2.0, 15: 1.5, 16: 1.5, 20: 1.5})
    mix.update({19: 0.1, 21: 0.1, 22: 0.1})
    return mix


def _default_industry_coefs():
    return {2: 0.3, 4: 0.2, 6: 0.15, 11: -0.15, 14: -0.2, 16: 0.1, 20: -0.1}


@dataclass
class GeneratorConfig:
    """Parameters of a synthetic world. All probabilities are on the (0, 1) scale."""

    n_firms: int = 5000
    years: tuple = (2018, 2019, 2020)
    months: tuple = (1, 2, 3, 4, 5, 6, 7)
    seed: int = 7
    # survival logit: intercept + size_coef*(q-1) + np_coef*NP + nd_coef*ND
    #                 + air_coef*air + industry_coefs[s] + month_coefs[m]
    intercept: float = 0.9
    size_coef: float = 0.35
    np_coef: float = 0.08
    nd_coef: float = 0.15
    air_coef: float = -0.25
    industry_coefs: dict = field(default_factory=_default_industry_coefs)
    month_coefs: dict = field(default_factory=lambda: {1: 0.1, 2: 0.0, 3: -0.05, 4: 0.05, 5: 0.0, 6: -0.05, 7: 0.1})
    # shock: delta = -scale_m * (industry_weight * (size_base - size_slope * (q - 1)) + air_weight * air),
    # scale_m chosen so the mean probability effect in month m equals shock_targets[m]
    shock_year: int = 2020
    shock_targets: dict = field(default_factory=lambda: {4: -0.20, 5: -0.15, 6: -0.08, 7: -0.05})
    shocked_industries: tuple = (8, 10, 11, 12, 14, 17, 20)
    shocked_industry_weight: float = 1.0
    other_industry_weight: float = 0.1
    size_base: float = 1.0
    size_slope: float = 0.3
    air_weight: float = 0.3
    # firm structure
    industry_mix: dict = field(default_factory=_default_industry_mix)
    destination_zipf: float = 1.1
    max_products: int = 6
    max_destinations: int = 4
    value_lognormal: tuple = (9.0, 1.2)
    size_value_slope: float = 0.8
    transactions_base: float = 1.5
    presence_rate: float = 0.85
    entry_rate: float = 0.3
    survival_override: float | None = None
    reexport_share: float = 0.01
    covariate_missing_day_rate: float = 0.03
    missing_covariate_destination: str | None = "ARG"

    def validate(self) -> None:
        if self.n_firms < 1:
            raise ConfigError("n_firms", "must be at least 1")
        years = list(self.years)
        if len(years) < 2 or any(b != a + 1 for a, b in zip(years, years[1:])):
            raise ConfigError("years", "need at least 2 consecutive years")
        if not self.months or any(m not in range(1, 13) for m in self.months):
            raise ConfigError("months", "months must lie in 1-12")
        if len(set(self.months)) != len(self.months):
            raise ConfigError("months", "duplicate months")
        if self.shock_targets and self.shock_year not in years[1:]:
            raise ConfigError("shock_year", "must be a year after the first configured year")
        for m, target in self.shock_targets.items():
            if int(m) not in self.months:
                raise ConfigError(f"shock_targets.{m}", "month not generated")
            if not -1.0 < float(target) <= 0.0:
                raise ConfigError(f"shock_targets.{m}", "target effect must lie in (-1, 0]")
        for name in ("presence_rate", "entry_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(name, "must be a probability")
        if self.survival_override is not None and not 0.0 <= self.survival_override <= 1.0:
            raise ConfigError("survival_override", "must be a probability")
        if self.size_base - 3 * self.size_slope < 0 or self.size_base < 0:
            raise ConfigError("size_slope", "size weight must stay nonnegative for every quartile")
        if min(self.other_industry_weight, self.shocked_industry_weight, self.air_weight) < 0:
            raise ConfigError("shocked_industry_weight", "shock weights must be nonnegative")
        if self.value_lognormal[1] <= 0:
            raise ConfigError("value_lognormal", "sigma must be positive")
        if not 1 <= self.max_products <= 20:
            raise ConfigError("max_products", "must be in 1-20")
        if not 1 <= self.max_destinations <= len(CONTINENTS):
            raise ConfigError("max_destinations", f"must be in 1-{len(CONTINENTS)}")
        if not 0.0 <= self.reexport_share < 1.0:
            raise ConfigError("reexport_share", "must be in [0, 1)")
        for s, w in self.industry_mix.items():
            if int(s) not in range(1, 23) or w < 0:
                raise ConfigError(f"industry_mix.{s}", "unknown section or negative weight")
        if sum(self.industry_mix.values()) <= 0:
            raise ConfigError("industry_mix", "weights sum to zero")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], prefix: str = "") -> "GeneratorConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(prefix + key, "unknown field")
            default = getattr(cls(), key) if known[key].default_factory is not None else known[key].default
            try:
                kwargs[key] = _coerce(value, default)
            except (TypeError, ValueError) as exc:
                raise ConfigError(prefix + key, str(exc)) from None
        cfg = cls(**kwargs)
        try:
            cfg.validate()
        except ConfigError as exc:
            raise ConfigError(prefix + exc.field, str(exc).split(": ", 1)[1]) from None
        return cfg

    @classmethod
    def from_toml(cls, path) -> "GeneratorConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_mapping(data.get("generator", data), prefix="generator.")

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, dict):
                out[k] = {str(a): b for a, b in sorted(v.items())}
            elif isinstance(v, tuple):
                out[k] = list(v)
        return out

    def industry_weight(self, section: np.ndarray) -> np.ndarray:
        shocked = np.isin(section, list(self.shocked_industries))
        return np.where(shocked, self.shocked_industry_weight, self.other_industry_weight)

    def shock_weight(self, section, quartile, air) -> np.ndarray:
        """Relative logit shift of each firm-month (before the monthly scale).

        Linear in the industry dummies, the size-by-industry factor and the
        air dummy of the panel, so a linear logit on panel features can
        represent the shocked survival model exactly.
        """
        q = np.asarray(quartile, dtype=np.float64)
        size_term = self.size_base - self.size_slope * (q - 1.0)
        air_term = self.air_weight * np.asarray(air, dtype=np.float64)
        return self.industry_weight(np.asarray(section)) * size_term + air_term


def _coerce(value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError("expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError("expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError("expected a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise TypeError("expected a list")
        return tuple(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise TypeError("expected a table")
        return {int(k): float(v) for k, v in value.items()}
    if default is None or isinstance(default, str):
        if value is not None and not isinstance(value, (str, int, float)):
            raise TypeError("expected a scalar")
        return value
    return value


@dataclass
class EffectOracle:
    """True survival probabilities of every cohort firm-month, with and without the shock.

    ``table`` has one row per (firm_id, year, month) of each cohort year that
    has a following year, with columns ``p_counterfactual``, ``p_shocked``,
    ``effect`` (their difference), ``outcome_counterfactual``,
    ``outcome_shocked``, plus the realized ``size_quartile``, ``industry`` and
    ``air`` used by the survival model. ``scales`` maps shocked months to the
    solved logit scale.
    """

    table: pd.DataFrame
    scales: dict

    def cohort(self, year: int, month: int | None = None) -> pd.DataFrame:
        t = self.table
        mask = t["year"] == year
        if month is not None:
            mask &= t["month"] == month
        return t.loc[mask]

    def mean_effect(self, year: int, month: int) -> float:
        c = self.cohort(year, month)
        return float(c["effect"].mean()) if len(c) else 0.0

    def realized_effect(self, year: int, month: int) -> float:
        c = self.cohort(year, month)
        return float((c["outcome_shocked"] - c["outcome_counterfactual"]).mean()) if len(c) else 0.0


@dataclass
class SyntheticWorld:
    records: TransactionTable
    covariates: CovariateTable
    oracle: EffectOracle
    daily_covariates: pd.DataFrame
    reexports: pd.DataFrame
    config: GeneratorConfig

    def __iter__(self):
        return iter((self.records, self.covariates, self.oracle))

    def write(self, directory) -> dict:
        """Write transactions, daily covariates and the oracle as CSV; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tx = self.records.frame.loc[:, ["firm_id", "date", "product_code", "origin_department",
                                        "transport_mode", "destination", "fob_value_usd"]].copy()
        tx["is_reexport"] = 0
        rx = self.reexports.copy()
        rx["is_reexport"] = 1
        allrows = pd.concat([tx, rx], ignore_index=True)
        allrows = allrows.sort_values(["date", "firm_id", "product_code", "destination", "fob_value_usd"],
                                      kind="mergesort")
        allrows["date"] = allrows["date"].dt.strftime("%Y-%m-%d")
        paths = {
            "transactions": directory / "transactions.csv",
            "covariates": directory / "covariates.csv",
            "oracle": directory / "oracle.csv",
        }
        allrows.to_csv(paths["transactions"], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        cov = self.daily_covariates.copy()
        cov["date"] = cov["date"].dt.strftime("%Y-%m-%d")
        cov.to_csv(paths["covariates"], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self.oracle.table.to_csv(paths["oracle"], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return paths


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class _Firms:
    """Static firm attributes drawn once per world."""

    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        n = cfg.n_firms
        self.ids = np.array([f"F{i:06d}" for i in range(n)], dtype=object)
        sections = np.array(sorted(cfg.industry_mix), dtype=np.int64)
        weights = np.array([cfg.industry_mix[s] for s in sections], dtype=np.float64)
        self.section = sections[rng.choice(len(sections), size=n, p=weights / weights.sum())]
        self.latent = rng.standard_normal(n)
        self.department = np.array(DEPARTMENTS, dtype=object)[rng.integers(0, len(DEPARTMENTS), size=n)]

        # products: distinct 6-digit codes inside the home section
        self.n_products = 1 + np.minimum(rng.poisson(0.9 + 0.4 * np.clip(self.latent, 0, None)),
                                         cfg.max_products - 1)
        self.products = np.empty((n, cfg.max_products), dtype=object)
        for i in range(n):
            chapters = chapters_of_section(int(self.section[i]))
            seen = set()
            for k in range(self.n_products[i]):
                while True:
                    ch = chapters[rng.integers(0, len(chapters))]
                    hs6 = f"{ch:02d}{rng.integers(0, 10000):04d}"
                    if hs6 not in seen:
                        break
                seen.add(hs6)
                self.products[i, k] = f"{hs6}{rng.integers(0, 10000):04d}"

        # destinations: distinct, drawn from a Zipf-like popularity profile
        dests = np.array(sorted(CONTINENTS), dtype=object)
        order = rng.permutation(len(dests))
        pop = np.empty(len(dests))
        pop[order] = 1.0 / np.arange(1, len(dests) + 1) ** cfg.destination_zipf
        pop /= pop.sum()
        self.destination_names = dests
        self.n_destinations = 1 + np.minimum(rng.poisson(0.7 + 0.4 * np.clip(self.latent, 0, None)),
                                             cfg.max_destinations - 1)
        self.destinations = np.full((n, cfg.max_destinations), -1, dtype=np.int64)
        for i in range(n):
            picked = rng.choice(len(dests), size=self.n_destinations[i], replace=False, p=pop)
            self.destinations[i, : len(picked)] = picked

        # transport: main surface mode plus a firm-level propensity to ship by air
        self.surface = np.where(rng.random(n) < 0.65, "sea", "land").astype(object)
        air_prone = rng.random(n) < 0.25
        self.air_prob = np.where(air_prone, rng.uniform(0.4, 0.9, n), rng.uniform(0.0, 0.05, n))
        self.activity = np.clip(cfg.presence_rate + 0.1 * rng.standard_normal(n), 0.0, 1.0) \
            if cfg.presence_rate < 1.0 else np.ones(n)


def _transactions(cfg, firms: _Firms, firm_idx, year, month, rng):
    """Transactions of the given present firms in one month."""
    lam = cfg.transactions_base * np.exp(0.45 * firms.latent[firm_idx])
    counts = 1 + rng.poisson(lam)
    owner = np.repeat(firm_idx, counts)
    m = owner.size
    prod_k = (rng.random(m) * firms.n_products[owner]).astype(np.int64)
    # first destination is the main one: weights 1, 1/2, 1/3, ...
    nd = firms.n_destinations[owner]
    u = rng.random(m)
    dest_k = np.zeros(m, dtype=np.int64)
    for k in range(1, cfg.max_destinations):
        has = nd > k
        # inverse-CDF over harmonic weights restricted to the firm's destination count
        dest_k = np.where(has & (u > _harmonic_cdf(k, nd)), k, dest_k)
    air = rng.random(m) < firms.air_prob[owner]
    other = rng.random(m) < 0.01
    transport = np.where(air, "air", np.where(other, "other", firms.surface[owner])).astype(object)
    mu, sigma = cfg.value_lognormal
    values = np.round(np.exp(mu + cfg.size_value_slope * firms.latent[owner] + sigma * rng.standard_normal(m)), 2)
    days = rng.integers(1, 29, size=m)
    dates = pd.to_datetime({"year": np.full(m, year), "month": np.full(m, month), "day": days})
    return pd.DataFrame({
        "firm_id": firms.ids[owner],
        "date": dates.to_numpy(),
        "product_code": firms.products[owner, prod_k],
        "origin_department": firms.department[owner],
        "transport_mode": transport,
        "destination": firms.destination_names[firms.destinations[owner, dest_k]],
        "fob_value_usd": values,
        "_firm": owner,
    })


def _harmonic_cdf(k, nd):
    """P(index < k) under weights 1/(j+1), j < nd."""
    w_all = np.array([1.0 / (j + 1) for j in range(int(nd.max()) + 1)])
    csum = np.concatenate([[0.0], np.cumsum(w_all)])
    return csum[k] / csum[nd]


def _month_features(tx: pd.DataFrame, n_firms: int):
    """Per-firm NP (distinct 6-digit products), ND and air usage in one month."""
    firm = tx["_firm"].to_numpy()
    hs6 = tx["product_code"].str.slice(0, 6)
    NP = pd.Series(hs6.to_numpy()).groupby(firm).nunique()
    ND = tx["destination"].groupby(firm).nunique()
    air = (tx["transport_mode"] == "air").groupby(firm).any()
    out_np = np.zeros(n_firms)
    out_nd = np.zeros(n_firms)
    out_air = np.zeros(n_firms, dtype=bool)
    out_np[NP.index.to_numpy()] = NP.to_numpy()
    out_nd[ND.index.to_numpy()] = ND.to_numpy()
    out_air[air.index.to_numpy()] = air.to_numpy()
    return out_np, out_nd, out_air


def _solve_scale(eta, weight, target, tol=1e-12):
    """Monthly logit scale whose mean probability effect equals ``target``."""
    if target == 0.0 or eta.size == 0:
        return 0.0
    p0 = _sigmoid(eta)

    def mean_effect(scale):
        return float(np.mean(_sigmoid(eta - scale * weight) - p0))

    floor = mean_effect(2 * MAX_ABS_LOGIT)
    if floor > target:
        raise ConfigError("shock_targets", f"target {target} unreachable (strongest shock gives {floor:.4f})")
    lo, hi = 0.0, 1.0
    while mean_effect(hi) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_effect(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _covariates(cfg: GeneratorConfig, destinations, rng) -> pd.DataFrame:
    """Daily pandemic indicators: zero before the shock year, a ramp from early March on."""
    rows = []
    for year in cfg.years:
        for month in cfg.months:
            n_days = pd.Period(f"{year}-{month:02d}").days_in_month
            for day in range(1, n_days + 1):
                rows.append((year, month, day))
    cal = pd.DataFrame(rows, columns=["year", "month", "day"])
    dates = pd.to_datetime(cal)
    doy = dates.dt.dayofyear.to_numpy()
    in_shock = (cal["year"] == cfg.shock_year).to_numpy()
    # 0 before March 1 of the shock year, full strength by mid-April, slow decline after
    ramp = np.where(in_shock, np.clip((doy - 60) / 45.0, 0.0, 1.0), 0.0)
    decay = np.where(in_shock & (doy > 105), np.exp(-(doy - 105) / 400.0), 1.0)
    level = ramp * decay

    frames = []
    for dest in destinations:
        if dest == cfg.missing_covariate_destination:
            continue
        peak = rng.uniform(40.0, 90.0)
        noise = rng.normal(0.0, 3.0, size=(4, len(cal)))
        econ = np.clip(peak * 0.8 * level + noise[0] * level, 0, 100)
        gov = np.clip(peak * 0.9 * level + noise[1] * level, 0, 100)
        health = np.clip(peak * 0.85 * level + noise[2] * level, 0, 100)
        string = np.clip(peak * level + noise[3] * level, 0, 100)
        growth = rng.uniform(0.5, 3.0)
        cases = np.maximum(growth * 40.0 * level ** 2 * (1 + 0.1 * rng.standard_normal(len(cal))), 0.0)
        deaths = cases * rng.uniform(0.01, 0.04)
        frame = pd.DataFrame({
            "destination": dest, "date": dates.to_numpy(),
            "economic_index": econ, "government_index": gov, "health_index": health,
            "stringency_index": string, "cases_per_100k": cases, "deaths_per_100k": deaths,
        })
        gaps = rng.random((len(cal), len(COVARIATE_NAMES))) < cfg.covariate_missing_day_rate
        for j, c in enumerate(COVARIATE_NAMES):
            frame.loc[gaps[:, j], c] = np.nan
        frames.append(frame)
    out = pd.concat(frames, ignore_index=True)
    for c in COVARIATE_NAMES:
        out[c] = out[c].round(6)
    return out


def generate(config: GeneratorConfig) -> SyntheticWorld:
    """Draw a synthetic world. Identical configs give identical worlds."""
    config.validate()
    cfg = config
    root = np.random.SeedSequence(cfg.seed)
    s_firms, s_presence, s_tx, s_cov, s_rx = root.spawn(5)
    firms = _Firms(cfg, np.random.default_rng(s_firms))
    rng_p = np.random.default_rng(s_presence)
    rng_tx = np.random.default_rng(s_tx)
    n = cfg.n_firms
    years = list(cfg.years)
    months = list(cfg.months)

    present = {m: rng_p.random(n) < firms.activity for m in months}
    tx_frames = []
    oracle_rows = []
    scales = {}
    for yi, year in enumerate(years):
        month_tx = {}
        for m in months:
            idx = np.flatnonzero(present[m])
            month_tx[m] = _transactions(cfg, firms, idx, year, m, rng_tx)
        tx_frames.extend(month_tx[m] for m in months)
        if yi == len(years) - 1:
            break

        annual = np.zeros(n)
        for m in months:
            np.add.at(annual, month_tx[m]["_firm"].to_numpy(), month_tx[m]["fob_value_usd"].to_numpy())
        active_year = annual > 0
        quart = np.ones(n, dtype=np.int64)
        quart[active_year] = size_quartiles(np.log(annual[active_year]))

        next_present = {}
        for m in months:
            idx = np.flatnonzero(present[m])
            NP, ND, air = _month_features(month_tx[m], n)
            eta = (cfg.intercept + cfg.size_coef * (quart - 1) + cfg.np_coef * NP + cfg.nd_coef * ND
                   + cfg.air_coef * air
                   + np.array([cfg.industry_coefs.get(int(s), 0.0) for s in firms.section])
                   + cfg.month_coefs.get(m, 0.0))[idx]
            if np.any(np.abs(eta) > MAX_ABS_LOGIT):
                raise ConfigError("intercept", "survival logit leaves the representable range")
            weight = cfg.shock_weight(firms.section[idx], quart[idx], air[idx])
            target = float(cfg.shock_targets.get(m, 0.0)) if year + 1 == cfg.shock_year else 0.0
            scale = _solve_scale(eta, weight, target)
            if year + 1 == cfg.shock_year and m in cfg.shock_targets:
                scales[m] = scale
            shifted = eta - scale * weight
            if np.any(np.abs(shifted) > MAX_ABS_LOGIT):
                raise ConfigError("shock_targets", "shocked survival logit leaves the representable range")
            if cfg.survival_override is not None:
                p0 = np.full(idx.size, cfg.survival_override)
                p1 = p0.copy()
            else:
                p0 = _sigmoid(eta)
                p1 = _sigmoid(shifted)
            u = rng_p.random(n)
            out1 = u[idx] < p1
            out0 = u[idx] < p0
            nxt = (u < cfg.entry_rate) & ~present[m]
            nxt[idx] = out1
            next_present[m] = nxt
            oracle_rows.append(pd.DataFrame({
                "firm_id": firms.ids[idx], "year": year, "month": m,
                "size_quartile": quart[idx], "industry": firms.section[idx], "air": air[idx].astype(np.int64),
                "NP": NP[idx].astype(np.int64), "ND": ND[idx].astype(np.int64),
                "p_counterfactual": p0, "p_shocked": p1, "effect": p1 - p0,
                "outcome_counterfactual": out0.astype(np.int64), "outcome_shocked": out1.astype(np.int64),
            }))
        present = next_present

    tx = pd.concat(tx_frames, ignore_index=True).drop(columns="_firm")
    tx = tx.sort_values(["date", "firm_id", "product_code", "destination", "fob_value_usd"],
                        kind="mergesort").reset_index(drop=True)
    records = TransactionTable(tx)

    rng_rx = np.random.default_rng(s_rx)
    n_rx = int(round(cfg.reexport_share * len(tx)))
    rx = tx.iloc[np.sort(rng_rx.choice(len(tx), size=n_rx, replace=False))].copy() if n_rx else tx.iloc[:0].copy()
    rx["fob_value_usd"] = np.round(rx["fob_value_usd"].to_numpy() * rng_rx.uniform(0.5, 2.0, len(rx)), 2)

    daily = _covariates(cfg, sorted(set(tx["destination"])), np.random.default_rng(s_cov))
    oracle = EffectOracle(pd.concat(oracle_rows, ignore_index=True) if oracle_rows else pd.DataFrame(), scales)
    return SyntheticWorld(records, aggregate_daily_covariates(daily), oracle, daily,
                          rx.reset_index(drop=True), cfg)
