"""Aggregate flow logs into report tables and correlation statistics.

The monthly table and protocol breakdown stay on exact arithmetic and are
rounded only for display (USD in whole millions, percentages to one
decimal).  The correlation layer is statistical and works in floats: it
builds per-hour and per-day series of collateral change, price change and
debt percentage, then correlates each variable with the debt percentage
of the following period.

"Collateral change" is realized as net USD collateral flow (deposits
minus withdrawals) per period; the source material leaves the term
undefined, so this interpretation is deliberate and documented.  Price
change uses ETH (close over open per period, carry-forward lookups).
Periods with zero deposits have an undefined debt percentage and are
dropped pairwise rather than imputed.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from scipy.stats import t as student_t

from .decode import COLLATERAL_DEPOSIT, COLLATERAL_WITHDRAW, SWAP, CanonicalEvent
from .errors import InsufficientDataError, UndefinedCorrelationError, ValuationError
from .ledger import FlowRecord
from .market import DAY, HOUR, PriceSeries
from .registry import PROTOCOLS, Currency
from .util import ZERO, format_places, format_usd_millions, month_key, month_range

MIN_CORRELATION_SAMPLES = 3

STAR_THRESHOLDS = ((0.01, "***"), (0.05, "**"), (0.1, "*"))


@dataclass(frozen=True)
class MonthlyDfcRow:
    month: str
    debt_usd: Fraction
    nondebt_usd: Fraction

    @property
    def total_usd(self) -> Fraction:
        return self.debt_usd + self.nondebt_usd

    @property
    def debt_pct(self) -> Fraction | None:
        if self.total_usd == 0:
            return None
        return 100 * self.debt_usd / self.total_usd


@dataclass(frozen=True)
class CorrelationResult:
    var1: str  # collateral_change | price_change
    lag: str  # next_hour | next_day
    r: float | None
    p_value: float | None
    n: int

    @property
    def defined(self) -> bool:
        return self.r is not None

    @property
    def stars(self) -> str:
        if self.p_value is None:
            return ""
        for threshold, marker in STAR_THRESHOLDS:
            if self.p_value < threshold:
                return marker
        return ""


def _span_months(records: Sequence[FlowRecord]) -> list[str]:
    if not records:
        raise InsufficientDataError("no flow records to report on")
    months = [month_key(r.timestamp) for r in records]
    return month_range(min(months), max(months))


def monthly_dfc_rows(records: Sequence[FlowRecord]) -> list[MonthlyDfcRow]:
    """One row per calendar month spanned by the flow log, deposits only."""
    debt: dict[str, Fraction] = defaultdict(lambda: ZERO)
    nondebt: dict[str, Fraction] = defaultdict(lambda: ZERO)
    for r in records:
        if r.kind == COLLATERAL_DEPOSIT:
            month = month_key(r.timestamp)
            debt[month] += r.debt_usd
            nondebt[month] += r.nondebt_usd
    return [
        MonthlyDfcRow(month, debt[month], nondebt[month])
        for month in _span_months(records)
    ]


def protocol_breakdown(records: Sequence[FlowRecord]) -> list[tuple[str, str, Fraction | None]]:
    """(month, protocol, debt_pct) cells; None where a protocol took no
    deposits that month."""
    debt: dict[tuple[str, str], Fraction] = defaultdict(lambda: ZERO)
    total: dict[tuple[str, str], Fraction] = defaultdict(lambda: ZERO)
    protocols: set[str] = set()
    for r in records:
        protocols.add(r.protocol)
        if r.kind == COLLATERAL_DEPOSIT:
            key = (month_key(r.timestamp), r.protocol)
            debt[key] += r.debt_usd
            total[key] += r.debt_usd + r.nondebt_usd
    cells = []
    for month in _span_months(records):
        for protocol in sorted(protocols):
            key = (month, protocol)
            pct = 100 * debt[key] / total[key] if total[key] > 0 else None
            cells.append((month, protocol, pct))
    return cells


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson R and two-sided p-value via the t distribution.

    p is computed from t = R * sqrt((n-2) / (1-R^2)) against Student's t
    with n-2 degrees of freedom.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < MIN_CORRELATION_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_CORRELATION_SAMPLES} samples, got {n}")
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    ss_x = math.fsum(v * v for v in dx)
    ss_y = math.fsum(v * v for v in dy)
    if ss_x == 0 or ss_y == 0:
        raise UndefinedCorrelationError("zero variance input")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(ss_x * ss_y)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t_stat = r * math.sqrt((n - 2) / (1 - r * r))
    p = 2 * float(student_t.sf(abs(t_stat), n - 2))
    return r, p


def _period_series(records: Sequence[FlowRecord], period: int):
    dep_total: dict[int, Fraction] = defaultdict(lambda: ZERO)
    dep_debt: dict[int, Fraction] = defaultdict(lambda: ZERO)
    wd_total: dict[int, Fraction] = defaultdict(lambda: ZERO)
    for r in records:
        bucket = r.timestamp // period
        if r.kind == COLLATERAL_DEPOSIT:
            dep_total[bucket] += r.debt_usd + r.nondebt_usd
            dep_debt[bucket] += r.debt_usd
        elif r.kind == COLLATERAL_WITHDRAW:
            wd_total[bucket] += r.debt_usd + r.nondebt_usd
    return dep_total, dep_debt, wd_total


def lagged_correlations(
    records: Sequence[FlowRecord],
    prices: PriceSeries,
    *,
    price_key: str = "ETH",
) -> list[CorrelationResult]:
    """The four {collateral change, price change} x {next hour, next day}
    correlations against the following period's debt percentage."""
    if not records:
        raise InsufficientDataError("no flow records for correlation analysis")
    results = []
    for var1 in ("collateral_change", "price_change"):
        for period, lag in ((HOUR, "next_hour"), (DAY, "next_day")):
            dep_total, dep_debt, wd_total = _period_series(records, period)
            buckets = sorted(set(dep_total) | set(wd_total))
            first, last = buckets[0], buckets[-1]
            xs: list[float] = []
            ys: list[float] = []
            for bucket in range(first, last):
                nxt = bucket + 1
                if dep_total.get(nxt, ZERO) == 0:
                    continue  # debt percentage undefined: drop pairwise
                debt_pct = float(dep_debt[nxt] / dep_total[nxt])
                if var1 == "collateral_change":
                    x = float(dep_total.get(bucket, ZERO) - wd_total.get(bucket, ZERO))
                else:
                    try:
                        open_price = prices.price_at(price_key, bucket * period)
                        close_price = prices.price_at(price_key, (bucket + 1) * period)
                    except ValuationError:
                        continue
                    x = float(close_price / open_price) - 1.0
                xs.append(x)
                ys.append(debt_pct)
            if len(xs) < MIN_CORRELATION_SAMPLES:
                raise InsufficientDataError(
                    f"{var1}/{lag}: only {len(xs)} usable paired periods"
                )
            try:
                r, p = pearson(xs, ys)
                results.append(CorrelationResult(var1, lag, r, p, len(xs)))
            except UndefinedCorrelationError:
                results.append(CorrelationResult(var1, lag, None, None, len(xs)))
    return results


def summary_stats(
    events: Sequence[CanonicalEvent],
    prices: PriceSeries,
    currencies: dict[str, Currency],
) -> list[tuple[str, dict[str, object]]]:
    """Dataset summary rows: unique addresses, transaction counts and USD
    totals per protocol, over everything decoded (not only eligible
    groups).  Swaps are valued on the sent leg at event time."""
    actors: dict[str, set[str]] = defaultdict(set)
    counts: dict[str, int] = defaultdict(int)
    usd: dict[tuple[str, str], Fraction] = defaultdict(lambda: ZERO)
    kind_to_stat = {
        COLLATERAL_DEPOSIT: "collateral_deposited_usd",
        COLLATERAL_WITHDRAW: "collateral_withdrawn_usd",
        "debt_create": "debt_created_usd",
        "debt_repay": "debt_repaid_usd",
        SWAP: "currency_swapped_usd",
    }
    for e in events:
        actors[e.protocol].add(e.actor)
        counts[e.protocol] += 1
        stat = kind_to_stat[e.kind]
        if e.kind == SWAP:
            value = prices.value_usd(e.amount_sent, currencies[e.currency_sent], e.timestamp)
        else:
            value = prices.value_usd(e.amount, currencies[e.currency], e.timestamp)
        usd[(stat, e.protocol)] += value

    rows: list[tuple[str, dict[str, object]]] = [
        ("unique_addresses", {p: len(actors[p]) for p in PROTOCOLS}),
        ("transactions", {p: counts[p] for p in PROTOCOLS}),
    ]
    for stat in kind_to_stat.values():
        rows.append((stat, {p: usd[(stat, p)] for p in PROTOCOLS}))
    return rows


# --- CSV writers --------------------------------------------------------------

def write_monthly_csv(path: str | Path, rows: Sequence[MonthlyDfcRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ("month", "debt_usd_millions", "nondebt_usd_millions", "total_usd_millions", "debt_pct")
        )
        for row in rows:
            pct = row.debt_pct
            writer.writerow((
                row.month,
                format_usd_millions(row.debt_usd),
                format_usd_millions(row.nondebt_usd),
                format_usd_millions(row.total_usd),
                format_places(pct, 1) if pct is not None else "",
            ))


def write_breakdown_csv(path: str | Path, cells) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("month", "protocol", "debt_pct"))
        for month, protocol, pct in cells:
            writer.writerow((month, protocol, format_places(pct, 1) if pct is not None else ""))


def write_correlations_csv(path: str | Path, results: Sequence[CorrelationResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("var1", "lag", "R", "p_value", "stars", "n"))
        for res in results:
            writer.writerow((
                res.var1,
                res.lag,
                f"{res.r:.6f}" if res.r is not None else "",
                f"{res.p_value:.6g}" if res.p_value is not None else "",
                res.stars,
                res.n,
            ))


def write_summary_csv(path: str | Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("statistic",) + PROTOCOLS)
        for stat, per_protocol in rows:
            formatted = []
            for protocol in PROTOCOLS:
                value = per_protocol[protocol]
                formatted.append(
                    format_places(value, 2) if isinstance(value, Fraction) else value
                )
            writer.writerow((stat,) + tuple(formatted))
