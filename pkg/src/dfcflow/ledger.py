"""First-out debt-taint ledger over the canonical event stream.

Each eligible address group carries a per-currency wallet debt balance and
a per-(protocol, currency) platform debt balance.  Debt creation raises
the wallet balance, repayment lowers it (clamped at zero: with only five
currencies and four protocols observed, repaying more than the tracked
debt is partial observability, not an error).  Collateral deposits move
debt first (the first-out rule: min of amount and wallet debt), and the
debt-financed part of every deposit accumulates into the reported flow
totals, valued in USD at event time.  Withdrawals reverse the deposit
direction, bounded by the platform balance, so tainted units are
conserved.  Swaps carry taint across currencies in proportion to the debt
share of the amount sent.

All arithmetic is exact rational; the deposit split loses nothing
(debt + non-debt == amount, exactly), and results are independent of
delivery order because events are re-sorted on the unique
(block_number, log_index) key before application.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .cluster import Partition
from .decode import (
    COLLATERAL_DEPOSIT,
    COLLATERAL_WITHDRAW,
    DEBT_CREATE,
    DEBT_REPAY,
    SWAP,
    CanonicalEvent,
)
from .errors import LedgerError, SequencingError
from .util import ZERO, format_exact, month_key, parse_amount

Valuer = Callable[[str, Fraction, int], Fraction]  # (currency, amount, ts) -> USD

FLOW_CSV_COLUMNS = (
    "group_representative",
    "timestamp",
    "block_number",
    "protocol",
    "currency",
    "kind",
    "debt_amount_token",
    "nondebt_amount_token",
    "debt_amount_usd",
    "nondebt_amount_usd",
)


def first_out_split(amount: Fraction, wallet_debt_balance: Fraction) -> tuple[Fraction, Fraction]:
    """Debt-financed units move first: (min(amount, debt), remainder)."""
    if amount < 0 or wallet_debt_balance < 0:
        raise ValueError("first-out split needs non-negative inputs")
    debt_amt = min(amount, wallet_debt_balance)
    return debt_amt, amount - debt_amt


@dataclass(frozen=True)
class FlowRecord:
    """One collateral movement, split into debt and non-debt components."""

    group: str
    timestamp: int
    block_number: int
    protocol: str
    currency: str
    kind: str  # collateral_deposit | collateral_withdraw
    debt_token: Fraction
    nondebt_token: Fraction
    debt_usd: Fraction
    nondebt_usd: Fraction


class GroupLedger:
    """Running debt balances and flow log for one address group."""

    def __init__(self, group: str, valuer: Valuer):
        self.group = group
        self._valuer = valuer
        self.wallet_debt: dict[str, Fraction] = defaultdict(lambda: ZERO)
        self.platform_debt: dict[tuple[str, str], Fraction] = defaultdict(lambda: ZERO)
        self.flow_log: list[FlowRecord] = []
        self.sum_debt_flows_usd = ZERO
        self._last_key: tuple[int, int] | None = None

    def apply(self, e: CanonicalEvent) -> None:
        if self._last_key is not None and e.order_key <= self._last_key:
            raise SequencingError(
                f"event at {e.order_key} arrived after {self._last_key} in group {self.group}"
            )
        self._last_key = e.order_key

        if e.kind == DEBT_CREATE:
            self.wallet_debt[e.currency] += e.amount
        elif e.kind == DEBT_REPAY:
            balance = self.wallet_debt[e.currency]
            self.wallet_debt[e.currency] = balance - min(e.amount, balance)
        elif e.kind == COLLATERAL_DEPOSIT:
            debt_amt, nondebt_amt = first_out_split(e.amount, self.wallet_debt[e.currency])
            self.wallet_debt[e.currency] -= debt_amt
            self.platform_debt[(e.protocol, e.currency)] += debt_amt
            record = self._record(e, debt_amt, nondebt_amt)
            self.sum_debt_flows_usd += record.debt_usd
        elif e.kind == COLLATERAL_WITHDRAW:
            held = self.platform_debt[(e.protocol, e.currency)]
            moved = min(e.amount, held)
            self.platform_debt[(e.protocol, e.currency)] = held - moved
            self.wallet_debt[e.currency] += moved
            self._record(e, moved, e.amount - moved)
        elif e.kind == SWAP:
            self._apply_swap(e)
        else:
            raise LedgerError(f"unknown event kind {e.kind!r}")

        self._check_non_negative(e)

    def _apply_swap(self, e: CanonicalEvent) -> None:
        if e.amount_sent == 0:
            return
        held = self.wallet_debt[e.currency_sent]
        debt_pct = min(Fraction(1), held / e.amount_sent)
        self.wallet_debt[e.currency_sent] = held - e.amount_sent * debt_pct
        self.wallet_debt[e.currency_received] += e.amount_received * debt_pct

    def _record(self, e: CanonicalEvent, debt_amt: Fraction, nondebt_amt: Fraction) -> FlowRecord:
        record = FlowRecord(
            group=self.group,
            timestamp=e.timestamp,
            block_number=e.block_number,
            protocol=e.protocol,
            currency=e.currency,
            kind=e.kind,
            debt_token=debt_amt,
            nondebt_token=nondebt_amt,
            debt_usd=self._valuer(e.currency, debt_amt, e.timestamp),
            nondebt_usd=self._valuer(e.currency, nondebt_amt, e.timestamp),
        )
        self.flow_log.append(record)
        return record

    def _check_non_negative(self, e: CanonicalEvent) -> None:
        for currency, balance in self.wallet_debt.items():
            if balance < 0:
                raise LedgerError(
                    f"wallet debt for {currency} went negative at {e.order_key}"
                )
        for key, balance in self.platform_debt.items():
            if balance < 0:
                raise LedgerError(f"platform debt for {key} went negative at {e.order_key}")


@dataclass
class FlowTotals:
    """Cumulative debt-financed deposit flows, bucketed for reporting."""

    sum_debt_flows_usd: Fraction = ZERO
    # (month, protocol, currency) -> [debt_usd, nondebt_usd]; deposits only
    buckets: dict[tuple[str, str, str], list[Fraction]] = field(default_factory=dict)

    def add_deposit(self, record: FlowRecord) -> None:
        key = (month_key(record.timestamp), record.protocol, record.currency)
        bucket = self.buckets.setdefault(key, [ZERO, ZERO])
        bucket[0] += record.debt_usd
        bucket[1] += record.nondebt_usd
        self.sum_debt_flows_usd += record.debt_usd

    @classmethod
    def from_flow_records(cls, records: Iterable[FlowRecord]) -> "FlowTotals":
        totals = cls()
        for record in records:
            if record.kind == COLLATERAL_DEPOSIT:
                totals.add_deposit(record)
        return totals

    def as_comparable(self):
        return (
            self.sum_debt_flows_usd,
            {k: tuple(v) for k, v in self.buckets.items()},
        )


@dataclass
class LedgerRun:
    totals: FlowTotals
    flow_records: list[FlowRecord]
    group_ledgers: dict[str, GroupLedger]
    stats: dict[str, int]


def run_ledger(
    events: Sequence[CanonicalEvent],
    partition: Partition,
    valuer: Valuer,
) -> LedgerRun:
    """Apply the event stream to per-group ledgers and aggregate flows.

    Events are routed to the eligible group containing their actor; events
    initiated by addresses outside every eligible group are skipped.
    Cross-group on-behalf repayments apply to the actor's group (the funds
    leave the actor's wallet) and are counted in stats.
    """
    ordered = sorted(events, key=lambda e: e.order_key)
    for earlier, later in zip(ordered, ordered[1:]):
        if earlier.order_key == later.order_key:
            raise SequencingError(f"duplicate event position {earlier.order_key}")

    ledgers: dict[str, GroupLedger] = {}
    stats = {"applied": 0, "skipped_unrouted": 0, "cross_group_repays": 0}
    flow_records: list[FlowRecord] = []

    for e in ordered:
        rep = partition.eligible_rep_of(e.actor)
        if rep is None:
            stats["skipped_unrouted"] += 1
            continue
        if e.kind == DEBT_REPAY and e.on_behalf_of is not None:
            beneficiary_rep = partition.eligible_rep_of(e.on_behalf_of)
            if beneficiary_rep != rep:
                stats["cross_group_repays"] += 1
        ledger = ledgers.get(rep)
        if ledger is None:
            ledger = ledgers[rep] = GroupLedger(rep, valuer)
        before = len(ledger.flow_log)
        ledger.apply(e)
        flow_records.extend(ledger.flow_log[before:])
        stats["applied"] += 1

    totals = FlowTotals.from_flow_records(flow_records)
    return LedgerRun(
        totals=totals,
        flow_records=flow_records,
        group_ledgers=ledgers,
        stats=stats,
    )


# --- taint heuristics on fully known balances -------------------------------
#
# The production ledger needs only the running debt balance (the point of
# the first-out rule).  Proportional and last-out need the full wallet
# balance, so they live here as oracles over synthetic scenarios where the
# non-debt side is known.

def attribute_first_out(amount: Fraction, debt: Fraction, nondebt: Fraction) -> Fraction:
    return min(amount, debt)


def attribute_proportional(amount: Fraction, debt: Fraction, nondebt: Fraction) -> Fraction:
    total = debt + nondebt
    if total == 0:
        return ZERO
    return amount * debt / total


def attribute_last_out(amount: Fraction, debt: Fraction, nondebt: Fraction) -> Fraction:
    return max(ZERO, amount - nondebt)


HEURISTICS = {
    "first_out": attribute_first_out,
    "proportional": attribute_proportional,
    "last_out": attribute_last_out,
}


@dataclass
class ScenarioState:
    """Wallet and platform balances split into debt / non-debt components."""

    wallet: dict[str, list[Fraction]] = field(default_factory=dict)
    platform: dict[tuple[str, str], list[Fraction]] = field(default_factory=dict)

    def wallet_slot(self, currency: str) -> list[Fraction]:
        return self.wallet.setdefault(currency, [ZERO, ZERO])

    def platform_slot(self, protocol: str, currency: str) -> list[Fraction]:
        return self.platform.setdefault((protocol, currency), [ZERO, ZERO])


def run_full_balance_scenario(
    initial_wallet: dict[str, tuple[Fraction, Fraction]],
    transactions: Sequence[tuple],
    heuristic: str,
) -> tuple[list[Fraction], ScenarioState]:
    """Replay a fully specified scenario under one taint heuristic.

    `initial_wallet` maps currency -> (debt, nondebt).  Transactions:
        ("deposit",  protocol, currency, amount)
        ("withdraw", protocol, currency, amount)
        ("swap",     currency_sent, amount_sent, currency_received, amount_received)
        ("debt_create", currency, amount)
        ("debt_repay",  currency, amount)
    Returns the debt amount attributed to each deposit/withdraw/swap, in
    transaction order, plus the final state.
    """
    attribute = HEURISTICS[heuristic]
    state = ScenarioState()
    for currency, (debt, nondebt) in initial_wallet.items():
        state.wallet[currency] = [Fraction(debt), Fraction(nondebt)]

    attributions: list[Fraction] = []
    for txn in transactions:
        op = txn[0]
        if op == "deposit":
            _, protocol, currency, amount = txn
            slot = state.wallet_slot(currency)
            moved_debt = attribute(amount, slot[0], slot[1])
            slot[0] -= moved_debt
            slot[1] -= amount - moved_debt
            dest = state.platform_slot(protocol, currency)
            dest[0] += moved_debt
            dest[1] += amount - moved_debt
            attributions.append(moved_debt)
        elif op == "withdraw":
            _, protocol, currency, amount = txn
            slot = state.platform_slot(protocol, currency)
            moved_debt = attribute(amount, slot[0], slot[1])
            slot[0] -= moved_debt
            slot[1] -= amount - moved_debt
            dest = state.wallet_slot(currency)
            dest[0] += moved_debt
            dest[1] += amount - moved_debt
            attributions.append(moved_debt)
        elif op == "swap":
            _, sent_cur, sent_amt, recv_cur, recv_amt = txn
            slot = state.wallet_slot(sent_cur)
            moved_debt = attribute(sent_amt, slot[0], slot[1])
            slot[0] -= moved_debt
            slot[1] -= sent_amt - moved_debt
            dest = state.wallet_slot(recv_cur)
            if sent_amt > 0:
                recv_debt = recv_amt * moved_debt / sent_amt
            else:
                recv_debt = ZERO
            dest[0] += recv_debt
            dest[1] += recv_amt - recv_debt
            attributions.append(moved_debt)
        elif op == "debt_create":
            _, currency, amount = txn
            state.wallet_slot(currency)[0] += amount
        elif op == "debt_repay":
            _, currency, amount = txn
            slot = state.wallet_slot(currency)
            from_debt = min(amount, slot[0])
            slot[0] -= from_debt
            slot[1] -= amount - from_debt
        else:
            raise ValueError(f"unknown scenario op {op!r}")
        for balances in list(state.wallet.values()) + list(state.platform.values()):
            if balances[0] < 0 or balances[1] < 0:
                raise LedgerError(f"scenario balance went negative after {txn}")
    return attributions, state


def heuristic_oracles(
    initial_wallet: dict[str, tuple[Fraction, Fraction]],
    transactions: Sequence[tuple],
) -> dict[str, list[Fraction]]:
    """Per-transaction debt attribution under all three heuristics."""
    return {
        name: run_full_balance_scenario(initial_wallet, transactions, name)[0]
        for name in HEURISTICS
    }


# --- flow log IO -------------------------------------------------------------

def write_flows_csv(path: str | Path, records: Iterable[FlowRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FLOW_CSV_COLUMNS)
        for r in records:
            writer.writerow((
                r.group, r.timestamp, r.block_number, r.protocol, r.currency, r.kind,
                format_exact(r.debt_token), format_exact(r.nondebt_token),
                format_exact(r.debt_usd), format_exact(r.nondebt_usd),
            ))


def read_flows_csv(path: str | Path) -> list[FlowRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            FlowRecord(
                group=row["group_representative"],
                timestamp=int(row["timestamp"]),
                block_number=int(row["block_number"]),
                protocol=row["protocol"],
                currency=row["currency"],
                kind=row["kind"],
                debt_token=parse_amount(row["debt_amount_token"]),
                nondebt_token=parse_amount(row["nondebt_amount_token"]),
                debt_usd=parse_amount(row["debt_amount_usd"]),
                nondebt_usd=parse_amount(row["nondebt_amount_usd"]),
            )
            for row in reader
        ]
