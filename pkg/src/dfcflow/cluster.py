"""Address grouping: vault triples, protocol-activity filter, link pairs.

Grouping runs in three stages: (1) union the three addresses of every
Maker vault triple, merging triples that share any address; (2) add every
event-initiating address, as a singleton if unseen; (3) keep as "eligible"
the groups whose members initiated events in two or more protocols.
Link pairs mined from on-behalf repayments, swap destinations and (for the
comparison harness) ERC-20 self-approvals are then applied on top of the
eligible family with connected-components semantics, so the final grouping
is invariant under any permutation of the inputs.

Representatives are the lexicographically smallest member address; every
report keyed by representative is therefore bit-stable across runs.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .decode import DEBT_REPAY, SWAP, ApprovalEvent, CanonicalEvent, VaultTriple

PAIR_SOURCES = (
    "AaveRepayOnBehalf",
    "CompoundRepayBorrowBehalf",
    "UniswapSwapRecipient",
    "Erc20SelfApproval",
)

_REPAY_SOURCE = {
    "Aave": "AaveRepayOnBehalf",
    "Compound": "CompoundRepayBorrowBehalf",
}


@dataclass(frozen=True)
class HeuristicPair:
    r1: str
    r2: str
    source: str

    def __post_init__(self):
        if self.r1 == self.r2:
            raise ValueError("heuristic pair endpoints must differ")

    @property
    def unordered(self) -> frozenset[str]:
        return frozenset((self.r1, self.r2))


class DisjointSet:
    """Union-find with path compression and a deterministic representative
    (the smallest member) per set."""

    def __init__(self):
        self._parent: dict[str, str] = {}
        self._rank: dict[str, int] = {}
        self._min: dict[str, str] = {}

    def add(self, item: str) -> None:
        if item not in self._parent:
            self._parent[item] = item
            self._rank[item] = 0
            self._min[item] = item

    def __contains__(self, item: str) -> bool:
        return item in self._parent

    def find(self, item: str) -> str:
        root = item
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[item] != root:
            self._parent[item], item = root, self._parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._rank[ra] < self._rank[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1
        self._min[ra] = min(self._min[ra], self._min[rb])

    def representative(self, item: str) -> str:
        return self._min[self.find(item)]

    def groups(self) -> dict[str, frozenset[str]]:
        """Map smallest-member representative -> member set."""
        by_root: dict[str, set[str]] = defaultdict(set)
        for item in self._parent:
            by_root[self.find(item)].add(item)
        return {self._min[root]: frozenset(members) for root, members in by_root.items()}


@dataclass(frozen=True)
class Partition:
    """Disjoint address groups with per-group protocol activity.

    Immutable once built; the ledger and report stages read it
    concurrently without coordination.
    """

    groups: dict[str, frozenset[str]]            # representative -> members
    addr_to_rep: dict[str, str]
    group_protocols: dict[str, frozenset[str]]    # representative -> protocols
    eligible: frozenset[str]                      # eligible representatives
    address_protocols: dict[str, frozenset[str]]  # per-address activity

    @classmethod
    def build(
        cls,
        member_sets: Iterable[frozenset[str]],
        address_protocols: Mapping[str, frozenset[str]],
        *,
        eligible_reps: frozenset[str] | None = None,
        min_protocols: int = 2,
    ) -> "Partition":
        groups: dict[str, frozenset[str]] = {}
        addr_to_rep: dict[str, str] = {}
        group_protocols: dict[str, frozenset[str]] = {}
        for members in member_sets:
            if not members:
                continue
            rep = min(members)
            groups[rep] = members
            protos: set[str] = set()
            for addr in members:
                if addr in addr_to_rep:
                    raise ValueError(f"address {addr} assigned to two groups")
                addr_to_rep[addr] = rep
                protos.update(address_protocols.get(addr, ()))
            group_protocols[rep] = frozenset(protos)
        if eligible_reps is None:
            eligible_reps = frozenset(
                rep for rep, protos in group_protocols.items() if len(protos) >= min_protocols
            )
        return cls(
            groups=groups,
            addr_to_rep=addr_to_rep,
            group_protocols=group_protocols,
            eligible=eligible_reps,
            address_protocols=dict(address_protocols),
        )

    def eligible_groups(self) -> dict[str, frozenset[str]]:
        return {rep: self.groups[rep] for rep in sorted(self.eligible)}

    def eligible_rep_of(self, addr: str) -> str | None:
        rep = self.addr_to_rep.get(addr)
        return rep if rep in self.eligible else None

    def group_family(self) -> frozenset[frozenset[str]]:
        return frozenset(self.groups.values())

    def eligible_family(self) -> frozenset[frozenset[str]]:
        return frozenset(self.groups[rep] for rep in self.eligible)

    def validate(self) -> None:
        seen: set[str] = set()
        for rep, members in self.groups.items():
            if rep != min(members):
                raise ValueError(f"representative {rep} is not the smallest member")
            overlap = seen & members
            if overlap:
                raise ValueError(f"groups overlap on {sorted(overlap)[:3]}")
            seen |= members
        for addr, rep in self.addr_to_rep.items():
            if addr not in self.groups[rep]:
                raise ValueError(f"index points {addr} at a group that lacks it")
        if len(self.addr_to_rep) != len(seen):
            raise ValueError("membership index does not cover all grouped addresses")

    def eligible_size_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = defaultdict(int)
        for rep in self.eligible:
            hist[len(self.groups[rep])] += 1
        return dict(hist)


def dedupe_vault_triples(triples: Iterable[VaultTriple]) -> list[VaultTriple]:
    """Collapse duplicate triples, preserving first-seen order."""
    seen: set[VaultTriple] = set()
    out = []
    for t in triples:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def extract_heuristic_pairs(
    events: Sequence[CanonicalEvent],
    denylist: frozenset[str] = frozenset(),
) -> list[HeuristicPair]:
    """Mine (actor, beneficiary) link pairs from the event stream.

    On-behalf repayments on Aave and Compound and swap destinations on
    Uniswap each yield a pair when the two sides differ; pairs touching a
    deny-listed (exchange/labeled) address are dropped.  Pairs are
    deduplicated: union is idempotent.
    """
    out = []
    seen: set[tuple[str, str, str]] = set()
    for e in events:
        if e.on_behalf_of is None:
            continue
        if e.kind == DEBT_REPAY:
            source = _REPAY_SOURCE.get(e.protocol)
            if source is None:
                continue
        elif e.kind == SWAP:
            source = "UniswapSwapRecipient"
        else:
            continue
        if e.actor in denylist or e.on_behalf_of in denylist:
            continue
        key = (e.actor, e.on_behalf_of, source)
        if key not in seen:
            seen.add(key)
            out.append(HeuristicPair(e.actor, e.on_behalf_of, source))
    return out


def self_approval_pairs(
    approvals: Sequence[ApprovalEvent],
    denylist: frozenset[str] = frozenset(),
    known_contracts: frozenset[str] = frozenset(),
) -> list[HeuristicPair]:
    """(owner, spender) pairs under the self-authorization assumption.

    Comparison harness only, not part of the main grouping pipeline.
    Spenders that are known contracts or labeled addresses are excluded:
    they are not user wallets.
    """
    out = []
    seen: set[tuple[str, str]] = set()
    for a in approvals:
        if a.owner == a.spender:
            continue
        if a.spender in denylist or a.spender in known_contracts:
            continue
        key = (a.owner, a.spender)
        if key not in seen:
            seen.add(key)
            out.append(HeuristicPair(a.owner, a.spender, "Erc20SelfApproval"))
    return out


def actor_addresses(events: Sequence[CanonicalEvent]) -> set[str]:
    return {e.actor for e in events}


def address_protocol_map(events: Sequence[CanonicalEvent]) -> dict[str, frozenset[str]]:
    protos: dict[str, set[str]] = defaultdict(set)
    for e in events:
        protos[e.actor].add(e.protocol)
    return {addr: frozenset(p) for addr, p in protos.items()}


def group_addresses(
    triples: Sequence[VaultTriple],
    actors: Iterable[str] | None,
    events: Sequence[CanonicalEvent],
) -> Partition:
    """Stages 1-3: vault-triple grouping, actor insertion, eligibility.

    Triples sharing any address merge transitively; every actor joins its
    existing group or becomes a singleton; a group is eligible when its
    members initiated events in more than one protocol.
    """
    dsu = DisjointSet()
    for t in dedupe_vault_triples(triples):
        addrs = sorted(t.addresses)
        for addr in addrs:
            dsu.add(addr)
        for left, right in zip(addrs, addrs[1:]):
            dsu.union(left, right)
    if actors is None:
        actors = actor_addresses(events)
    for actor in actors:
        dsu.add(actor)
    return Partition.build(dsu.groups().values(), address_protocol_map(events))


def apply_heuristic_pairs(
    partition: Partition,
    pairs: Sequence[HeuristicPair],
    *,
    absorb_groups: bool = False,
) -> Partition:
    """Extend/merge the eligible family with link pairs.

    Connected-components semantics over (eligible groups + pair edges):
    a pair merges the eligible groups it bridges and absorbs addresses
    that connect, transitively, to at least one eligible group.
    Components that touch no eligible group leave the partition unchanged.

    By default an absorbed address leaves its former (non-eligible) group
    alone; with ``absorb_groups`` its whole former group travels with it.
    Eligibility is not recomputed: absorbed addresses never promote a
    non-eligible group.
    """
    scratch = DisjointSet()
    for rep in partition.eligible:
        members = sorted(partition.groups[rep])
        for addr in members:
            scratch.add(addr)
        for left, right in zip(members, members[1:]):
            scratch.union(left, right)
    if absorb_groups:
        for rep, group in partition.groups.items():
            members = sorted(group)
            for addr in members:
                scratch.add(addr)
            for left, right in zip(members, members[1:]):
                scratch.union(left, right)
    for pair in pairs:
        scratch.union(pair.r1, pair.r2)

    moved: set[str] = set()
    final_sets: list[frozenset[str]] = []
    eligible_reps: set[str] = set()
    for component in scratch.groups().values():
        touches_eligible = any(
            partition.addr_to_rep.get(addr) in partition.eligible for addr in component
        )
        if not touches_eligible:
            continue
        final_sets.append(component)
        eligible_reps.add(min(component))
        moved |= component

    # whatever was not pulled into an eligible component stays put
    for rep, members in partition.groups.items():
        if rep in partition.eligible:
            continue
        remaining = members - moved
        if remaining:
            final_sets.append(frozenset(remaining))

    result = Partition.build(
        final_sets,
        partition.address_protocols,
        eligible_reps=frozenset(eligible_reps),
    )
    result.validate()
    return result


def load_denylist(path: str | Path) -> frozenset[str]:
    """Deny-list CSV: columns address,label."""
    addrs = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            addrs.add(row["address"].lower())
    return frozenset(addrs)


def write_partition_csv(path: str | Path, partition: Partition) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("representative", "member", "protocols_touched"))
        for rep in sorted(partition.groups):
            protos = ";".join(sorted(partition.group_protocols[rep]))
            for member in sorted(partition.groups[rep]):
                writer.writerow((rep, member, protos))


def read_partition_csv(path: str | Path) -> Partition:
    """Rebuild a partition checkpoint.

    Per-address activity is not stored in the checkpoint; eligibility is
    recovered from the group-level protocol count.
    """
    members: dict[str, set[str]] = defaultdict(set)
    protos: dict[str, frozenset[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rep = row["representative"]
            members[rep].add(row["member"])
            protos[rep] = frozenset(p for p in row["protocols_touched"].split(";") if p)
    groups = {rep: frozenset(m) for rep, m in members.items()}
    addr_to_rep = {addr: rep for rep, m in groups.items() for addr in m}
    eligible = frozenset(rep for rep, p in protos.items() if len(p) >= 2)
    return Partition(
        groups=groups,
        addr_to_rep=addr_to_rep,
        group_protocols=protos,
        eligible=eligible,
        address_protocols={},
    )
