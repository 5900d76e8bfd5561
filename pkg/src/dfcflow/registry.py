"""Contract registry: which contracts, events and field layouts to decode.

The registry is configuration, not code.  It is loaded from a JSON document
(see docs/registry.md for the schema and config/registry.json for the
shipped mainnet set) and drives log filtering, event decoding and actor
extraction.  Adding a protocol version means editing the JSON, not this
module.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .util import parse_hex

PROTOCOLS = ("Aave", "Compound", "Maker", "Uniswap")
CURRENCIES = ("WBTC", "WETH", "USDT", "USDC", "DAI")
PRICE_KEYS = ("BTC", "ETH", "USDT", "USDC", "DAI")

LENDING_KINDS = (
    "collateral_deposit",
    "collateral_withdraw",
    "debt_create",
    "debt_repay",
)
KINDS = LENDING_KINDS + ("swap", "liquidation", "vault_open", "approval")

# Swap data layout is the standard 4-word (amount0In, amount1In,
# amount0Out, amount1Out) block; classification works on net pool flows.
SWAP_DATA_WORDS = 4


@dataclass(frozen=True)
class Currency:
    symbol: str
    decimals: int
    price_key: str


@dataclass(frozen=True)
class Locator:
    """Where a field lives in a log: a topic index or a data byte offset.

    Address reads take 20 bytes at the offset (or the low 20 bytes of the
    topic); amount reads take a full 32-byte big-endian word.
    """

    source: str  # "topic" | "data"
    index: int

    @classmethod
    def from_json(cls, obj, *, where: str) -> "Locator":
        if not isinstance(obj, dict) or len(obj) != 1:
            raise ConfigError(f"{where}: locator must be {{\"topic\": i}} or {{\"data\": offset}}")
        (source, index), = obj.items()
        if source not in ("topic", "data") or not isinstance(index, int) or index < 0:
            raise ConfigError(f"{where}: bad locator {obj!r}")
        if source == "topic" and index > 3:
            raise ConfigError(f"{where}: topic index {index} out of range 0..3")
        return cls(source, index)


@dataclass(frozen=True)
class EventRule:
    protocol: str
    contract: bytes
    topic0: bytes
    signature: str
    kind: str
    actor: Locator | None = None
    on_behalf_of: Locator | None = None
    amount: Locator | None = None
    currency_fixed: str | None = None
    currency_token: Locator | None = None
    # swap-only
    recipient: Locator | None = None
    token0: bytes | None = None
    token1: bytes | None = None
    # vault_open-only
    vault_user: Locator | None = None
    vault_proxy: Locator | None = None
    vault_urn: Locator | None = None
    # approval-only
    owner: Locator | None = None
    spender: Locator | None = None


@dataclass
class ContractRegistry:
    currencies: dict[str, Currency]
    tokens: dict[bytes, str]  # token address -> currency symbol
    rules: dict[tuple[bytes, bytes], EventRule]  # (contract, topic0) -> rule
    contract_protocol: dict[bytes, str] = field(default_factory=dict)

    @property
    def addresses(self) -> frozenset[bytes]:
        return frozenset(contract for contract, _ in self.rules)

    def topics_for(self, contract: bytes) -> frozenset[bytes]:
        return frozenset(t for c, t in self.rules if c == contract)

    @property
    def all_topic0(self) -> frozenset[bytes]:
        return frozenset(t for _, t in self.rules)

    def rule_for(self, contract: bytes, topic0: bytes) -> EventRule | None:
        return self.rules.get((contract, topic0))

    def token_currency(self, token: bytes) -> Currency | None:
        symbol = self.tokens.get(token)
        return self.currencies[symbol] if symbol else None

    def currency(self, symbol: str) -> Currency:
        try:
            return self.currencies[symbol]
        except KeyError:
            raise ConfigError(f"currency {symbol!r} not defined in registry") from None

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ContractRegistry":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read registry {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"registry {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ContractRegistry":
        currencies = _parse_currencies(doc.get("currencies"))
        tokens = _parse_tokens(doc.get("tokens"), currencies)

        rules: dict[tuple[bytes, bytes], EventRule] = {}
        contract_protocol: dict[bytes, str] = {}
        for protocol, pdoc in (doc.get("protocols") or {}).items():
            if protocol not in PROTOCOLS:
                raise ConfigError(f"unknown protocol {protocol!r}")
            for addr_hex, cdoc in (pdoc.get("contracts") or {}).items():
                contract = _addr(addr_hex, where=f"{protocol} contract")
                if contract in contract_protocol:
                    raise ConfigError(f"contract {addr_hex} listed twice")
                contract_protocol[contract] = protocol
                for edoc in cdoc.get("events", []):
                    rule = _parse_event_rule(protocol, contract, edoc, currencies)
                    key = (contract, rule.topic0)
                    if key in rules:
                        raise ConfigError(
                            f"duplicate rule for {addr_hex} topic {edoc.get('topic0')}"
                        )
                    rules[key] = rule

        for rule in _approval_rules(doc.get("approvals"), tokens):
            key = (rule.contract, rule.topic0)
            if key in rules:
                raise ConfigError("approval rule collides with a protocol rule")
            rules[key] = rule

        return cls(
            currencies=currencies,
            tokens=tokens,
            rules=rules,
            contract_protocol=contract_protocol,
        )


def _addr(value, *, where: str) -> bytes:
    try:
        return parse_hex(value, expected_bytes=20)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _topic(value, *, where: str) -> bytes:
    try:
        return parse_hex(value, expected_bytes=32)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_currencies(obj) -> dict[str, Currency]:
    if not obj:
        raise ConfigError("registry is missing the currencies table")
    out = {}
    for symbol, cdoc in obj.items():
        if symbol not in CURRENCIES:
            raise ConfigError(f"currency {symbol!r} is outside the supported set")
        decimals = cdoc.get("decimals")
        price_key = cdoc.get("price_key")
        if not isinstance(decimals, int) or not 0 <= decimals <= 18:
            raise ConfigError(f"{symbol}: decimals must be an integer in [0, 18]")
        if price_key not in PRICE_KEYS:
            raise ConfigError(f"{symbol}: unknown price key {price_key!r}")
        out[symbol] = Currency(symbol, decimals, price_key)
    return out


def _parse_tokens(obj, currencies) -> dict[bytes, str]:
    out = {}
    for addr_hex, symbol in (obj or {}).items():
        if symbol not in currencies:
            raise ConfigError(f"token {addr_hex} maps to undefined currency {symbol!r}")
        out[_addr(addr_hex, where="token")] = symbol
    return out


def _opt_locator(edoc, key, *, where) -> Locator | None:
    obj = edoc.get(key)
    return Locator.from_json(obj, where=f"{where}.{key}") if obj is not None else None


def _req_locator(edoc, key, *, where) -> Locator:
    loc = _opt_locator(edoc, key, where=where)
    if loc is None:
        raise ConfigError(f"{where}: missing required locator {key!r}")
    return loc


def _parse_event_rule(protocol, contract, edoc, currencies) -> EventRule:
    signature = edoc.get("signature", "")
    where = f"{protocol}/{signature or '<unnamed event>'}"
    kind = edoc.get("kind")
    if kind not in KINDS or kind == "approval":
        raise ConfigError(f"{where}: unknown event kind {kind!r}")
    topic0 = _topic(edoc.get("topic0"), where=where)

    base = dict(
        protocol=protocol,
        contract=contract,
        topic0=topic0,
        signature=signature,
        kind=kind,
    )

    if kind == "swap":
        if protocol != "Uniswap":
            raise ConfigError(f"{where}: swap events belong to Uniswap only")
        token0 = _addr(edoc.get("token0"), where=f"{where}.token0")
        token1 = _addr(edoc.get("token1"), where=f"{where}.token1")
        if token0 == token1:
            raise ConfigError(f"{where}: token0 and token1 must differ")
        return EventRule(
            **base,
            actor=_req_locator(edoc, "actor", where=where),
            recipient=_req_locator(edoc, "recipient", where=where),
            token0=token0,
            token1=token1,
        )

    if kind == "vault_open":
        if protocol != "Maker":
            raise ConfigError(f"{where}: vault_open events belong to Maker only")
        return EventRule(
            **base,
            vault_user=_req_locator(edoc, "user", where=where),
            vault_proxy=_req_locator(edoc, "proxy", where=where),
            vault_urn=_opt_locator(edoc, "urn", where=where),
        )

    if kind == "liquidation":
        return EventRule(**base, actor=_opt_locator(edoc, "actor", where=where))

    # lending kinds
    if protocol == "Uniswap":
        raise ConfigError(f"{where}: lending events cannot belong to Uniswap")
    currency = edoc.get("currency")
    if not isinstance(currency, dict):
        raise ConfigError(f"{where}: missing currency rule")
    fixed = currency.get("fixed")
    token_loc = currency.get("token")
    if (fixed is None) == (token_loc is None):
        raise ConfigError(f"{where}: currency rule needs exactly one of fixed/token")
    if fixed is not None and fixed not in currencies:
        raise ConfigError(f"{where}: fixed currency {fixed!r} not in currency table")
    return EventRule(
        **base,
        actor=_req_locator(edoc, "actor", where=where),
        on_behalf_of=_opt_locator(edoc, "on_behalf_of", where=where),
        amount=_req_locator(edoc, "amount", where=where),
        currency_fixed=fixed,
        currency_token=(
            Locator.from_json(token_loc, where=f"{where}.currency.token")
            if token_loc is not None
            else None
        ),
    )


def _approval_rules(obj, tokens) -> list[EventRule]:
    if not obj:
        return []
    where = "approvals"
    topic0 = _topic(obj.get("topic0"), where=where)
    signature = obj.get("signature", "")
    owner = Locator.from_json(obj.get("owner"), where=f"{where}.owner")
    spender = Locator.from_json(obj.get("spender"), where=f"{where}.spender")
    return [
        EventRule(
            protocol="ERC20",
            contract=token,
            topic0=topic0,
            signature=signature,
            kind="approval",
            owner=owner,
            spender=spender,
        )
        for token in tokens
    ]
