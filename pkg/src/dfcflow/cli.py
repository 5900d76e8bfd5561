"""Pipeline orchestration: checkpointed stages behind one config file.

Every stage reads the previous stage's checkpoint and writes its own, so
runs are resumable and auditable; checkpoints are the CSV/JSONL formats
documented in docs/file_formats.md, never private binaries.  Rerunning a
stage whose output is unchanged reports a cache hit and leaves the file
untouched.  Stage failures exit with distinct codes (config 2, ingest 3,
decode 4, cluster 5, ledger 6, report 7).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import cluster, decode, ingest, ledger, market, report, rpc, synth
from .errors import ConfigError, DfcError, MissingCheckpointError
from .registry import ContractRegistry
from .util import to_hex

EXIT_OK = 0
EXIT_CONFIG = 2
STAGE_EXIT_CODES = {
    "ingest": 3,
    "decode": 4,
    "cluster": 5,
    "track": 6,
    "report": 7,
    "compare-clusters": 5,
    "fetch-prices": 3,
}

CHECKPOINTS = {
    "logs": "logs.jsonl",
    "events": "events.csv",
    "vaults": "vaults.csv",
    "approvals": "approvals.csv",
    "partition": "partition.csv",
    "flows": "flows.csv",
}


@dataclass
class PipelineConfig:
    registry: Path
    from_block: int
    to_block: int
    output: Path
    fixture: Path | None = None
    rpc_endpoint: str | None = None
    prices: Path | None = None
    price_fetch: dict | None = None
    denylist: Path | None = None
    absorb_pair_groups: bool = False
    self_approval_comparison: bool = True
    staleness_multiplier: int = 2
    rpc_window: int = rpc.DEFAULT_WINDOW_SIZE

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if overrides:
            doc.update({k: v for k, v in overrides.items() if v is not None})

        base = path.parent

        def resolve(key) -> Path | None:
            value = doc.get(key)
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else (base / p)

        for key in ("registry", "from_block", "to_block", "output"):
            if doc.get(key) is None:
                raise ConfigError(f"config field {key!r} is required")
        fixture = resolve("fixture")
        endpoint = doc.get("rpc_endpoint")
        if (fixture is None) == (endpoint is None):
            raise ConfigError("config needs exactly one of fixture / rpc_endpoint")
        prices = resolve("prices")
        price_fetch = doc.get("price_fetch")
        if prices is None and price_fetch is None:
            raise ConfigError("config needs prices or price_fetch")
        try:
            from_block = int(doc["from_block"])
            to_block = int(doc["to_block"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"block bounds must be integers: {exc}") from exc
        if from_block > to_block:
            raise ConfigError("from_block must not exceed to_block")
        return cls(
            registry=resolve("registry"),
            from_block=from_block,
            to_block=to_block,
            output=resolve("output"),
            fixture=fixture,
            rpc_endpoint=endpoint,
            prices=prices,
            price_fetch=price_fetch,
            denylist=resolve("denylist"),
            absorb_pair_groups=bool(doc.get("absorb_pair_groups", False)),
            self_approval_comparison=bool(doc.get("self_approval_comparison", True)),
            staleness_multiplier=int(doc.get("staleness_multiplier", 2)),
            rpc_window=int(doc.get("rpc_window", rpc.DEFAULT_WINDOW_SIZE)),
        )

    def checkpoint(self, name: str) -> Path:
        return self.output / CHECKPOINTS[name]

    def block_range(self) -> ingest.BlockRange:
        return ingest.BlockRange(self.from_block, self.to_block)

    def load_registry(self) -> ContractRegistry:
        return ContractRegistry.from_json_file(self.registry)

    def load_prices(self) -> market.PriceSeries:
        if self.prices is None:
            raise ConfigError("no price file configured; run fetch-prices first")
        return market.PriceSeries.from_csv(self.prices, self.staleness_multiplier)

    def load_denylist(self) -> frozenset[str]:
        if self.denylist is None:
            return frozenset()
        return cluster.load_denylist(self.denylist)


class _Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def say(self, message: str) -> None:
        if not self.quiet:
            print(message)


def _write_checkpoint(path: Path, content: bytes, console: _Console) -> None:
    if path.exists() and path.read_bytes() == content:
        console.say(f"{path.name}: cache hit (unchanged)")
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(content)
    tmp.replace(path)
    console.say(f"{path.name}: written")


def _render_csv(write_fn, *args) -> bytes:
    import tempfile

    with tempfile.TemporaryDirectory() as tmpdir:
        target = Path(tmpdir) / "out.csv"
        write_fn(target, *args)
        return target.read_bytes()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingCheckpointError(path, stage)
    return path


def stage_ingest(cfg: PipelineConfig, console: _Console) -> None:
    registry = cfg.load_registry()
    block_range = cfg.block_range()
    if cfg.fixture is not None:
        logs = ingest.load_fixture(_require(cfg.fixture, "ingest"))
    else:
        logs = rpc.fetch_logs(
            cfg.rpc_endpoint, block_range, registry, window_size=cfg.rpc_window
        )
    kept = ingest.filter_logs(logs, registry, block_range)
    console.say(f"ingest: {len(kept)} of {len(logs)} logs kept")
    content = ingest.serialize_fixture(kept).encode("utf-8")
    _write_checkpoint(cfg.checkpoint("logs"), content, console)


def stage_decode(cfg: PipelineConfig, console: _Console) -> None:
    registry = cfg.load_registry()
    logs = ingest.load_fixture(_require(cfg.checkpoint("logs"), "ingest"))
    result = decode.decode_stream(logs, registry)
    stats = ", ".join(f"{k}={v}" for k, v in sorted(result.stats.items()))
    console.say(f"decode: {len(result.events)} events ({stats})")
    _write_checkpoint(
        cfg.checkpoint("events"),
        _render_csv(decode.write_events_csv, result.events),
        console,
    )
    _write_checkpoint(
        cfg.checkpoint("vaults"),
        _render_csv(decode.write_vaults_csv, result.vault_triples),
        console,
    )
    _write_checkpoint(
        cfg.checkpoint("approvals"),
        _render_csv(decode.write_approvals_csv, result.approvals),
        console,
    )


def stage_cluster(cfg: PipelineConfig, console: _Console) -> None:
    events = decode.read_events_csv(_require(cfg.checkpoint("events"), "decode"))
    triples = decode.read_vaults_csv(_require(cfg.checkpoint("vaults"), "decode"))
    denylist = cfg.load_denylist()
    partition = cluster.group_addresses(triples, None, events)
    pairs = cluster.extract_heuristic_pairs(events, denylist)
    final = cluster.apply_heuristic_pairs(
        partition, pairs, absorb_groups=cfg.absorb_pair_groups
    )
    console.say(
        f"cluster: {len(final.eligible)} eligible groups "
        f"({len(final.groups)} total, {len(pairs)} link pairs)"
    )
    _write_checkpoint(
        cfg.checkpoint("partition"),
        _render_csv(cluster.write_partition_csv, final),
        console,
    )


def stage_track(cfg: PipelineConfig, console: _Console) -> None:
    events = decode.read_events_csv(_require(cfg.checkpoint("events"), "decode"))
    partition = cluster.read_partition_csv(_require(cfg.checkpoint("partition"), "cluster"))
    registry = cfg.load_registry()
    prices = cfg.load_prices()
    valuer = market.make_valuer(prices, registry.currencies)
    run = ledger.run_ledger(events, partition, valuer)
    stats = ", ".join(f"{k}={v}" for k, v in sorted(run.stats.items()))
    console.say(f"track: {len(run.flow_records)} flow records ({stats})")
    _write_checkpoint(
        cfg.checkpoint("flows"),
        _render_csv(ledger.write_flows_csv, run.flow_records),
        console,
    )


def stage_report(cfg: PipelineConfig, console: _Console) -> None:
    records = ledger.read_flows_csv(_require(cfg.checkpoint("flows"), "track"))
    events = decode.read_events_csv(_require(cfg.checkpoint("events"), "decode"))
    registry = cfg.load_registry()
    prices = cfg.load_prices()
    monthly = report.monthly_dfc_rows(records)
    breakdown = report.protocol_breakdown(records)
    correlations = report.lagged_correlations(records, prices)
    summary = report.summary_stats(events, prices, registry.currencies)
    console.say(f"report: {len(monthly)} months, {len(correlations)} correlation rows")
    _write_checkpoint(
        cfg.output / "monthly_dfc.csv", _render_csv(report.write_monthly_csv, monthly), console
    )
    _write_checkpoint(
        cfg.output / "protocol_breakdown.csv",
        _render_csv(report.write_breakdown_csv, breakdown),
        console,
    )
    _write_checkpoint(
        cfg.output / "correlations.csv",
        _render_csv(report.write_correlations_csv, correlations),
        console,
    )
    _write_checkpoint(
        cfg.output / "summary.csv", _render_csv(report.write_summary_csv, summary), console
    )


def stage_compare_clusters(cfg: PipelineConfig, console: _Console) -> None:
    approvals = decode.read_approvals_csv(_require(cfg.checkpoint("approvals"), "decode"))
    events = decode.read_events_csv(_require(cfg.checkpoint("events"), "decode"))
    registry = cfg.load_registry()
    denylist = cfg.load_denylist()
    known_contracts = frozenset(
        to_hex(a) for a in registry.addresses
    ) | frozenset(to_hex(t) for t in registry.tokens)
    approval_pairs = cluster.self_approval_pairs(approvals, denylist, known_contracts)
    heuristic_pairs = cluster.extract_heuristic_pairs(events, denylist)
    overlap = {p.unordered for p in approval_pairs} & {p.unordered for p in heuristic_pairs}
    console.say(
        f"compare-clusters: {len(approval_pairs)} approval pairs, "
        f"{len(heuristic_pairs)} heuristic pairs, {len(overlap)} overlapping"
    )
    lines = [
        "metric,value",
        f"self_approval_pairs,{len(approval_pairs)}",
        f"heuristic_pairs,{len(heuristic_pairs)}",
        f"overlap_pairs,{len(overlap)}",
        "",
    ]
    _write_checkpoint(
        cfg.output / "cluster_comparison.csv", "\n".join(lines).encode("utf-8"), console
    )


def cmd_fetch_prices(cfg: PipelineConfig, console: _Console) -> None:
    if not cfg.price_fetch:
        raise ConfigError("config has no price_fetch section")
    series = market.fetch_prices(cfg.price_fetch)
    target = cfg.prices if cfg.prices is not None else cfg.output / "prices.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    series.to_csv(target)
    console.say(f"fetch-prices: wrote {target}")


def cmd_gen_fixture(output: Path, seed: int, registry_path: Path, console: _Console) -> None:
    registry = ContractRegistry.from_json_file(registry_path)
    bundle = synth.generate_fixture(registry, seed=seed)
    output.mkdir(parents=True, exist_ok=True)
    ingest.save_fixture(output / "fixture_logs.jsonl", bundle.logs)
    bundle.prices.to_csv(output / "prices.csv")
    synth.write_denylist_csv(output / "denylist.csv", bundle.denylist)
    console.say(
        f"gen-fixture: {len(bundle.logs)} logs through block {bundle.end_block} "
        f"(seed {seed}) in {output}"
    )


STAGE_FUNCTIONS = {
    "ingest": stage_ingest,
    "decode": stage_decode,
    "cluster": stage_cluster,
    "track": stage_track,
    "report": stage_report,
    "compare-clusters": stage_compare_clusters,
    "fetch-prices": cmd_fetch_prices,
}

ALL_STAGES = ("ingest", "decode", "cluster", "track", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfcflow",
        description="Reconstruct debt-financed collateral flows from Ethereum event logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config JSON")
    common.add_argument("--output", help="override the output directory")
    common.add_argument("--from-block", type=int, dest="from_block")
    common.add_argument("--to-block", type=int, dest="to_block")
    common.add_argument("--quiet", action="store_true")

    for name, help_text in (
        ("ingest", "acquire and filter raw logs"),
        ("decode", "decode logs into canonical events"),
        ("cluster", "group addresses into user groups"),
        ("track", "run the debt-taint ledger"),
        ("report", "write the report tables"),
        ("all", "run every stage in order"),
        ("compare-clusters", "compare link pairs with ERC-20 self-approvals"),
        ("fetch-prices", "pull candles into the price-file format"),
    ):
        sub.add_parser(name, parents=[common], help=help_text)

    gen = sub.add_parser("gen-fixture", help="generate deterministic test data")
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--output", required=True)
    gen.add_argument("--registry", default=None, help="registry JSON (defaults to config/registry.json next to the package)")
    gen.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    console = _Console(getattr(args, "quiet", False))

    if args.command == "gen-fixture":
        registry_path = Path(args.registry) if args.registry else (
            Path(__file__).resolve().parents[2] / "config" / "registry.json"
        )
        try:
            cmd_gen_fixture(Path(args.output), args.seed, registry_path, console)
        except DfcError as exc:
            print(f"gen-fixture: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    try:
        cfg = PipelineConfig.from_file(
            args.config,
            overrides={
                "output": args.output,
                "from_block": args.from_block,
                "to_block": args.to_block,
            },
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    stages = ALL_STAGES if args.command == "all" else (args.command,)
    for stage in stages:
        try:
            STAGE_FUNCTIONS[stage](cfg, console)
        except DfcError as exc:
            print(f"{stage}: error: {exc}", file=sys.stderr)
            return STAGE_EXIT_CODES[stage]
    if args.command == "all" and cfg.self_approval_comparison:
        try:
            stage_compare_clusters(cfg, console)
        except DfcError as exc:
            print(f"compare-clusters: error: {exc}", file=sys.stderr)
            return STAGE_EXIT_CODES["compare-clusters"]
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
