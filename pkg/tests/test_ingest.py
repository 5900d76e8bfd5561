import json

import pytest
from hypothesis import given, settings, strategies as st

from dfcflow.errors import FixtureParseError
from dfcflow.ingest import (
    BlockRange,
    RawLog,
    filter_logs,
    load_fixture,
    save_fixture,
    serialize_fixture,
)
from dfcflow.util import to_hex

AAVE_POOL = "0x7d2768de32b0b80b7a3454c06bdac94a69ddc7a9"
AAVE_DEPOSIT = "0xde6857219544bb5b7746f48ed30be6386fefc61b2f864cacf559893bf50fd951"


def make_line(block=10_000_000, log_index=0, address=AAVE_POOL, topic0=AAVE_DEPOSIT,
              n_topics=1, data="0x", timestamp=1_588_598_520):
    topics = [topic0] + ["0x" + "00" * 32] * (n_topics - 1)
    return json.dumps({
        "block_number": block,
        "timestamp": timestamp,
        "tx_hash": "0x" + "ab" * 32,
        "address": address,
        "topics": topics,
        "data": data,
        "log_index": log_index,
    }, separators=(",", ":"))


def test_empty_file_gives_empty_sequence(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_fixture(path) == []


def test_single_line_round_trips_byte_identically(tmp_path):
    line = make_line(data="0x" + "11" * 64, n_topics=3)
    path = tmp_path / "one.jsonl"
    path.write_text(line + "\n")
    logs = load_fixture(path)
    assert len(logs) == 1
    assert serialize_fixture(logs) == line + "\n"


def test_five_topics_is_a_parse_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(make_line() + "\n" + make_line(n_topics=5) + "\n")
    with pytest.raises(FixtureParseError) as err:
        load_fixture(path)
    assert err.value.line_number == 2


def test_odd_length_hex_is_a_parse_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(make_line(data="0x123") + "\n")
    with pytest.raises(FixtureParseError) as err:
        load_fixture(path)
    assert err.value.line_number == 1
    assert "odd-length" in str(err.value)


def test_invalid_json_names_the_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(make_line() + "\n{not json\n")
    with pytest.raises(FixtureParseError) as err:
        load_fixture(path)
    assert err.value.line_number == 2


def test_missing_field_is_a_parse_error(tmp_path):
    obj = json.loads(make_line())
    del obj["tx_hash"]
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(FixtureParseError):
        load_fixture(path)


def test_load_preserves_file_order(tmp_path):
    lines = [make_line(block=b, log_index=i) for b, i in
             [(10_000_005, 1), (10_000_001, 0), (10_000_005, 0)]]
    path = tmp_path / "f.jsonl"
    path.write_text("\n".join(lines) + "\n")
    logs = load_fixture(path)
    assert [log.order_key for log in logs] == [(10_000_005, 1), (10_000_001, 0), (10_000_005, 0)]


def test_save_then_load_round_trips(tmp_path, registry):
    line = make_line(n_topics=2, data="0x" + "22" * 32)
    logs = [RawLog.from_json_obj(json.loads(line))]
    path = tmp_path / "f.jsonl"
    save_fixture(path, logs)
    assert load_fixture(path) == logs


def test_serialization_is_whitespace_canonical(tmp_path):
    # same record with extra whitespace still parses; output is canonical
    loose = make_line().replace(",", ", ").replace(":", ": ")
    path = tmp_path / "loose.jsonl"
    path.write_text(loose + "\n")
    logs = load_fixture(path)
    assert serialize_fixture(logs) == make_line() + "\n"


def test_block_range_inclusive_bounds(registry):
    block_range = BlockRange(10_000_000, 11_700_000)
    below = RawLog.from_json_obj(json.loads(make_line(block=9_999_999)))
    at_start = RawLog.from_json_obj(json.loads(make_line(block=10_000_000)))
    at_end = RawLog.from_json_obj(json.loads(make_line(block=11_700_000, log_index=1)))
    above = RawLog.from_json_obj(json.loads(make_line(block=11_700_001)))
    kept = filter_logs([below, at_start, at_end, above], registry, block_range)
    assert [log.block_number for log in kept] == [10_000_000, 11_700_000]


def test_filter_drops_unregistered_topic_and_address(registry):
    block_range = BlockRange(10_000_000, 11_700_000)
    wrong_topic = RawLog.from_json_obj(json.loads(make_line(topic0="0x" + "99" * 32)))
    wrong_address = RawLog.from_json_obj(
        json.loads(make_line(address="0x" + "77" * 20)))
    base = RawLog.from_json_obj(json.loads(make_line()))
    no_topics = RawLog(
        block_number=base.block_number,
        tx_hash=base.tx_hash,
        log_index=base.log_index,
        contract_address=base.contract_address,
        topics=(),
        data=base.data,
        timestamp=base.timestamp,
    )
    kept = filter_logs([wrong_topic, wrong_address, no_topics], registry, block_range)
    assert kept == []


def test_block_range_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        BlockRange(11, 10)


@st.composite
def raw_logs(draw):
    block = draw(st.integers(min_value=9_999_990, max_value=10_000_040))
    index = draw(st.integers(min_value=0, max_value=50))
    address = draw(st.sampled_from([AAVE_POOL, "0x" + "55" * 20]))
    topic0 = draw(st.sampled_from([AAVE_DEPOSIT, "0x" + "66" * 32]))
    return RawLog.from_json_obj(json.loads(
        make_line(block=block, log_index=index, address=address, topic0=topic0)
    ))


@settings(max_examples=60, deadline=None)
@given(logs=st.lists(raw_logs(), max_size=40))
def test_filter_is_idempotent_sorted_subset(registry, logs):
    block_range = BlockRange(10_000_000, 10_000_020)
    once = filter_logs(logs, registry, block_range)
    twice = filter_logs(once, registry, block_range)
    assert twice == once
    assert set(map(id, once)) <= set(map(id, logs))
    keys = [log.order_key for log in once]
    assert keys == sorted(keys)
    for log in once:
        assert log.block_number in block_range
        assert to_hex(log.contract_address) == AAVE_POOL
