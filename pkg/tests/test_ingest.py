import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import D, DEPLOYER, T0, make_trace, tweet, xfer
from rugguard.errors import IoError, NegativeBalance, OrderError, OutOfRange, ParseError, SchemaError
from rugguard.ingest import (
    HolderSnapshot,
    derive_holder_snapshot,
    load_traces,
    parse_lines,
    parse_trace,
    serialize_trace,
    write_trace,
)
from rugguard.model import BURN_ADDRESSES, DEAD_ADDRESS, HOUR, ZERO_ADDRESS
from rugguard.synthgen import GeneratorConfig, generate_one

META = ("META|project_id=x1|network=BSC|token_type=Meme|start=2024-01-01T00:00:00Z"
        "|end=2024-01-05T00:00:00Z|total_supply=1000|deployer=0xd")


def test_metadata_only_file_gives_empty_trace():
    t = parse_lines([META])
    assert t.project_id == "x1" and t.onchain_events == () and t.osint_events == ()
    assert t.total_supply == 1000 and t.pool is None


def test_all_record_kinds_parse():
    lines = [
        META + "|pool=0xp",
        "# comment",
        "",
        "LADD|2024-01-01T01:00:00Z|5|100|10",
        "LPMINT|2024-01-01T01:00:00Z|5|31.6",
        "XFER|2024-01-01T02:00:00Z|6|0xd|0xa|40.000000000000000001",
        "SWAP|2024-01-01T03:00:00Z|7|buy|9.09|1|0.11",
        "LREM|2024-01-01T04:00:00Z|8|90.91|11",
        "LPBURN|2024-01-01T04:00:00Z|8|31.6",
        "TWEET|2024-01-01T00:30:00Z|12",
        "GHIT|2024-01-02T00:00:00Z|3",
    ]
    t = parse_lines(lines)
    assert len(t.onchain_events) == 6 and len(t.osint_events) == 2
    assert t.onchain_events[2].kind.amount == D("40.000000000000000001")
    assert t.pool == "0xp"


@pytest.mark.parametrize("bad", [
    "XFER|2024-01-01T02:00:00Z|6|0xd|0xa",             # missing field
    "XFER|2024-01-01T02:00:00Z|6|0xd|0xa|-4",          # negative
    "XFER|2024-01-01T02:00:00Z|6|0xd|0xa|1e3",         # exponent
    "XFER|2024-01-01T02:00:00Z|x|0xd|0xa|4",           # block not int
    "SWAP|2024-01-01T03:00:00Z|7|hodl|1|1|1",          # direction
    "SWAP|2024-01-01T03:00:00Z|7|buy|1|1|0",           # zero price
    "TWEET|2024-01-01T00:30:00Z|0",                    # count < 1
    "NOPE|2024-01-01T00:30:00Z|1",                     # unknown tag
    "LADD|yesterday|5|1|1",                            # bad time
    "LADD|2024-01-01T01:00:00Z|5|1.0000000000000000001|1",  # 19 digits
])
def test_malformed_line_names_its_line(bad):
    with pytest.raises(ParseError) as info:
        parse_lines([META, "LADD|2024-01-01T01:00:00Z|5|100|10", bad])
    assert info.value.line == 3


def test_missing_metadata_is_schema_error():
    with pytest.raises(SchemaError):
        parse_lines(["LADD|2024-01-01T01:00:00Z|5|100|10"])
    with pytest.raises(SchemaError):
        parse_lines([META.replace("|deployer=0xd", "")])


def test_order_tolerance():
    lines = [META, "LADD|2024-01-01T01:00:30Z|5|100|10", "LADD|2024-01-01T01:00:00Z|5|1|1"]
    with pytest.raises(OrderError):
        parse_lines(lines)
    t = parse_lines(lines, order_tolerance=60)
    assert [e.kind.token_amount for e in t.onchain_events] == [1, 100]


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        parse_trace(tmp_path / "nope.trace")
    with pytest.raises(IoError):
        load_traces(tmp_path / "nodir")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 10**6))
def test_serialize_parse_round_trip(seed, index):
    trace, _ = generate_one(GeneratorConfig(seed=seed, n_projects=1), index)
    assert parse_lines(serialize_trace(trace).splitlines()) == trace


def test_file_round_trip(tmp_path, small_corpus):
    traces = [t for t, _ in small_corpus[:5]]
    for t in traces:
        write_trace(t, tmp_path)
    assert load_traces(tmp_path) == sorted(traces, key=lambda t: t.project_id)


# --- holder snapshots ---------------------------------------------------------

def test_no_transfers_deployer_holds_all():
    s = derive_holder_snapshot(make_trace(), T0)
    assert s.balances == {DEPLOYER: D(1_000_000)}


def test_forty_percent_transfer():
    t = make_trace([xfer(1, 1, DEPLOYER, "0xa", 400_000)])
    s = derive_holder_snapshot(t, T0 + 2 * HOUR)
    assert s.balances == {DEPLOYER: D(600_000), "0xa": D(400_000)}


def test_snapshot_includes_transfers_at_query_time_only():
    t = make_trace([xfer(1, 1, DEPLOYER, "0xa", 1)])
    assert "0xa" not in derive_holder_snapshot(t, T0 + HOUR - 1).balances
    assert "0xa" in derive_holder_snapshot(t, T0 + HOUR).balances


def test_zero_balances_removed():
    t = make_trace([xfer(1, 1, DEPLOYER, "0xa", 1_000_000)])
    assert derive_holder_snapshot(t, T0 + HOUR).balances == {"0xa": D(1_000_000)}


def test_overdraft_is_negative_balance():
    t = make_trace([xfer(1, 1, "0xa", "0xb", 1)])
    with pytest.raises(NegativeBalance):
        derive_holder_snapshot(t, T0 + HOUR)


def test_snapshot_out_of_range():
    with pytest.raises(OutOfRange):
        derive_holder_snapshot(make_trace(hours=1), T0 + 2 * HOUR)


def _random_transfers(rng, n, supply, holders=6):
    """Valid transfers drawn against an independent balance book."""
    book = {DEPLOYER: supply}
    addrs = [DEPLOYER] + [f"0x{i}" for i in range(holders)] + [ZERO_ADDRESS, DEAD_ADDRESS]
    events = []
    for i in range(n):
        src = rng.choice([a for a, b in book.items() if b > 0])
        amt = Decimal(rng.randint(0, int(book[src] * 10**6))) / 10**6
        dst = rng.choice(addrs)
        book[src] -= amt
        book[dst] = book.get(dst, Decimal(0)) + amt
        events.append(xfer(i * 0.5, i, src, dst, amt))
    return events, book


def test_twenty_transfers_match_hash_map_oracle():
    rng = random.Random(5)
    for _ in range(50):
        events, _ = _random_transfers(rng, 20, D(1000))
        t = make_trace(events, supply=1000)
        for k in (0, 7, 19):
            at = events[k].timestamp
            oracle = {DEPLOYER: D(1000)}
            for e in events:
                if e.timestamp <= at:
                    tr = e.kind
                    oracle[tr.sender] -= tr.amount
                    oracle[tr.recipient] = oracle.get(tr.recipient, D(0)) + tr.amount
            oracle = {a: b for a, b in oracle.items() if b != 0}
            assert derive_holder_snapshot(t, at).balances == oracle


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False), st.integers(1, 40))
def test_conservation_property(rng, n):
    supply = D("123456789.123456789012345678")
    events, _ = _random_transfers(rng, n, supply)
    s = derive_holder_snapshot(make_trace(events, supply=supply), events[-1].timestamp)
    assert s.total() == supply
    circ = s.circulating(None)
    assert sum(circ.values(), D(0)) <= supply
    assert not set(circ) & BURN_ADDRESSES


def test_circulating_excludes_pool_and_burns():
    s = HolderSnapshot(T0, {"0xa": D(1), "0xpool": D(5), ZERO_ADDRESS: D(2)})
    assert s.circulating("0xpool") == {"0xa": D(1)}


def test_osint_only_trace_round_trips():
    t = make_trace(osint=[tweet(1, 3), tweet(5, 2)])
    assert parse_lines(serialize_trace(t).splitlines()) == t
