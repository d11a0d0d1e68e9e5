"""Shared builders for hand-made traces."""

from decimal import Decimal

import pytest

from rugguard.model import (
    HOUR,
    LiquidityAdd,
    LiquidityRemove,
    LpBurn,
    LpMint,
    OnChainEvent,
    OsintEvent,
    Swap,
    TokenTrace,
    Transfer,
    parse_time,
)

T0 = parse_time("2024-01-01T00:00:00Z")
DEPLOYER = "0xdeployer"
POOL = "0xpool"


def D(x) -> Decimal:
    return Decimal(str(x))


def ev(hours: float, block: int, kind) -> OnChainEvent:
    return OnChainEvent(T0 + int(hours * HOUR), block, kind)


def xfer(h, b, src, dst, amt):
    return ev(h, b, Transfer(src, dst, D(amt)))


def swap(h, b, direction, tok, quote, price):
    return ev(h, b, Swap(direction, D(tok), D(quote), D(price)))


def ladd(h, b, tok, quote):
    return ev(h, b, LiquidityAdd(D(tok), D(quote)))


def lrem(h, b, tok, quote):
    return ev(h, b, LiquidityRemove(D(tok), D(quote)))


def lpmint(h, b, amt):
    return ev(h, b, LpMint(D(amt)))


def lpburn(h, b, amt):
    return ev(h, b, LpBurn(D(amt)))


def tweet(h, count=1):
    return OsintEvent(T0 + int(h * HOUR), "tweet", count)


def ghit(h, count=1):
    return OsintEvent(T0 + int(h * HOUR), "google", count)


def make_trace(events=(), osint=(), hours=240, supply=1_000_000, pid="p0",
               network="Ethereum", token_type="Meme") -> TokenTrace:
    return TokenTrace(pid, network, token_type, T0, T0 + hours * HOUR, D(supply), DEPLOYER, POOL,
                      tuple(events), tuple(osint))


@pytest.fixture(scope="session")
def small_corpus():
    from rugguard.synthgen import GeneratorConfig, generate
    return generate(GeneratorConfig(seed=11, n_projects=60))
