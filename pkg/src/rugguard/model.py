"""Shared domain types: token traces, on-chain/OSINT events and pool state.

Quantities are ``Decimal`` values fixed to 18 fractional digits; timestamps
are integer UTC seconds with the block height carried alongside.
"""

from __future__ import annotations

import decimal
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal
from typing import Iterable, Union

from .errors import NegativeReserve, OutOfRange, SchemaError

HOUR = 3600
DAY = 86400

# Wide enough for 1e20-scale supplies at 18 fractional digits, plus headroom
# for products and variances.
DECIMAL_CONTEXT = decimal.Context(prec=80, rounding=decimal.ROUND_HALF_EVEN)
QUANTUM = Decimal("1e-18")
ZERO = Decimal(0)

NETWORKS = ("Ethereum", "BSC")
TOKEN_TYPES = ("Utility", "Meme", "Governance")

ZERO_ADDRESS = "0x" + "0" * 40
DEAD_ADDRESS = "0x" + "0" * 36 + "dead"
BURN_ADDRESSES = frozenset({ZERO_ADDRESS, DEAD_ADDRESS})


def dec(value) -> Decimal:
    """Coerce to an 18-digit fixed-point Decimal (exact for str/int inputs)."""
    if isinstance(value, float):
        value = repr(value)
    d = Decimal(value)
    if not d.is_finite():
        raise ValueError(f"non-finite decimal: {value!r}")
    return d.quantize(QUANTUM, context=DECIMAL_CONTEXT)


def format_decimal(d: Decimal) -> str:
    """Canonical text form: plain notation, no trailing fractional zeros."""
    s = format(d.quantize(QUANTUM, context=DECIMAL_CONTEXT), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    if s in ("-0", ""):
        s = "0"
    return s


def parse_time(text: str) -> int:
    """ISO-8601 timestamp to UTC epoch seconds; naive values are taken as UTC."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    if dt.microsecond:
        raise ValueError(f"sub-second timestamps are not supported: {text!r}")
    return int(dt.timestamp())


def format_time(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def network_category(name: str) -> str:
    return name if name in NETWORKS else "Other"


def token_type_category(name: str) -> str:
    return name if name in TOKEN_TYPES else "Other"


def _nonneg(name: str, value: Decimal) -> None:
    if value < 0:
        raise SchemaError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True, slots=True)
class Transfer:
    sender: str
    recipient: str
    amount: Decimal

    def __post_init__(self):
        _nonneg("amount", self.amount)


@dataclass(frozen=True, slots=True)
class Swap:
    """A pool trade. ``buy`` moves quote into the pool and tokens out; ``sell`` the reverse."""

    direction: str
    token_amount: Decimal
    quote_amount: Decimal
    price: Decimal

    def __post_init__(self):
        if self.direction not in ("buy", "sell"):
            raise SchemaError(f"swap direction must be buy or sell, got {self.direction!r}")
        _nonneg("token_amount", self.token_amount)
        _nonneg("quote_amount", self.quote_amount)
        if self.price <= 0:
            raise SchemaError(f"swap price must be positive, got {self.price}")


@dataclass(frozen=True, slots=True)
class LiquidityAdd:
    token_amount: Decimal
    quote_amount: Decimal

    def __post_init__(self):
        _nonneg("token_amount", self.token_amount)
        _nonneg("quote_amount", self.quote_amount)


@dataclass(frozen=True, slots=True)
class LiquidityRemove:
    token_amount: Decimal
    quote_amount: Decimal

    def __post_init__(self):
        _nonneg("token_amount", self.token_amount)
        _nonneg("quote_amount", self.quote_amount)


@dataclass(frozen=True, slots=True)
class LpMint:
    amount: Decimal

    def __post_init__(self):
        _nonneg("amount", self.amount)


@dataclass(frozen=True, slots=True)
class LpBurn:
    amount: Decimal

    def __post_init__(self):
        _nonneg("amount", self.amount)


EventKind = Union[Transfer, Swap, LiquidityAdd, LiquidityRemove, LpMint, LpBurn]


@dataclass(frozen=True, slots=True)
class OnChainEvent:
    timestamp: int
    block: int
    kind: EventKind

    def __post_init__(self):
        if self.block < 0:
            raise SchemaError(f"block height must be non-negative, got {self.block}")

    @property
    def is_transaction(self) -> bool:
        """Counts toward transaction activity (transfers and swaps)."""
        return isinstance(self.kind, (Transfer, Swap))


@dataclass(frozen=True, slots=True)
class OsintEvent:
    timestamp: int
    kind: str  # "tweet" | "google"
    count: int = 1

    def __post_init__(self):
        if self.kind not in ("tweet", "google"):
            raise SchemaError(f"OSINT kind must be tweet or google, got {self.kind!r}")
        if self.count < 1:
            raise SchemaError(f"OSINT count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class TokenTrace:
    project_id: str
    network: str
    token_type: str
    start_time: int
    observation_end: int
    total_supply: Decimal
    deployer: str
    pool: str | None = None
    onchain_events: tuple[OnChainEvent, ...] = ()
    osint_events: tuple[OsintEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "onchain_events", tuple(self.onchain_events))
        object.__setattr__(self, "osint_events", tuple(self.osint_events))
        if self.total_supply <= 0:
            raise SchemaError(f"{self.project_id}: total_supply must be positive")
        if self.observation_end < self.start_time:
            raise SchemaError(f"{self.project_id}: observation_end precedes start_time")
        _check_ordered(self, self.onchain_events, "on-chain")
        _check_ordered(self, self.osint_events, "OSINT")
        prev_block = -1
        for ev in self.onchain_events:
            if ev.block < prev_block:
                raise SchemaError(
                    f"{self.project_id}: block height regresses at {format_time(ev.timestamp)}"
                )
            prev_block = ev.block

    def with_events(self, onchain: Iterable[OnChainEvent] | None = None,
                    osint: Iterable[OsintEvent] | None = None) -> "TokenTrace":
        return TokenTrace(
            project_id=self.project_id,
            network=self.network,
            token_type=self.token_type,
            start_time=self.start_time,
            observation_end=self.observation_end,
            total_supply=self.total_supply,
            deployer=self.deployer,
            pool=self.pool,
            onchain_events=self.onchain_events if onchain is None else tuple(onchain),
            osint_events=self.osint_events if osint is None else tuple(osint),
        )


def _check_ordered(trace: TokenTrace, events, label: str) -> None:
    prev = trace.start_time
    for ev in events:
        if ev.timestamp < prev:
            raise SchemaError(f"{trace.project_id}: {label} events not sorted by timestamp")
        prev = ev.timestamp
    if events and events[-1].timestamp > trace.observation_end:
        raise SchemaError(f"{trace.project_id}: {label} event after observation_end")


@dataclass(frozen=True, slots=True)
class PoolState:
    timestamp: int
    token_reserve: Decimal = ZERO
    quote_reserve: Decimal = ZERO
    lp_supply: Decimal = ZERO
    last_price: Decimal | None = None  # None: no swap observed yet


@dataclass
class PoolAccumulator:
    """Incremental fold of pool-affecting events; used for windowed scans."""

    token_reserve: Decimal = ZERO
    quote_reserve: Decimal = ZERO
    lp_supply: Decimal = ZERO
    last_price: Decimal | None = None
    last_swap_time: int | None = None
    consumed: int = field(default=0)

    def apply(self, ev: OnChainEvent) -> None:
        k = ev.kind
        if isinstance(k, Swap):
            if k.direction == "buy":
                self.token_reserve -= k.token_amount
                self.quote_reserve += k.quote_amount
            else:
                self.token_reserve += k.token_amount
                self.quote_reserve -= k.quote_amount
            self.last_price = k.price
            self.last_swap_time = ev.timestamp
        elif isinstance(k, LiquidityAdd):
            self.token_reserve += k.token_amount
            self.quote_reserve += k.quote_amount
        elif isinstance(k, LiquidityRemove):
            self.token_reserve -= k.token_amount
            self.quote_reserve -= k.quote_amount
        elif isinstance(k, LpMint):
            self.lp_supply += k.amount
        elif isinstance(k, LpBurn):
            self.lp_supply -= k.amount
        else:
            self.consumed += 1
            return
        self.consumed += 1
        if self.token_reserve < 0 or self.quote_reserve < 0 or self.lp_supply < 0:
            raise NegativeReserve(
                f"pool goes negative at {format_time(ev.timestamp)} (block {ev.block}): "
                f"token={self.token_reserve} quote={self.quote_reserve} lp={self.lp_supply}"
            )

    def state(self, timestamp: int) -> PoolState:
        return PoolState(timestamp, self.token_reserve, self.quote_reserve,
                         self.lp_supply, self.last_price)


def fold_pool(events: Iterable[OnChainEvent], before: int | None = None,
              through: int | None = None) -> PoolAccumulator:
    """Fold events with ``timestamp < before`` (or ``<= through``)."""
    acc = PoolAccumulator()
    with decimal.localcontext(DECIMAL_CONTEXT):
        for ev in events:
            if before is not None and ev.timestamp >= before:
                break
            if through is not None and ev.timestamp > through:
                break
            acc.apply(ev)
    return acc


def replay_pool_state(trace: TokenTrace, at: int) -> PoolState:
    """Pool reserves, LP supply and last swap price after every event at or before ``at``."""
    if not trace.start_time <= at <= trace.observation_end:
        raise OutOfRange(
            f"{format_time(at)} outside observation window "
            f"[{format_time(trace.start_time)}, {format_time(trace.observation_end)}]"
        )
    return fold_pool(trace.onchain_events, through=at).state(at)
