"""Dead-token labelling.

A token is dead when, for longer than ``persistence_hours``, three conditions
hold together in every window: the pool's quote reserve is drained, transfer
and swap activity has collapsed, and no trade prices the token. The rug-pull
instant is the draining liquidity removal that precedes death.
"""

from __future__ import annotations

import csv
import decimal
import hashlib
import io
from dataclasses import dataclass, fields
from decimal import Decimal

from .errors import ConfigError, ParseError, SchemaError
from .model import (
    DECIMAL_CONTEXT,
    HOUR,
    LiquidityRemove,
    OnChainEvent,
    PoolAccumulator,
    Swap,
    TokenTrace,
    dec,
    format_decimal,
    format_time,
    parse_time,
)

ALIVE = "Alive"
DEAD = "Dead"


@dataclass(frozen=True)
class DeadTokenCriteria:
    liquidity_epsilon: Decimal = Decimal(0)
    activity_epsilon: int = 0
    persistence_hours: int = 72
    window_hours: int = 1
    # Searched backwards from death onset; must cover the 1-3 day tail of
    # residual activity between the drain and full inactivity.
    rugpull_lookback_hours: int = 96

    def __post_init__(self):
        object.__setattr__(self, "liquidity_epsilon", dec(self.liquidity_epsilon))
        if self.liquidity_epsilon < 0 or self.activity_epsilon < 0:
            raise ConfigError("epsilons must be non-negative")
        if self.window_hours <= 0 or self.persistence_hours <= 0:
            raise ConfigError("persistence_hours and window_hours must be positive")
        if self.persistence_hours < self.window_hours:
            raise ConfigError("persistence_hours must be >= window_hours")
        if self.rugpull_lookback_hours < 0:
            raise ConfigError("rugpull_lookback_hours must be non-negative")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "DeadTokenCriteria":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown criteria key {key!r}")
            raw = str(raw).strip().strip('"')
            try:
                kwargs[key] = Decimal(raw) if key == "liquidity_epsilon" else int(raw)
            except (ValueError, decimal.InvalidOperation):
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)

    def as_lines(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name} = {format_decimal(v) if isinstance(v, Decimal) else v}")
        return out

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.as_lines()).encode()).hexdigest()


@dataclass(frozen=True, slots=True)
class WindowConditions:
    start: int
    liquidity_drained: bool
    tx_collapsed: bool
    price_undefined: bool

    @property
    def all_true(self) -> bool:
        return self.liquidity_drained and self.tx_collapsed and self.price_undefined


@dataclass(frozen=True)
class DeadTokenVerdict:
    project_id: str
    label: str
    condition_timeline: tuple[WindowConditions, ...]
    rugpull_time: int | None = None
    rugpull_block: int | None = None
    death_onset: int | None = None

    @property
    def is_dead(self) -> bool:
        return self.label == DEAD


def evaluate_conditions(trace: TokenTrace, criteria: DeadTokenCriteria) -> list[WindowConditions]:
    """Per-window condition triples over every complete window of the observation span.

    Liquidity is judged on the pool state at the close of each window. The
    token side of a drained pool is valued at the pool's own spot price, which
    reduces to the quote reserve, so only the quote reserve is compared.
    """
    width = criteria.window_hours * HOUR
    n_windows = (trace.observation_end - trace.start_time) // width
    events = trace.onchain_events
    acc = PoolAccumulator()
    timeline = []
    i = 0
    with decimal.localcontext(DECIMAL_CONTEXT):
        for k in range(n_windows):
            w_start = trace.start_time + k * width
            w_end = w_start + width
            tx = 0
            swapped = False
            while i < len(events) and events[i].timestamp < w_end:
                ev = events[i]
                acc.apply(ev)
                if ev.is_transaction:
                    tx += 1
                    swapped = swapped or isinstance(ev.kind, Swap)
                i += 1
            stale = acc.last_price is None or acc.last_swap_time < w_start
            timeline.append(WindowConditions(
                start=w_start,
                liquidity_drained=acc.quote_reserve <= criteria.liquidity_epsilon,
                tx_collapsed=tx <= criteria.activity_epsilon,
                price_undefined=not swapped and stale,
            ))
    return timeline


def first_dead_run(timeline, criteria: DeadTokenCriteria) -> int | None:
    """Index of the first window opening an all-true run longer than the persistence span."""
    run_start = None
    for k, w in enumerate(timeline):
        if w.all_true:
            if run_start is None:
                run_start = k
            if (k - run_start + 1) * criteria.window_hours > criteria.persistence_hours:
                return run_start
        else:
            run_start = None
    return None


def locate_rugpull(trace: TokenTrace, death_onset: int,
                   criteria: DeadTokenCriteria) -> tuple[int, int] | None:
    """Largest quote-side liquidity removal that empties the pool before death onset.

    Only removals inside the lookback span ending at ``death_onset`` count, and
    only those leaving the quote reserve at or below ``liquidity_epsilon``.
    Ties keep the earliest event. Returns ``(timestamp, block)`` or ``None``
    for deaths by abandonment.
    """
    lo = death_onset - criteria.rugpull_lookback_hours * HOUR
    acc = PoolAccumulator()
    best: OnChainEvent | None = None
    with decimal.localcontext(DECIMAL_CONTEXT):
        for ev in trace.onchain_events:
            if ev.timestamp > death_onset:
                break
            acc.apply(ev)
            if (isinstance(ev.kind, LiquidityRemove) and ev.timestamp >= lo
                    and acc.quote_reserve <= criteria.liquidity_epsilon):
                if best is None or ev.kind.quote_amount > best.kind.quote_amount:
                    best = ev
    if best is None:
        return None
    return best.timestamp, best.block


def classify(trace: TokenTrace, criteria: DeadTokenCriteria | None = None) -> DeadTokenVerdict:
    criteria = criteria or DeadTokenCriteria()
    timeline = tuple(evaluate_conditions(trace, criteria))
    k = first_dead_run(timeline, criteria)
    if k is None:
        return DeadTokenVerdict(trace.project_id, ALIVE, timeline)
    onset = timeline[k].start
    located = locate_rugpull(trace, onset, criteria)
    rug_time, rug_block = located if located else (None, None)
    return DeadTokenVerdict(trace.project_id, DEAD, timeline, rug_time, rug_block, onset)


LABEL_COLUMNS = ("project_id", "label", "rugpull_time", "rugpull_block", "death_onset")


@dataclass(frozen=True)
class LabelRecord:
    project_id: str
    label: str
    rugpull_time: int | None = None
    rugpull_block: int | None = None
    death_onset: int | None = None

    @property
    def is_dead(self) -> bool:
        return self.label == DEAD

    @classmethod
    def from_verdict(cls, v: DeadTokenVerdict) -> "LabelRecord":
        return cls(v.project_id, v.label, v.rugpull_time, v.rugpull_block, v.death_onset)


def write_labels_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LABEL_COLUMNS)
    for r in sorted(records, key=lambda r: r.project_id):
        w.writerow([
            r.project_id, r.label,
            format_time(r.rugpull_time) if r.rugpull_time is not None else "",
            "" if r.rugpull_block is None else r.rugpull_block,
            format_time(r.death_onset) if r.death_onset is not None else "",
        ])
    return buf.getvalue()


def read_labels_csv(text: str) -> dict[str, LabelRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != LABEL_COLUMNS:
        raise SchemaError(f"labels header mismatch: {reader.fieldnames}")
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if row["label"] not in (ALIVE, DEAD):
            raise ParseError(lineno, f"label must be {ALIVE} or {DEAD}, got {row['label']!r}")
        out[row["project_id"]] = LabelRecord(
            row["project_id"], row["label"],
            parse_time(row["rugpull_time"]) if row["rugpull_time"] else None,
            int(row["rugpull_block"]) if row["rugpull_block"] else None,
            parse_time(row["death_onset"]) if row["death_onset"] else None,
        )
    return out
