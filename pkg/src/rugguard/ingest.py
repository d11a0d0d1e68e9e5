"""Reading and writing the line-delimited trace format, plus holder-balance folds.

One project per file. Each non-blank line that does not start with ``#`` is a
record: a tag followed by ``|``-separated fields. Timestamps are ISO-8601 UTC
(``2024-01-31T12:00:00Z``); quantities are plain decimal strings with at most
18 fractional digits (no exponents).

    META|project_id=<id>|network=<name>|token_type=<name>|start=<ts>|end=<ts>|total_supply=<dec>|deployer=<addr>[|pool=<addr>]
    XFER|<ts>|<block>|<from>|<to>|<amount>
    SWAP|<ts>|<block>|<buy|sell>|<token_amount>|<quote_amount>|<price>
    LADD|<ts>|<block>|<token_amount>|<quote_amount>
    LREM|<ts>|<block>|<token_amount>|<quote_amount>
    LPMINT|<ts>|<block>|<amount>
    LPBURN|<ts>|<block>|<amount>
    TWEET|<ts>|<count>
    GHIT|<ts>|<count>
"""

from __future__ import annotations

import decimal
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterator

from .errors import IoError, NegativeBalance, OrderError, OutOfRange, ParseError, SchemaError
from .model import (
    BURN_ADDRESSES,
    DECIMAL_CONTEXT,
    LiquidityAdd,
    LiquidityRemove,
    LpBurn,
    LpMint,
    OnChainEvent,
    OsintEvent,
    Swap,
    TokenTrace,
    Transfer,
    dec,
    format_decimal,
    format_time,
    parse_time,
)

log = logging.getLogger(__name__)

TRACE_SUFFIX = ".trace"
META_KEYS = ("project_id", "network", "token_type", "start", "end", "total_supply", "deployer")

_DECIMAL_RE = re.compile(r"^\d+(\.\d{1,18})?$")
_FIELD_COUNTS = {
    "XFER": 5, "SWAP": 6, "LADD": 4, "LREM": 4, "LPMINT": 3, "LPBURN": 3, "TWEET": 2, "GHIT": 2,
}


def _decimal(text: str, what: str) -> Decimal:
    if not _DECIMAL_RE.match(text):
        raise ValueError(f"bad decimal for {what}: {text!r}")
    return dec(text)


def _int(text: str, what: str) -> int:
    if not text.isdigit():
        raise ValueError(f"bad integer for {what}: {text!r}")
    return int(text)


def _parse_meta(fields: list[str]) -> dict[str, str]:
    meta = {}
    for f in fields:
        key, sep, value = f.partition("=")
        if not sep or not key:
            raise ValueError(f"META field is not key=value: {f!r}")
        if key in meta:
            raise ValueError(f"duplicate META key {key!r}")
        meta[key] = value
    return meta


def _parse_record(tag: str, fields: list[str]):
    expected = _FIELD_COUNTS.get(tag)
    if expected is None:
        raise ValueError(f"unknown record tag {tag!r}")
    if len(fields) != expected:
        raise ValueError(f"{tag} expects {expected} fields, got {len(fields)}")
    ts = parse_time(fields[0])
    if tag in ("TWEET", "GHIT"):
        kind = "tweet" if tag == "TWEET" else "google"
        return OsintEvent(ts, kind, _int(fields[1], "count"))
    block = _int(fields[1], "block")
    rest = fields[2:]
    if tag == "XFER":
        if not rest[0] or not rest[1]:
            raise ValueError("empty address")
        kind = Transfer(rest[0], rest[1], _decimal(rest[2], "amount"))
    elif tag == "SWAP":
        kind = Swap(rest[0], _decimal(rest[1], "token_amount"),
                    _decimal(rest[2], "quote_amount"), _decimal(rest[3], "price"))
    elif tag == "LADD":
        kind = LiquidityAdd(_decimal(rest[0], "token_amount"), _decimal(rest[1], "quote_amount"))
    elif tag == "LREM":
        kind = LiquidityRemove(_decimal(rest[0], "token_amount"), _decimal(rest[1], "quote_amount"))
    elif tag == "LPMINT":
        kind = LpMint(_decimal(rest[0], "amount"))
    else:
        kind = LpBurn(_decimal(rest[0], "amount"))
    return OnChainEvent(ts, block, kind)


def _sort_checked(events: list, tolerance: int, path: str, label: str) -> list:
    worst = 0
    latest = None
    for ev in events:
        if latest is not None and ev.timestamp < latest:
            worst = max(worst, latest - ev.timestamp)
        latest = ev.timestamp if latest is None else max(latest, ev.timestamp)
    if worst == 0:
        return events
    if worst > tolerance:
        raise OrderError(
            f"{path}: {label} timestamps regress by {worst}s (tolerance {tolerance}s)"
        )
    log.warning("%s: %s timestamps regress by up to %ss; re-sorted", path, label, worst)
    # Stable sort keeps same-second records in file order.
    return sorted(events, key=lambda e: e.timestamp)


def parse_lines(lines, path: str = "<memory>", order_tolerance: int = 0) -> TokenTrace:
    """Parse an iterable of text lines into a validated trace."""
    meta = None
    onchain: list[OnChainEvent] = []
    osint: list[OsintEvent] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        tag, *fields = line.split("|")
        try:
            if tag == "META":
                if meta is not None:
                    raise ValueError("second META record")
                meta = _parse_meta(fields)
                meta_line = lineno
                continue
            rec = _parse_record(tag, fields)
        except (ValueError, ArithmeticError) as exc:
            raise ParseError(lineno, str(exc), path) from None
        (osint if isinstance(rec, OsintEvent) else onchain).append(rec)

    if meta is None:
        raise SchemaError(f"{path}: no META record")
    missing = [k for k in META_KEYS if not meta.get(k)]
    if missing:
        raise SchemaError(f"{path}: META missing {', '.join(missing)}")
    try:
        start = parse_time(meta["start"])
        end = parse_time(meta["end"])
        supply = _decimal(meta["total_supply"], "total_supply")
    except ValueError as exc:
        raise ParseError(meta_line, str(exc), path) from None

    onchain = _sort_checked(onchain, order_tolerance, path, "on-chain")
    osint = _sort_checked(osint, order_tolerance, path, "OSINT")
    try:
        return TokenTrace(
            project_id=meta["project_id"],
            network=meta["network"],
            token_type=meta["token_type"],
            start_time=start,
            observation_end=end,
            total_supply=supply,
            deployer=meta["deployer"],
            pool=meta.get("pool") or None,
            onchain_events=onchain,
            osint_events=osint,
        )
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def parse_trace(path, order_tolerance: int = 0) -> TokenTrace:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            return parse_lines(fh, str(path), order_tolerance)
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None


def _event_line(ev) -> str:
    if isinstance(ev, OsintEvent):
        tag = "TWEET" if ev.kind == "tweet" else "GHIT"
        return f"{tag}|{format_time(ev.timestamp)}|{ev.count}"
    head = f"{format_time(ev.timestamp)}|{ev.block}"
    k = ev.kind
    d = format_decimal
    if isinstance(k, Transfer):
        return f"XFER|{head}|{k.sender}|{k.recipient}|{d(k.amount)}"
    if isinstance(k, Swap):
        return f"SWAP|{head}|{k.direction}|{d(k.token_amount)}|{d(k.quote_amount)}|{d(k.price)}"
    if isinstance(k, LiquidityAdd):
        return f"LADD|{head}|{d(k.token_amount)}|{d(k.quote_amount)}"
    if isinstance(k, LiquidityRemove):
        return f"LREM|{head}|{d(k.token_amount)}|{d(k.quote_amount)}"
    if isinstance(k, LpMint):
        return f"LPMINT|{head}|{d(k.amount)}"
    return f"LPBURN|{head}|{d(k.amount)}"


def iter_trace_lines(trace: TokenTrace) -> Iterator[str]:
    meta = [
        f"project_id={trace.project_id}",
        f"network={trace.network}",
        f"token_type={trace.token_type}",
        f"start={format_time(trace.start_time)}",
        f"end={format_time(trace.observation_end)}",
        f"total_supply={format_decimal(trace.total_supply)}",
        f"deployer={trace.deployer}",
    ]
    if trace.pool:
        meta.append(f"pool={trace.pool}")
    yield "META|" + "|".join(meta)
    for ev in trace.onchain_events:
        yield _event_line(ev)
    for ev in trace.osint_events:
        yield _event_line(ev)


def serialize_trace(trace: TokenTrace) -> str:
    return "".join(line + "\n" for line in iter_trace_lines(trace))


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary sibling file and rename into place."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from None


def write_trace(trace: TokenTrace, directory) -> Path:
    out = Path(directory) / f"{trace.project_id}{TRACE_SUFFIX}"
    atomic_write_text(out, serialize_trace(trace))
    return out


def trace_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise IoError(f"{directory}: no such directory")
    return sorted(directory.glob(f"*{TRACE_SUFFIX}"))


def load_traces(directory, order_tolerance: int = 0) -> list[TokenTrace]:
    return [parse_trace(p, order_tolerance) for p in trace_files(directory)]


@dataclass(frozen=True)
class HolderSnapshot:
    timestamp: int
    balances: dict[str, Decimal]

    def total(self) -> Decimal:
        with decimal.localcontext(DECIMAL_CONTEXT):
            return sum(self.balances.values(), Decimal(0))

    def circulating(self, pool: str | None = None) -> dict[str, Decimal]:
        """Balances excluding burn sinks and the pool contract."""
        skip = BURN_ADDRESSES | ({pool} if pool else set())
        return {a: b for a, b in self.balances.items() if a not in skip}


def fold_balances(trace: TokenTrace, before: int | None = None,
                  through: int | None = None) -> dict[str, Decimal]:
    balances = {trace.deployer: trace.total_supply}
    with decimal.localcontext(DECIMAL_CONTEXT):
        _apply_transfers(trace, balances, before, through)
    return {a: b for a, b in balances.items() if b != 0}


def _apply_transfers(trace, balances, before, through) -> None:
    for ev in trace.onchain_events:
        if before is not None and ev.timestamp >= before:
            break
        if through is not None and ev.timestamp > through:
            break
        k = ev.kind
        if not isinstance(k, Transfer):
            continue
        have = balances.get(k.sender, Decimal(0))
        if k.amount > have:
            raise NegativeBalance(
                f"{trace.project_id}: {k.sender} sends {k.amount} holding {have} "
                f"at {format_time(ev.timestamp)} (block {ev.block})"
            )
        balances[k.sender] = have - k.amount
        balances[k.recipient] = balances.get(k.recipient, Decimal(0)) + k.amount


def derive_holder_snapshot(trace: TokenTrace, at: int) -> HolderSnapshot:
    """Token balances after all transfers at or before ``at``.

    The deployer starts with the full supply. Burn sinks stay in the snapshot,
    so balances always sum to ``total_supply``; use ``circulating()`` to drop them.
    """
    if not trace.start_time <= at <= trace.observation_end:
        raise OutOfRange(f"{format_time(at)} outside observation window of {trace.project_id}")
    return HolderSnapshot(at, fold_balances(trace, through=at))
