"""Causal feature extraction.

Every feature is computed from the sub-trace strictly before the cutoff:
``extract`` truncates the trace first and never looks past it, and
``leakage_audit`` checks that claim by mutating the post-cutoff tail.
"""

from __future__ import annotations

import bisect
import csv
import decimal
import io
import math
import random
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, fields
from decimal import Decimal
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AuditFailure, DegenerateVariance, EmptyWindow, SchemaError
from .ingest import HolderSnapshot, derive_holder_snapshot
from .model import (
    DAY,
    DECIMAL_CONTEXT,
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
    dec,
    fold_pool,
    format_decimal,
    format_time,
    network_category,
    parse_time,
    token_type_category,
)

EARLY_TWEET_DAYS = 7
LIQUIDITY_HORIZON_DAYS = 7
LIQUIDITY_FLOOR = Decimal("1e-18")
TOP_HOLDERS = 10

PRERUG = "prerug"
FIXED_AGE = "fixed"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class CausalCutoff:
    cutoff_time: int
    mode: str = EXPLICIT
    safety_margin_hours: int = 0

    def describe(self) -> str:
        return f"{self.mode}:margin={self.safety_margin_hours}h"


def resolve_cutoff(trace: TokenTrace, mode: str = PRERUG, *, rugpull_time: int | None = None,
                   death_onset: int | None = None, safety_margin_hours: int = 0,
                   age_days: float | None = None, explicit: int | None = None) -> CausalCutoff:
    """Pick the feature cutoff for one trace.

    ``prerug`` uses the earlier of the rug-pull instant and death onset minus
    the safety margin; traces with neither (alive) use the end of observation.
    ``fixed`` uses a project age, capped at the end of observation.
    """
    if safety_margin_hours < 0:
        raise ValueError("safety margin must be non-negative")
    if mode == PRERUG:
        anchors = [t for t in (rugpull_time, death_onset) if t is not None]
        if anchors:
            t = min(anchors) - safety_margin_hours * HOUR
        else:
            t = trace.observation_end
    elif mode == FIXED_AGE:
        if age_days is None or age_days <= 0:
            raise ValueError("fixed-age cutoff needs a positive age in days")
        t = min(trace.start_time + int(round(age_days * DAY)), trace.observation_end)
    elif mode == EXPLICIT:
        if explicit is None:
            raise ValueError("explicit cutoff needs a timestamp")
        t = explicit
    else:
        raise ValueError(f"unknown cutoff mode {mode!r}")
    if t <= trace.start_time:
        raise EmptyWindow(
            f"{trace.project_id}: cutoff {format_time(t)} not after start {format_time(trace.start_time)}"
        )
    if t > trace.observation_end:
        raise EmptyWindow(f"{trace.project_id}: cutoff {format_time(t)} after observation end")
    return CausalCutoff(t, mode, safety_margin_hours)


NUMERIC_FEATURES = (
    "transaction_count",
    "holder_variance_top1",
    "token_concentration",
    "liquidity_change",
    "lp_supply",
    "max_price_q1",
    "max_price_q2",
    "max_price_q3",
    "max_price_q4",
    "volume_total",
    "volume_q4_share",
    "tweet_volume_early",
    "tweet_volume_total",
    "google_hits",
    "project_age_days",
)
CATEGORICAL_FEATURES = ("network", "token_type")
CATEGORY_LEVELS = {
    "network": ("Ethereum", "BSC", "Other"),
    "token_type": ("Utility", "Meme", "Governance", "Other"),
}
_INT_FEATURES = {"transaction_count", "tweet_volume_early", "tweet_volume_total", "google_hits"}
CSV_COLUMNS = ("project_id", "start_time", "cutoff_time") + NUMERIC_FEATURES + CATEGORICAL_FEATURES


@dataclass(frozen=True)
class FeatureVector:
    project_id: str
    start_time: int
    cutoff_time: int
    transaction_count: int
    holder_variance_top1: Decimal
    token_concentration: Decimal
    liquidity_change: Decimal
    lp_supply: Decimal
    max_price_q1: Decimal
    max_price_q2: Decimal
    max_price_q3: Decimal
    max_price_q4: Decimal
    volume_total: Decimal
    volume_q4_share: Decimal
    tweet_volume_early: int
    tweet_volume_total: int
    google_hits: int
    network: str
    token_type: str
    project_age_days: Decimal

    def numeric(self) -> list[float]:
        return [float(getattr(self, name)) for name in NUMERIC_FEATURES]

    def to_row(self) -> list[str]:
        row = [self.project_id, format_time(self.start_time), format_time(self.cutoff_time)]
        for name in NUMERIC_FEATURES:
            v = getattr(self, name)
            row.append(str(v) if name in _INT_FEATURES else format_decimal(v))
        row += [self.network, self.token_type]
        return row

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "FeatureVector":
        kwargs = {
            "project_id": row["project_id"],
            "start_time": parse_time(row["start_time"]),
            "cutoff_time": parse_time(row["cutoff_time"]),
            "network": row["network"],
            "token_type": row["token_type"],
        }
        for name in NUMERIC_FEATURES:
            kwargs[name] = int(row[name]) if name in _INT_FEATURES else dec(row[name])
        return cls(**kwargs)


def truncate(trace: TokenTrace, cutoff_time: int) -> TokenTrace:
    """The trace as it looked at ``cutoff_time``: only events strictly before it."""
    on = trace.onchain_events
    os_ = trace.osint_events
    n_on = bisect.bisect_left([e.timestamp for e in on], cutoff_time)
    n_os = bisect.bisect_left([e.timestamp for e in os_], cutoff_time)
    return TokenTrace(
        project_id=trace.project_id,
        network=trace.network,
        token_type=trace.token_type,
        start_time=trace.start_time,
        observation_end=cutoff_time,
        total_supply=trace.total_supply,
        deployer=trace.deployer,
        pool=trace.pool,
        onchain_events=on[:n_on],
        osint_events=os_[:n_os],
    )


def _population_variance(values: Sequence[Decimal]) -> Decimal:
    n = len(values)
    if n < 2:
        return Decimal(0)
    mean = sum(values, Decimal(0)) / n
    return sum(((v - mean) ** 2 for v in values), Decimal(0)) / n


def _holder_features(snapshot: HolderSnapshot, pool: str | None) -> tuple[Decimal, Decimal]:
    balances = sorted(snapshot.circulating(pool).values(), reverse=True)
    if not balances:
        return Decimal(0), Decimal(0)
    top_k = math.ceil(len(balances) / 100)
    variance = _population_variance(balances[:top_k])
    circulating = sum(balances, Decimal(0))
    concentration = sum(balances[:TOP_HOLDERS], Decimal(0)) / circulating
    return variance, concentration


def extract(trace: TokenTrace, cutoff: CausalCutoff,
            holder_snapshot_fn: Callable[[TokenTrace, int], HolderSnapshot] = derive_holder_snapshot,
            early_days: int = EARLY_TWEET_DAYS) -> FeatureVector:
    t_cut = cutoff.cutoff_time
    start = trace.start_time
    if t_cut <= start:
        raise EmptyWindow(f"{trace.project_id}: cutoff not after project start")
    past = truncate(trace, t_cut)
    span = t_cut - start

    with decimal.localcontext(DECIMAL_CONTEXT):
        tx_count = 0
        max_price = [Decimal(0)] * 4
        volume = [Decimal(0)] * 4
        for ev in past.onchain_events:
            if not ev.is_transaction:
                continue
            tx_count += 1
            k = ev.kind
            if isinstance(k, Swap):
                q = min(3, 4 * (ev.timestamp - start) // span)
                if k.price > max_price[q]:
                    max_price[q] = k.price
                volume[q] += k.quote_amount
        volume_total = sum(volume, Decimal(0))
        q4_share = volume[3] / volume_total if volume_total > 0 else Decimal(0)

        pool_now = fold_pool(past.onchain_events)
        horizon_start = t_cut - LIQUIDITY_HORIZON_DAYS * DAY
        reserve_then = fold_pool(past.onchain_events, before=horizon_start).quote_reserve
        liquidity_change = (pool_now.quote_reserve - reserve_then) / max(reserve_then, LIQUIDITY_FLOOR)

        # Integer-second timestamps: "at or before t_cut - 1" is "strictly before t_cut".
        snapshot = holder_snapshot_fn(past, t_cut - 1)
        variance, concentration = _holder_features(snapshot, trace.pool)

        early_end = min(start + early_days * DAY, t_cut)
        tweets_early = tweets_total = google = 0
        for ev in past.osint_events:
            if ev.kind == "tweet":
                tweets_total += ev.count
                if ev.timestamp < early_end:
                    tweets_early += ev.count
            else:
                google += ev.count

        return FeatureVector(
            project_id=trace.project_id,
            start_time=start,
            cutoff_time=t_cut,
            transaction_count=tx_count,
            holder_variance_top1=dec(variance),
            token_concentration=dec(concentration),
            liquidity_change=dec(liquidity_change),
            lp_supply=dec(pool_now.lp_supply),
            max_price_q1=max_price[0],
            max_price_q2=max_price[1],
            max_price_q3=max_price[2],
            max_price_q4=max_price[3],
            volume_total=dec(volume_total),
            volume_q4_share=dec(q4_share),
            tweet_volume_early=tweets_early,
            tweet_volume_total=tweets_total,
            google_hits=google,
            network=network_category(trace.network),
            token_type=token_type_category(trace.token_type),
            project_age_days=dec(Decimal(span) / DAY),
        )


# --- leakage audit -----------------------------------------------------------

@dataclass
class AuditReport:
    project_id: str
    cutoff_time: int
    trials: int
    mutations: Counter
    violations: Counter

    @property
    def ok(self) -> bool:
        return not self.violations


def _random_amount(rng: random.Random) -> Decimal:
    return dec(f"{rng.randint(0, 10**9)}.{rng.randint(0, 10**6):06d}")


def _random_kind(rng: random.Random, trace: TokenTrace):
    choice = rng.randrange(6)
    a, b = _random_amount(rng), _random_amount(rng)
    if choice == 0:
        return Transfer(trace.deployer, f"0xaudit{rng.randrange(10**6):06d}", a)
    if choice == 1:
        return Swap(rng.choice(("buy", "sell")), a, b, _random_amount(rng) + Decimal(1))
    if choice == 2:
        return LiquidityAdd(a, b)
    if choice == 3:
        return LiquidityRemove(a, b)
    if choice == 4:
        return LpMint(a)
    return LpBurn(a)


def _perturb(rng: random.Random, ev):
    if isinstance(ev, OsintEvent):
        return OsintEvent(ev.timestamp, ev.kind, ev.count + rng.randint(1, 1000))
    k = ev.kind
    if isinstance(k, Transfer):
        k = Transfer(k.sender, k.recipient, _random_amount(rng))
    elif isinstance(k, Swap):
        k = Swap(k.direction, _random_amount(rng), _random_amount(rng),
                 _random_amount(rng) + Decimal(1))
    else:
        k = type(k)(*[_random_amount(rng) for _ in fields(k)])
    return OnChainEvent(ev.timestamp, ev.block, k)


def mutate_after(trace: TokenTrace, cutoff_time: int, rng: random.Random) -> tuple[TokenTrace, str]:
    """Apply one random insert/delete/perturb to events at or after ``cutoff_time``."""
    on = list(trace.onchain_events)
    os_ = list(trace.osint_events)
    tail_on = [i for i, e in enumerate(on) if e.timestamp >= cutoff_time]
    tail_os = [i for i, e in enumerate(os_) if e.timestamp >= cutoff_time]
    ops = ["insert"]
    if tail_on or tail_os:
        ops += ["delete", "perturb"]
    op = rng.choice(ops)
    if op == "insert":
        ts = rng.randint(cutoff_time, trace.observation_end)
        if rng.random() < 0.5:
            pos = bisect.bisect_right([e.timestamp for e in on], ts)
            block = on[pos - 1].block if pos else 0
            on.insert(pos, OnChainEvent(ts, block, _random_kind(rng, trace)))
        else:
            pos = bisect.bisect_right([e.timestamp for e in os_], ts)
            os_.insert(pos, OsintEvent(ts, rng.choice(("tweet", "google")), rng.randint(1, 500)))
    else:
        pool = [("on", i) for i in tail_on] + [("os", i) for i in tail_os]
        which, i = rng.choice(pool)
        target = on if which == "on" else os_
        if op == "delete":
            del target[i]
        else:
            target[i] = _perturb(rng, target[i])
    return trace.with_events(on, os_), op


def leakage_audit(trace: TokenTrace, cutoff: CausalCutoff, n_trials: int = 100,
                  seed: int = 0, max_mutations: int = 3, raise_on_failure: bool = True,
                  extractor: Callable[[TokenTrace, CausalCutoff], FeatureVector] = extract,
                  ) -> AuditReport:
    """Check that post-cutoff edits leave every extracted feature bit-identical.

    Each trial applies between one and ``max_mutations`` random edits to the
    unmodified trace, restricted to events at or after the cutoff.
    """
    rng = random.Random(seed)
    baseline = extractor(trace, cutoff)
    base_row = baseline.to_row()
    mutations: Counter = Counter()
    violations: Counter = Counter()
    for _ in range(n_trials):
        mutated = trace
        for _ in range(rng.randint(1, max_mutations)):
            mutated, op = mutate_after(mutated, cutoff.cutoff_time, rng)
            mutations[op] += 1
        got = extractor(mutated, cutoff)
        if got != baseline or got.to_row() != base_row:
            for name in CSV_COLUMNS:
                if getattr(got, name) != getattr(baseline, name):
                    violations[name] += 1
    report = AuditReport(trace.project_id, cutoff.cutoff_time, n_trials, mutations, violations)
    if violations and raise_on_failure:
        raise AuditFailure(sorted(violations), f"project {trace.project_id}")
    return report


# --- tabular export ------------------------------------------------------------

def write_features_csv(vectors: Iterable[FeatureVector]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for v in sorted(vectors, key=lambda v: v.project_id):
        w.writerow(v.to_row())
    return buf.getvalue()


def read_features_csv(text: str) -> list[FeatureVector]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise SchemaError(f"features header mismatch: {reader.fieldnames}")
    return [FeatureVector.from_row(row) for row in reader]


def signed_log1p(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(np.abs(x))


def design_columns() -> list[str]:
    cols = list(NUMERIC_FEATURES)
    for cat in CATEGORICAL_FEATURES:
        cols += [f"{cat}={level}" for level in CATEGORY_LEVELS[cat]]
    return cols


def design_matrix(vectors: Sequence[FeatureVector], transform: str = "log1p") -> np.ndarray:
    """Float matrix for model fitting: numeric columns (optionally signed-log1p) + one-hot categoricals."""
    if transform not in ("log1p", "raw"):
        raise ValueError(f"unknown transform {transform!r}")
    numeric = np.array([v.numeric() for v in vectors], dtype=float).reshape(len(vectors), -1)
    if transform == "log1p":
        numeric = signed_log1p(numeric)
    blocks = [numeric]
    for cat in CATEGORICAL_FEATURES:
        levels = CATEGORY_LEVELS[cat]
        onehot = np.zeros((len(vectors), len(levels)))
        for i, v in enumerate(vectors):
            onehot[i, levels.index(getattr(v, cat))] = 1.0
        blocks.append(onehot)
    return np.hstack(blocks)


# --- descriptive statistics ---------------------------------------------------

@dataclass(frozen=True)
class FeatureStats:
    mean: float
    std: float
    median: float
    min: float
    max: float


def summarize(values: Sequence[float]) -> FeatureStats:
    """Population statistics; ``statistics`` sums exactly, so 1e20-scale values cannot swamp small ones."""
    if len(values) == 0:
        raise ValueError("no values")
    values = [float(v) for v in values]
    return FeatureStats(statistics.mean(values), statistics.pstdev(values),
                        statistics.median(values), min(values), max(values))


def descriptive_stats(vectors: Sequence[FeatureVector]) -> dict[str, FeatureStats]:
    if not vectors:
        raise ValueError("descriptive_stats needs at least one feature vector")
    return {name: summarize([float(getattr(v, name)) for v in vectors]) for name in NUMERIC_FEATURES}


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    if n != len(y) or n < 2:
        raise ValueError("pearson_correlation needs two sequences of equal length >= 2")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0 or syy == 0:
        raise DegenerateVariance("correlation undefined for a constant input")
    denom = math.sqrt(sxx * syy)  # one rounding, so corr(x, x) is exactly 1
    if math.isinf(denom):
        denom = math.sqrt(sxx) * math.sqrt(syy)
    r = math.fsum(a * b for a, b in zip(dx, dy)) / denom
    return max(-1.0, min(1.0, r))


def correlation_matrix(vectors: Sequence[FeatureVector],
                       names: Sequence[str] = ("transaction_count", "tweet_volume_total", "google_hits"),
                       ) -> np.ndarray:
    cols = [[float(getattr(v, n)) for v in vectors] for n in names]
    m = np.eye(len(names))
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            m[i, j] = m[j, i] = pearson_correlation(cols[i], cols[j])
    return m


def stats_rows(stats: dict[str, FeatureStats]) -> list[dict]:
    return [{"feature": name, **asdict(s)} for name, s in stats.items()]
