"""Seeded synthetic token lifecycles, legitimate and rug-pulled.

Rug-pull traces follow a fixed script: insider-heavy distribution, a pump
with an attention burst, a deployer dump (the rug-pull transaction), a full
liquidity removal ``drain_delay_blocks`` later, a short tail of residual
activity against the empty pool, then silence. Legitimate traces keep a
funded pool for their whole observation window.

Each project draws from its own RNG seeded by ``sha256(seed, index)``, so a
project's trace does not depend on how many others are generated or in which
order.
"""

from __future__ import annotations

import csv
import decimal
import hashlib
import io
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from decimal import ROUND_DOWN, Decimal

from .errors import ConfigError
from .labeler import ALIVE, DEAD, DeadTokenCriteria, classify
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
    format_time,
    parse_time,
)

EPOCH = parse_time("2023-01-01T00:00:00Z")
BLOCK_SECONDS = {"Ethereum": 12, "BSC": 3, "Polygon": 2}
TOKEN_TYPES = ("Utility", "Meme", "Governance", "NFT")
AMOUNT_STEP = Decimal("0.000001")
DUST_PRICE = Decimal("1e-18")


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_projects: int = 1000
    rug_fraction: float = 0.59
    lifetime_range_days: tuple[float, float] = (10.0, 40.0)
    rug_lifetime_range_days: tuple[float, float] = (4.0, 20.0)
    start_range_days: tuple[float, float] = (0.0, 365.0)
    base_tx_rate: float = 0.3
    pump_intensity: float = 4.0
    drain_delay_blocks: tuple[int, int] = (0, 2)
    tx_collapse_24h_fraction: float = 0.90
    price_undefined_onset_hours: tuple[float, float] = (24.0, 48.0)
    full_inactivity_days: tuple[float, float] = (1.0, 3.0)
    osint_burst_lead_days: tuple[float, float] = (1.0, 10.0)
    post_death_days: tuple[float, float] = (4.0, 10.0)
    hard_mode: bool = False

    def __post_init__(self):
        if self.n_projects < 0:
            raise ConfigError("n_projects must be non-negative")
        for name in ("rug_fraction", "tx_collapse_24h_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        for name in ("lifetime_range_days", "rug_lifetime_range_days", "start_range_days",
                     "drain_delay_blocks", "price_undefined_onset_hours",
                     "full_inactivity_days", "osint_burst_lead_days", "post_death_days"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} must be a non-empty, non-negative range, got {(lo, hi)}")
        if self.lifetime_range_days[0] <= 0 or self.rug_lifetime_range_days[0] <= 0:
            raise ConfigError("lifetimes must be positive")
        if self.base_tx_rate <= 0 or self.pump_intensity < 1:
            raise ConfigError("base_tx_rate must be positive and pump_intensity >= 1")
        if self.price_undefined_onset_hours[0] < 24:
            raise ConfigError("price_undefined_onset_hours must start at or after the 24h collapse window")
        # Quiet tail must outlast a 72h persistence span by at least one window.
        if self.post_death_days[0] * 24 < 73:
            raise ConfigError("post_death_days must leave more than 72h of silence")


@dataclass(frozen=True)
class GroundTruth:
    project_id: str
    label: str
    rugpull_time: int | None = None
    rugpull_block: int | None = None
    drain_time: int | None = None
    drain_block: int | None = None
    drain_delay_blocks: int | None = None
    potential_24h: int = 0
    residual_24h: int = 0
    price_onset: int | None = None
    inactivity_time: int | None = None
    burst_start: int | None = None
    burst_end: int | None = None


GROUND_TRUTH_COLUMNS = (
    "project_id", "label", "rugpull_time", "rugpull_block", "drain_time", "drain_block",
    "drain_delay_blocks", "potential_24h", "residual_24h", "price_onset", "inactivity_time",
    "burst_start", "burst_end",
)
_TIME_COLUMNS = {"rugpull_time", "drain_time", "price_onset", "inactivity_time", "burst_start", "burst_end"}


def write_ground_truth_csv(truths) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GROUND_TRUTH_COLUMNS)
    for gt in truths:
        row = []
        for col in GROUND_TRUTH_COLUMNS:
            v = getattr(gt, col)
            if v is None:
                row.append("")
            elif col in _TIME_COLUMNS:
                row.append(format_time(v))
            else:
                row.append(str(v))
        w.writerow(row)
    return buf.getvalue()


def read_ground_truth_csv(text: str) -> list[GroundTruth]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kwargs = {}
        for col in GROUND_TRUTH_COLUMNS:
            v = row[col]
            if col in ("project_id", "label"):
                kwargs[col] = v
            elif v == "":
                kwargs[col] = None
            elif col in _TIME_COLUMNS:
                kwargs[col] = parse_time(v)
            else:
                kwargs[col] = int(v)
        out.append(GroundTruth(**kwargs))
    return out


def sub_seed(seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _address(rng: random.Random) -> str:
    return f"0x{rng.getrandbits(160):040x}"


def _q(x: Decimal) -> Decimal:
    return x.quantize(AMOUNT_STEP, rounding=ROUND_DOWN)


def _amount(x: float) -> Decimal:
    return _q(Decimal(repr(x)))


@dataclass
class _Builder:
    """Mutable world state while one trace is scripted."""

    rng: random.Random
    start: int
    block_seconds: int
    base_block: int
    deployer: str
    pool: str
    events: list = field(default_factory=list)
    balances: dict = field(default_factory=dict)
    token_reserve: Decimal = Decimal(0)
    quote_reserve: Decimal = Decimal(0)
    lp_supply: Decimal = Decimal(0)
    arrivals: int = 0
    _holders: list = field(default_factory=list)
    _slot: dict = field(default_factory=dict)

    def block_at(self, ts: int) -> int:
        return self.base_block + (ts - self.start) // self.block_seconds

    def emit(self, ts: int, kind) -> None:
        self.events.append(OnChainEvent(ts, self.block_at(ts), kind))

    def transfer(self, ts: int, sender: str, recipient: str, amount: Decimal) -> None:
        if amount <= 0:
            return
        self.balances[sender] -= amount
        self.balances[recipient] = self.balances.get(recipient, Decimal(0)) + amount
        self.emit(ts, Transfer(sender, recipient, amount))
        self._track(sender)
        self._track(recipient)

    def _track(self, addr: str) -> None:
        # Swap-remove keeps membership O(1) and the list order deterministic.
        if addr == self.deployer or addr == self.pool:
            return
        held = self.balances.get(addr, 0) > 0
        slot = self._slot.get(addr)
        if held and slot is None:
            self._slot[addr] = len(self._holders)
            self._holders.append(addr)
        elif not held and slot is not None:
            last = self._holders.pop()
            if last != addr:
                self._holders[slot] = last
                self._slot[last] = slot
            del self._slot[addr]

    def add_liquidity(self, ts: int, provider: str, tokens: Decimal, quote: Decimal) -> None:
        minted = _q(Decimal(math.sqrt(float(tokens) * float(quote))))
        self.token_reserve += tokens
        self.quote_reserve += quote
        self.lp_supply += minted
        self.emit(ts, LiquidityAdd(tokens, quote))
        self.emit(ts, LpMint(minted))
        self.transfer(ts, provider, self.pool, tokens)

    def remove_liquidity(self, ts: int, provider: str, share: Decimal) -> None:
        if share >= 1:
            tokens, quote, burned = self.token_reserve, self.quote_reserve, self.lp_supply
        else:
            tokens = _q(self.token_reserve * share)
            quote = _q(self.quote_reserve * share)
            burned = _q(self.lp_supply * share)
        self.token_reserve -= tokens
        self.quote_reserve -= quote
        self.lp_supply -= burned
        self.emit(ts, LiquidityRemove(tokens, quote))
        self.emit(ts, LpBurn(burned))
        self.transfer(ts, self.pool, provider, tokens)

    def buy(self, ts: int, trader: str, quote_in: Decimal) -> bool:
        quote_in = _q(quote_in)
        if quote_in <= 0 or self.token_reserve <= 0:
            return False
        out = _q(self.token_reserve * quote_in / (self.quote_reserve + quote_in))
        if out <= 0:
            return False
        self.token_reserve -= out
        self.quote_reserve += quote_in
        self.emit(ts, Swap("buy", out, quote_in, (quote_in / out).quantize(DUST_PRICE) or DUST_PRICE))
        self.transfer(ts, self.pool, trader, out)
        return True

    def sell(self, ts: int, trader: str, tokens_in: Decimal) -> bool:
        tokens_in = _q(min(tokens_in, self.balances.get(trader, Decimal(0))))
        if tokens_in <= 0:
            return False
        out = _q(self.quote_reserve * tokens_in / (self.token_reserve + tokens_in))
        price = (out / tokens_in).quantize(DUST_PRICE) if out > 0 else DUST_PRICE
        self.token_reserve += tokens_in
        self.quote_reserve -= out
        self.emit(ts, Swap("sell", tokens_in, out, price if price > 0 else DUST_PRICE))
        self.transfer(ts, trader, self.pool, tokens_in)
        return True

    def holders(self) -> list[str]:
        """Non-deployer wallets with a positive balance (live view; do not mutate)."""
        return self._holders

    def random_activity(self, ts: int, buy_bias: float, trade_size: float,
                        allow_swaps: bool = True) -> None:
        """One arrival: a buy, a sell, or a wallet-to-wallet transfer."""
        rng = self.rng
        self.arrivals += 1
        u = rng.random()
        holders = self.holders()
        if allow_swaps and (u < buy_bias or not holders):
            trader = rng.choice(holders) if holders and rng.random() < 0.3 else _address(rng)
            quote_in = self.quote_reserve * Decimal(repr(trade_size * rng.uniform(0.2, 1.8)))
            if self.buy(ts, trader, quote_in):
                return
        if not holders:
            return
        trader = rng.choice(holders)
        frac = Decimal(repr(rng.uniform(0.2, 1.0)))
        if allow_swaps and u < buy_bias + (1 - buy_bias) * 0.7:
            self.sell(ts, trader, self.balances[trader] * frac)
        else:
            dest = rng.choice(holders) if rng.random() < 0.3 else _address(rng)
            if dest != trader:
                self.transfer(ts, trader, dest, _q(self.balances[trader] * frac))


def _poisson_times(rng: random.Random, t0: int, t1: int, rate_per_hour) -> list[int]:
    """Arrival times in [t0, t1) of a Poisson process; ``rate_per_hour`` may be a function of time."""
    out = []
    if t1 <= t0:
        return out
    if callable(rate_per_hour):
        peak = max(rate_per_hour(t0), rate_per_hour(t1 - 1))
        t = float(t0)
        while True:
            t += rng.expovariate(peak / HOUR)
            if t >= t1:
                return out
            if rng.random() * peak <= rate_per_hour(t):
                out.append(int(t))
    t = float(t0)
    while True:
        t += rng.expovariate(rate_per_hour / HOUR)
        if t >= t1:
            return out
        out.append(int(t))


def _poisson(rng: random.Random, mean: float) -> int:
    # Knuth for small means, normal approximation otherwise.
    if mean <= 0:
        return 0
    if mean > 60:
        return max(0, int(round(rng.gauss(mean, math.sqrt(mean)))))
    limit = math.exp(-mean)
    k, p = 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _daily_osint(rng: random.Random, t0: int, t1: int, rate_fn) -> list[OsintEvent]:
    """Pre-aggregated daily tweet/search counts over [t0, t1)."""
    out = []
    day = t0
    while day < t1:
        end = min(day + DAY, t1)
        frac = (end - day) / DAY
        tweet_rate, google_rate = rate_fn(day)
        n_tw = _poisson(rng, tweet_rate * frac)
        n_gh = _poisson(rng, google_rate * frac)
        if n_tw:
            out.append(OsintEvent(rng.randrange(day, end), "tweet", n_tw))
        if n_gh:
            out.append(OsintEvent(rng.randrange(day, end), "google", n_gh))
        day = end
    out.sort(key=lambda e: e.timestamp)
    return out


def _distribution_plan(b: _Builder, ts0: int, spread: int, share_kept: float,
                       n_wallets: int) -> list:
    """Timed transfers handing the deployer's non-pool tokens to ``n_wallets``."""
    rng = b.rng
    give = b.balances[b.deployer] * Decimal(repr(1 - share_kept))
    weights = [rng.expovariate(1.0) for _ in range(n_wallets)]
    total_w = sum(weights)
    plan = []
    for w in weights:
        wallet = _address(rng)
        amount = _q(give * Decimal(repr(w / total_w)))
        plan.append((rng.randrange(ts0, ts0 + max(1, spread)), partial(_airdrop, b, wallet, amount)))
    return plan


def _airdrop(b: _Builder, wallet: str, amount: Decimal, ts: int) -> None:
    b.transfer(ts, b.deployer, wallet, amount)


def _run(plan) -> None:
    """Execute timed actions in chronological order (ties keep plan order)."""
    for ts, action in sorted(plan, key=lambda a: a[0]):
        action(ts)


def _setup(rng: random.Random, index: int, config: GeneratorConfig):
    network = rng.choice(tuple(BLOCK_SECONDS))
    token_type = rng.choice(TOKEN_TYPES)
    lo, hi = config.start_range_days
    start = EPOCH + int(rng.uniform(lo, hi) * DAY)
    supply = Decimal(10) ** rng.randint(6, 12) * rng.randint(1, 9)
    deployer = _address(rng)
    b = _Builder(rng=rng, start=start, block_seconds=BLOCK_SECONDS[network],
                 base_block=rng.randint(10_000_000, 30_000_000), deployer=deployer,
                 pool=_address(rng))
    b.balances[deployer] = supply
    b.add_liquidity(start, deployer, _q(supply * Decimal(repr(rng.uniform(0.2, 0.4)))),
                    _amount(rng.uniform(20, 500)))
    return f"p{index:05d}", network, token_type, start, supply, b


def _finish(pid, network, token_type, start, end, supply, b: _Builder, osint) -> TokenTrace:
    b.events.sort(key=lambda e: e.timestamp)  # stable: same-second scripts keep their order
    return TokenTrace(
        project_id=pid, network=network, token_type=token_type, start_time=start,
        observation_end=end, total_supply=supply, deployer=b.deployer, pool=b.pool,
        onchain_events=b.events, osint_events=osint,
    )


def _legit(rng: random.Random, index: int, config: GeneratorConfig):
    pid, network, token_type, start, supply, b = _setup(rng, index, config)
    life = int(rng.uniform(*config.lifetime_range_days) * DAY)
    end = start + life
    hyped = config.hard_mode and rng.random() < 0.3
    spread = min(3 * DAY, life // 3)
    if hyped:
        plan = _distribution_plan(b, start + 60, spread, rng.uniform(0.4, 0.8), rng.randint(3, 30))
    else:
        plan = _distribution_plan(b, start + 60, spread, rng.uniform(0.05, 0.3), rng.randint(40, 150))
    rate = config.base_tx_rate * rng.uniform(0.5, 1.5)
    trade = rng.uniform(0.002, 0.01)
    pump_from = start + int(life * rng.uniform(0.5, 0.8)) if hyped else None

    def activity(ts):
        pumping = pump_from is not None and ts >= pump_from
        b.random_activity(ts, 0.7 if pumping else 0.5, trade)

    plan += [(ts, activity) for ts in _poisson_times(rng, start + 60, end, rate)]

    def adjust_liquidity(ts):
        if rng.random() < 0.5:
            b.remove_liquidity(ts, b.deployer, Decimal(repr(rng.uniform(0.05, 0.3))))
        else:
            tokens = _q(b.balances[b.deployer] * Decimal(repr(rng.uniform(0.05, 0.2))))
            if tokens > 0:
                b.add_liquidity(ts, b.deployer, tokens, _q(tokens * b.quote_reserve / b.token_reserve))

    # Occasional partial top-ups / withdrawals after distribution; the pool stays funded.
    if end - spread - DAY > start + 60:
        plan += [(rng.randrange(start + spread + DAY, end), adjust_liquidity)
                 for _ in range(rng.randint(0, 2))]
    _run(plan)

    tw, gh = rng.uniform(1, 8), rng.uniform(0.2, 3)

    def rates(day):
        if pump_from is not None and day >= pump_from:
            return tw * config.pump_intensity, gh * config.pump_intensity
        return tw, gh

    osint = _daily_osint(rng, start, end, rates)
    trace = _finish(pid, network, token_type, start, end, supply, b, osint)
    return trace, GroundTruth(pid, ALIVE)


def _rug(rng: random.Random, index: int, config: GeneratorConfig):
    pid, network, token_type, start, supply, b = _setup(rng, index, config)
    life = int(rng.uniform(*config.rug_lifetime_range_days) * DAY)
    disguised = config.hard_mode and rng.random() < 0.5
    if disguised:
        plan = _distribution_plan(b, start + 60, min(3 * DAY, life // 3),
                                  rng.uniform(0.05, 0.3), rng.randint(40, 150))
    else:
        plan = _distribution_plan(b, start + 60, min(DAY, life // 4),
                                  rng.uniform(0.6, 0.9), rng.randint(3, 12))
    t_rug = start + life
    rate = config.base_tx_rate * rng.uniform(0.5, 1.5)
    trade = rng.uniform(0.002, 0.01)
    intensity = 1.0 + (config.pump_intensity - 1.0) * (0.3 if disguised else 1.0)
    pump_from = start + int(life * rng.uniform(0.5, 0.7))

    def rate_at(t):
        if t < pump_from:
            return rate
        return rate * (1 + (intensity - 1) * (t - pump_from) / max(1, t_rug - pump_from))

    def activity(ts):
        b.random_activity(ts, 0.85 if ts >= pump_from and not disguised else 0.55, trade)

    plan += [(ts, activity) for ts in _poisson_times(rng, start + 60, t_rug, rate_at)]
    _run(plan)

    # Rug-pull transaction: the deployer dumps its bag.
    rug_block = b.block_at(t_rug)
    b.sell(t_rug, b.deployer, b.balances[b.deployer] * Decimal(repr(rng.uniform(0.5, 0.95))))
    delay = rng.randint(*config.drain_delay_blocks)
    t_drain = t_rug + delay * b.block_seconds
    b.remove_liquidity(t_drain, b.deployer, Decimal(1))
    drain_block = b.block_at(t_drain)

    # Residual activity: each counterfactual arrival survives with p = 1 - collapse fraction.
    potential = _poisson(rng, rate_at(t_rug) * 24)
    survive = 1.0 - config.tx_collapse_24h_fraction
    residual = sum(rng.random() < survive for _ in range(potential))
    price_onset = t_drain + int(rng.uniform(*config.price_undefined_onset_hours) * HOUR)
    inactive = t_drain + int(rng.uniform(*config.full_inactivity_days) * DAY)
    for ts in sorted(rng.randrange(t_drain + 1, t_drain + DAY) for _ in range(residual)):
        b.random_activity(ts, 0.0, trade, allow_swaps=ts < price_onset)
    if inactive > t_drain + DAY:
        for ts in sorted(rng.randrange(t_drain + DAY, inactive + 1) for _ in range(rng.randint(0, 2))):
            b.random_activity(ts, 0.0, trade, allow_swaps=False)
    end = inactive + int(rng.uniform(*config.post_death_days) * DAY)

    lead = int(rng.uniform(*config.osint_burst_lead_days) * DAY)
    burst_start = max(start + HOUR, t_rug - lead)
    tw, gh = rng.uniform(0.5, 3), rng.uniform(0.1, 1.0)
    boost = config.pump_intensity * (1.0 if disguised else 3.0)

    def rates(day):
        return (tw * boost, gh * boost) if day >= burst_start else (tw, gh)

    osint = _daily_osint(rng, start, burst_start, lambda d: (tw, gh))
    osint += _daily_osint(rng, burst_start, t_rug, rates)
    # Post-collapse chatter (scam warnings); present in the trace, never causal.
    osint += _daily_osint(rng, t_drain + 1, t_drain + 3 * DAY, lambda d: (tw * 2, gh * 2))
    osint.sort(key=lambda e: e.timestamp)

    trace = _finish(pid, network, token_type, start, end, supply, b, osint)
    truth = GroundTruth(
        pid, DEAD, rugpull_time=t_rug, rugpull_block=rug_block, drain_time=t_drain,
        drain_block=drain_block, drain_delay_blocks=delay, potential_24h=potential,
        residual_24h=residual, price_onset=price_onset, inactivity_time=inactive,
        burst_start=burst_start, burst_end=t_rug,
    )
    return trace, truth


def generate_one(config: GeneratorConfig, index: int) -> tuple[TokenTrace, GroundTruth]:
    rng = random.Random(sub_seed(config.seed, index))
    is_rug = rng.random() < config.rug_fraction
    with decimal.localcontext(DECIMAL_CONTEXT):
        return (_rug if is_rug else _legit)(rng, index, config)


def generate(config: GeneratorConfig) -> list[tuple[TokenTrace, GroundTruth]]:
    return [generate_one(config, i) for i in range(config.n_projects)]


@dataclass
class AgreementReport:
    n: int
    confusion: dict  # keys tp/fp/fn/tn with Dead as the positive class
    block_errors: Counter
    unlocated: list[str]
    mislabeled: list[str]

    @property
    def agreement(self) -> float:
        return (self.confusion["tp"] + self.confusion["tn"]) / self.n if self.n else 1.0

    @property
    def max_block_error(self) -> int:
        return max((abs(k) for k in self.block_errors), default=0)


def validate_against_labeler(samples, criteria: DeadTokenCriteria | None = None) -> AgreementReport:
    if not samples:
        raise ValueError("nothing to validate")
    criteria = criteria or DeadTokenCriteria()
    conf = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    errors: Counter = Counter()
    unlocated, mislabeled = [], []
    for trace, truth in samples:
        verdict = classify(trace, criteria)
        truly_dead = truth.label == DEAD
        if verdict.is_dead and truly_dead:
            conf["tp"] += 1
        elif verdict.is_dead:
            conf["fp"] += 1
        elif truly_dead:
            conf["fn"] += 1
        else:
            conf["tn"] += 1
        if verdict.is_dead != truly_dead:
            mislabeled.append(trace.project_id)
        if verdict.is_dead and truly_dead:
            if verdict.rugpull_block is None:
                unlocated.append(trace.project_id)
            else:
                errors[verdict.rugpull_block - truth.rugpull_block] += 1
    return AgreementReport(len(samples), conf, errors, unlocated, mislabeled)
