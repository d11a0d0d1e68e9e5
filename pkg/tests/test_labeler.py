import random
from decimal import Decimal

import pytest

from conftest import D, T0, ev, ladd, lrem, make_trace, swap, tweet, xfer
from rugguard.errors import ConfigError
from rugguard.labeler import (
    ALIVE,
    DEAD,
    DeadTokenCriteria,
    LabelRecord,
    classify,
    evaluate_conditions,
    locate_rugpull,
    read_labels_csv,
    write_labels_csv,
)
from rugguard.model import HOUR, LiquidityRemove, Swap, Transfer


# --- independent oracles ------------------------------------------------------

def oracle_timeline(trace, crit):
    """O(events x windows) recount, one window at a time from scratch."""
    width = crit.window_hours * HOUR
    n = (trace.observation_end - trace.start_time) // width
    out = []
    for k in range(n):
        lo = trace.start_time + k * width
        hi = lo + width
        quote = Decimal(0)
        for e in trace.onchain_events:
            if e.timestamp >= hi:
                continue
            k_ = e.kind
            name = type(k_).__name__
            if name in ("LiquidityAdd",):
                quote += k_.quote_amount
            elif name == "LiquidityRemove":
                quote -= k_.quote_amount
            elif name == "Swap":
                quote += k_.quote_amount if k_.direction == "buy" else -k_.quote_amount
        inside = [e for e in trace.onchain_events if lo <= e.timestamp < hi]
        tx = sum(isinstance(e.kind, (Transfer, Swap)) for e in inside)
        swapped = any(isinstance(e.kind, Swap) for e in inside)
        out.append((quote <= crit.liquidity_epsilon, tx <= crit.activity_epsilon, not swapped))
    return out


def oracle_dead_onset(flags, crit):
    """Brute-force: try every start index and measure its all-true run."""
    for i in range(len(flags)):
        j = i
        while j < len(flags) and all(flags[j]):
            j += 1
        if (j - i) * crit.window_hours > crit.persistence_hours:
            return i
    return None


def random_trace(rng, hours=None):
    """Pool-consistent random trace with optional drains and long quiet gaps."""
    hours = hours or rng.randint(100, 260)
    tok = quote = Decimal(0)
    t = 0.0
    block = 0
    events = []
    while True:
        t += rng.choice([rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(40, 110)])
        if t >= hours:
            break
        block += rng.randint(0, 3)
        r = rng.random()
        if r < 0.2 or quote == 0:
            a, q = D(rng.randint(1, 1000)), D(rng.randint(1, 100))
            events.append(ladd(t, block, a, q))
            tok, quote = tok + a, quote + q
        elif r < 0.35:
            full = rng.random() < 0.6
            a = tok if full else (tok * D(rng.random())).quantize(D("1e-6"))
            q = quote if full else (quote * D(rng.random())).quantize(D("1e-6"))
            events.append(lrem(t, block, a, q))
            tok, quote = tok - a, quote - q
        elif r < 0.75:
            if rng.random() < 0.5:
                a = (tok * D(rng.uniform(0, 0.3))).quantize(D("1e-6"))
                q = D(rng.randint(0, 10))
                events.append(swap(t, block, "buy", a, q, "0.5"))
                tok, quote = tok - a, quote + q
            else:
                a = D(rng.randint(0, 10))
                q = (quote * D(rng.uniform(0, 0.3))).quantize(D("1e-6"))
                events.append(swap(t, block, "sell", a, q, "0.5"))
                tok, quote = tok + a, quote - q
        else:
            events.append(xfer(t, block, "0xdeployer", "0xa", 0))
    return make_trace(events, hours=hours)


RANDOM_TRACES = [random_trace(random.Random(i)) for i in range(500)]


def test_timeline_matches_brute_force_on_random_traces():
    crits = [DeadTokenCriteria(), DeadTokenCriteria(liquidity_epsilon=D(5), activity_epsilon=1),
             DeadTokenCriteria(window_hours=3, persistence_hours=24)]
    for i, trace in enumerate(RANDOM_TRACES):
        crit = crits[i % len(crits)]
        got = [(w.liquidity_drained, w.tx_collapsed, w.price_undefined)
               for w in evaluate_conditions(trace, crit)]
        assert got == oracle_timeline(trace, crit), trace.project_id


def test_classify_matches_run_length_scan():
    crit = DeadTokenCriteria(persistence_hours=48)
    dead = 0
    for trace in RANDOM_TRACES:
        flags = oracle_timeline(trace, crit)
        k = oracle_dead_onset(flags, crit)
        v = classify(trace, crit)
        assert v.is_dead == (k is not None)
        if k is not None:
            dead += 1
            assert v.death_onset == trace.start_time + k * HOUR
            if v.rugpull_time is not None:
                assert v.rugpull_time <= v.death_onset
    assert 0 < dead < len(RANDOM_TRACES)


def test_monotone_in_persistence_and_epsilons():
    base = DeadTokenCriteria(persistence_hours=24)
    for trace in RANDOM_TRACES[:150]:
        labels = [classify(trace, DeadTokenCriteria(persistence_hours=p)).is_dead
                  for p in (12, 24, 48, 72, 96)]
        assert labels == sorted(labels, reverse=True)  # Dead never reappears as p grows
        if classify(trace, base).is_dead:
            for crit in (DeadTokenCriteria(persistence_hours=24, liquidity_epsilon=D(3)),
                         DeadTokenCriteria(persistence_hours=24, activity_epsilon=2)):
                assert classify(trace, crit).is_dead


# --- constructed boundary traces ------------------------------------------------

def quiet_run_trace(run_hours, hours=400):
    """Hourly trading to hour 10, drain at 10.5h, silence for ``run_hours``, then recovery."""
    events = [ladd(0, 1, 1000, 100)]
    events += [swap(h, 2 + h, "buy", 1, 0.1, 0.1) for h in range(1, 11)]
    events.append(lrem(10.5, 20, 990, "101"))
    back = 11 + run_hours
    events.append(ladd(back, 30, 1000, 100))
    events += [swap(h, 31 + h, "buy", 1, 0.1, 0.1) for h in range(back, hours)]
    return make_trace(events, hours=hours)


@pytest.mark.parametrize("run,label", [(48, ALIVE), (71, ALIVE), (72, ALIVE), (73, DEAD), (96, DEAD)])
def test_persistence_boundary(run, label):
    v = classify(quiet_run_trace(run))
    assert v.label == label
    if label == DEAD:
        assert v.death_onset == T0 + 11 * HOUR
        assert (v.rugpull_time, v.rugpull_block) == (T0 + int(10.5 * HOUR), 20)


def test_greater_or_equal_reading_is_one_config_change():
    assert classify(quiet_run_trace(72), DeadTokenCriteria(persistence_hours=71)).is_dead


def test_quiet_run_conditions_are_all_true():
    tl = evaluate_conditions(quiet_run_trace(96), DeadTokenCriteria())
    assert not tl[10].all_true
    assert all(w.all_true for w in tl[11:11 + 96])
    assert not tl[11 + 96].all_true


def test_active_pool_has_all_false_timeline():
    events = [ladd(0, 1, 1000, 100)] + [swap(h + 0.5, 2 + h, "buy", 1, 0.1, 0.1) for h in range(100)]
    tl = evaluate_conditions(make_trace(events, hours=100), DeadTokenCriteria())
    assert len(tl) == 100
    assert not any(w.liquidity_drained or w.tx_collapsed or w.price_undefined for w in tl)


def test_drained_and_silent_is_all_true_afterwards():
    events = [ladd(0, 1, 1000, 100), swap(1, 2, "buy", 1, 0.1, 0.1), lrem(2, 3, 999, "100.1")]
    tl = evaluate_conditions(make_trace(events, hours=100), DeadTokenCriteria())
    assert all(w.all_true for w in tl[2:])


def test_only_complete_windows_are_scored():
    t = make_trace(hours=1)
    t = t.__class__(**{**t.__dict__, "observation_end": T0 + HOUR + 1799})
    assert len(evaluate_conditions(t, DeadTokenCriteria())) == 1


def test_transient_single_condition_is_not_death():
    # Swaps stop for a week but liquidity stays: price undefined only.
    events = [ladd(0, 1, 1000, 100), swap(1, 2, "buy", 1, 0.1, 0.1), swap(200, 3, "buy", 1, 0.1, 0.1)]
    v = classify(make_trace(events, hours=240))
    assert v.label == ALIVE


def test_abandonment_has_no_rugpull():
    v = classify(make_trace(hours=200))
    assert v.is_dead and v.rugpull_time is None and v.death_onset == T0


def test_two_partial_removals_second_empties():
    events = [ladd(0, 1, 100, 10), lrem(1, 2, 50, 5), lrem(2, 3, 50, 5)]
    t = make_trace(events, hours=200)
    v = classify(t)
    assert (v.rugpull_time, v.rugpull_block) == (T0 + 2 * HOUR, 3)


def test_largest_emptying_removal_wins_and_ties_keep_earliest():
    events = [ladd(0, 1, 100, 10), lrem(1, 2, 100, 10),   # empties, 10
              ladd(2, 3, 100, 30), lrem(3, 4, 100, 30),   # empties, 30
              ladd(4, 5, 100, 30), lrem(5, 6, 100, 30)]   # empties, 30 (tie)
    assert locate_rugpull(make_trace(events, hours=200), T0 + 6 * HOUR, DeadTokenCriteria()) \
        == (T0 + 3 * HOUR, 4)


def test_removal_outside_lookback_is_ignored():
    events = [ladd(0, 1, 100, 10), lrem(1, 2, 100, 10)]
    t = make_trace(events, hours=300)
    crit = DeadTokenCriteria(rugpull_lookback_hours=48)
    assert locate_rugpull(t, T0 + 100 * HOUR, crit) is None
    assert locate_rugpull(t, T0 + 49 * HOUR, crit) == (T0 + HOUR, 2)


def test_locate_matches_argmax_oracle_on_random_traces():
    crit = DeadTokenCriteria(liquidity_epsilon=D(1))
    checked = 0
    for trace in RANDOM_TRACES:
        onset = trace.start_time + (trace.observation_end - trace.start_time) // 2
        lo = onset - crit.rugpull_lookback_hours * HOUR
        quote = Decimal(0)
        best = None
        for e in trace.onchain_events:
            if e.timestamp > onset:
                break
            k = e.kind
            name = type(k).__name__
            if name == "LiquidityAdd":
                quote += k.quote_amount
            elif name == "LiquidityRemove":
                quote -= k.quote_amount
            elif name == "Swap":
                quote += k.quote_amount if k.direction == "buy" else -k.quote_amount
            if isinstance(k, LiquidityRemove) and e.timestamp >= lo and quote <= crit.liquidity_epsilon:
                if best is None or k.quote_amount > best.kind.quote_amount:
                    best = e
        want = None if best is None else (best.timestamp, best.block)
        assert locate_rugpull(trace, onset, crit) == want
        checked += want is not None
    assert checked > 50


# --- criteria and label files ----------------------------------------------------

def test_criteria_validation():
    with pytest.raises(ConfigError):
        DeadTokenCriteria(persistence_hours=1, window_hours=2)
    with pytest.raises(ConfigError):
        DeadTokenCriteria(liquidity_epsilon=D(-1))
    with pytest.raises(ConfigError):
        DeadTokenCriteria.from_mapping({"persistance_hours": "72"})
    c = DeadTokenCriteria.from_mapping({"persistence_hours": "96", "liquidity_epsilon": '"0.5"'})
    assert c.persistence_hours == 96 and c.liquidity_epsilon == D("0.5")
    assert c.digest() != DeadTokenCriteria().digest()


def test_labels_csv_round_trip():
    recs = [LabelRecord("b", DEAD, T0 + 5, 17, T0 + 3600), LabelRecord("a", ALIVE),
            LabelRecord("c", DEAD, None, None, T0)]
    text = write_labels_csv(recs)
    assert text.splitlines()[0] == "project_id,label,rugpull_time,rugpull_block,death_onset"
    assert read_labels_csv(text) == {r.project_id: r for r in recs}


def test_non_transaction_events_do_not_count_as_activity():
    # LP and OSINT events alone do not revive a drained pool.
    events = [ladd(0, 1, 10, 1), lrem(1, 2, 10, 1), ladd(50, 3, 0, 0), lrem(51, 4, 0, 0)]
    v = classify(make_trace(events, osint=[tweet(60, 100)], hours=200))
    assert v.is_dead and v.death_onset == T0 + HOUR
