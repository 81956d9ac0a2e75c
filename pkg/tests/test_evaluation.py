import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinemp.engine import EngineConfig, OnlineMatrixProfile
from onlinemp.evaluation import (
    ConfigError,
    EvalReport,
    adjust_predictions,
    aggregate,
    cache_benchmark,
    delay_for_granularity,
    score,
    segments,
    timed_run,
)

LABELS = [0, 1, 1, 0, 0, 1, 1, 0]
PREDS = [0, 1, 0, 0, 0, 0, 1, 0]

binary = st.lists(st.integers(0, 1), min_size=1, max_size=200)


def pairs():
    return binary.flatmap(lambda lab: st.tuples(st.just(lab), st.lists(st.integers(0, 1), min_size=len(lab), max_size=len(lab))))


def test_worked_example():
    assert adjust_predictions(LABELS, PREDS, 1).tolist() == [0, 1, 1, 0, 0, 0, 0, 0]
    r = score(LABELS, PREDS, 1)
    assert (r.tp, r.fp, r.fn) == (2, 0, 2)
    assert (r.precision, r.recall) == (1.0, 0.5)
    assert r.f1 == 2 / 3


def test_trivial_cases():
    assert adjust_predictions(LABELS, LABELS, 3).tolist() == LABELS
    assert adjust_predictions(LABELS, [0] * 8, 3).tolist() == [0] * 8
    r = score([0] * 5, [0] * 5, 3)
    assert (r.tp, r.fp, r.fn, r.precision, r.recall, r.f1) == (0, 0, 0, 0, 0, 0)
    assert score(LABELS, LABELS, 1).f1 == 1.0


def test_outside_segments_untouched():
    lab = [0, 0, 1, 1, 0, 0]
    pred = [1, 0, 0, 1, 0, 1]
    assert adjust_predictions(lab, pred, 1).tolist() == [1, 0, 0, 0, 0, 1]
    assert adjust_predictions(lab, pred, 2).tolist() == [1, 0, 1, 1, 0, 1]


def test_short_segment_uses_its_length():
    assert adjust_predictions([0, 1, 0, 0], [0, 0, 1, 0], 7).tolist() == [0, 0, 1, 0]


def test_errors():
    with pytest.raises(ValueError):
        adjust_predictions([0, 1], [0], 1)
    with pytest.raises(ValueError):
        adjust_predictions([0, 1], [0, 1], 0)


def test_segments():
    assert segments([1, 1, 0, 1, 0, 0, 1]) == [(0, 2), (3, 4), (6, 7)]
    assert segments([0, 0]) == []


def test_delay_defaults():
    assert delay_for_granularity("minute") == 7
    assert delay_for_granularity("hour") == 3
    assert delay_for_granularity(60) == 7
    assert delay_for_granularity("custom", 5) == 5
    with pytest.raises(ConfigError):
        delay_for_granularity(30)
    with pytest.raises(ConfigError):
        delay_for_granularity("custom")


@settings(max_examples=300)
@given(pairs(), st.integers(1, 10))
def test_idempotent_and_all_or_nothing(lp, q):
    lab, pred = lp
    once = adjust_predictions(lab, pred, q)
    assert np.array_equal(adjust_predictions(lab, once, q), once)
    for a, b in segments(lab):
        assert len(set(once[a:b].tolist())) == 1


@settings(max_examples=300)
@given(pairs())
def test_tp_monotone_in_q(lp):
    lab, pred = lp
    tps = [score(lab, pred, q).tp for q in range(1, 12)]
    assert tps == sorted(tps)


@settings(max_examples=300)
@given(pairs(), st.integers(1, 8))
def test_f1_bounds(lp, q):
    lab, pred = lp
    r = score(lab, pred, q)
    assert 0.0 <= r.f1 <= 1.0
    assert (r.f1 == 1.0) == (r.fp == 0 and r.fn == 0 and r.tp > 0)
    if r.precision + r.recall:
        assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))


def test_aggregate_pools_counts():
    a = score(LABELS, PREDS, 1, wall_time_total=1.0, time_per_timestamp=0.0)
    b = score([0, 1, 0], [1, 1, 0], 1, wall_time_total=0.5, time_per_timestamp=0.0)
    t = aggregate([a, b])
    assert (t.tp, t.fp, t.fn, t.n) == (3, 1, 2, 11)
    assert t.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
    assert t.wall_time_total == 1.5 and t.time_per_timestamp == pytest.approx(1500 / 11)
    with pytest.raises(ValueError):
        aggregate([])
    assert isinstance(EvalReport(**t.to_dict()), EvalReport)


def test_timed_run_and_benchmark_shape():
    x = np.random.default_rng(0).normal(size=500)
    out, total, per_ts = timed_run(OnlineMatrixProfile(EngineConfig.hour()), x)
    assert len(out) == 500 and total > 0 and per_ts == pytest.approx(1000 * total / 500)
    rows = cache_benchmark([600], EngineConfig.hour())
    assert rows[0].length == 600 and rows[0].speedup > 0 and rows[0].cached_steady_ms_per_ts > 0
