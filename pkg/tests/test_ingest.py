import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinemp.ingest import (
    HOUR,
    MINUTE,
    SUITE_KINDS,
    Anomaly,
    FillError,
    GapFiller,
    LabeledSeries,
    ParseError,
    SynthSpec,
    benchmark_suite,
    dumps,
    fill_missing,
    infer_step,
    parse,
    parse_grouped,
    serialize,
    split,
    suite_case,
    synthesize,
)


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_three_rows(tmp_path):
    s = parse(write(tmp_path, "timestamp,value,label\n0,1.5,0\n60,2.5,1\n120,3,0\n"))
    assert s.timestamps.tolist() == [0, 60, 120]
    assert s.values.tolist() == [1.5, 2.5, 3.0]
    assert s.labels.tolist() == [0, 1, 0]
    assert s.step == MINUTE and s.granularity == "minute"


def test_parse_sorts_dedupes_and_defaults_labels(tmp_path):
    s = parse(write(tmp_path, "timestamp,value\n7200,3\n0,1\n3600,2\n0,9\n"))
    assert s.timestamps.tolist() == [0, 3600, 7200]
    assert s.values.tolist() == [9.0, 2.0, 3.0]
    assert s.labels.tolist() == [0, 0, 0]
    assert s.granularity == "hour"


def test_parse_aliases_and_ndjson(tmp_path):
    s = parse(write(tmp_path, "timestamps,value,is_anomaly\n0,1,1\n60,,0\n"))
    assert s.labels.tolist() == [1, 0] and math.isnan(s.values[1])
    n = parse(write(tmp_path, '{"timestamp": 0, "value": 1}\n\n{"timestamp": 60, "value": null, "label": 1}\n', "s.ndjson"))
    assert n.labels.tolist() == [0, 1] and math.isnan(n.values[1])


@pytest.mark.parametrize(
    "text,line",
    [
        ("timestamp,value\n0,1\n60,abc\n", 3),
        ("timestamp,value\n0,1\n1.5,2\n", 3),
        ("timestamp,value\n0,1,1\n", 2),
        ("timestamp,value,label\n0,1,2\n", 2),
        ("time,value\n0,1\n", 1),
    ],
)
def test_parse_errors_name_the_line(tmp_path, text, line):
    with pytest.raises(ParseError, match=f"line {line}"):
        parse(write(tmp_path, text))


def test_parse_empty_and_bad_json(tmp_path):
    with pytest.raises(ParseError):
        parse(write(tmp_path, ""))
    with pytest.raises(ParseError):
        parse(write(tmp_path, "timestamp,value\n"))
    with pytest.raises(ParseError, match="line 2"):
        parse(write(tmp_path, '{"timestamp": 0, "value": 1}\n{oops\n', "s.ndjson"))


def test_grouped_kpi_file(tmp_path):
    p = write(tmp_path, "timestamp,value,label,KPI ID\n0,1,0,a\n0,5,0,b\n60,2,1,a\n60,6,0,b\n")
    g = parse_grouped(p)
    assert sorted(g) == ["a", "b"]
    assert g["a"].values.tolist() == [1.0, 2.0] and g["a"].labels.tolist() == [0, 1]
    with pytest.raises(ParseError):
        parse(p)


@pytest.mark.parametrize("fmt", ["csv", "ndjson"])
def test_roundtrip(tmp_path, fmt):
    s = synthesize(SynthSpec(length=300, anomalies=(Anomaly(100, 2.0),), seed=3))
    s.values[[5, 6]] = np.nan
    p = tmp_path / f"x.{fmt}"
    serialize(s, p)
    back = parse(p)
    assert np.array_equal(back.timestamps, s.timestamps)
    assert np.array_equal(back.values, s.values, equal_nan=True)
    assert np.array_equal(back.labels, s.labels)
    assert dumps(back, fmt) == dumps(s, fmt)


def series(ts, vals, step=HOUR):
    return LabeledSeries(ts, vals, [0] * len(ts), step)


def test_single_missing_point_is_midpoint():
    f = fill_missing(series([0, 3600, 7200], [2.0, np.nan, 4.0]), period=24)
    assert f.values.tolist() == [2.0, 3.0, 4.0]
    assert f.filled.tolist() == [False, True, False]


def test_missing_timestamp_is_inserted():
    f = fill_missing(series([0, 3600, 10800], [2.0, 4.0, 10.0]), period=24)
    assert f.timestamps.tolist() == [0, 3600, 7200, 10800]
    assert f.values.tolist() == [2.0, 4.0, 7.0, 10.0]


def test_full_period_gap_copies_previous_period():
    period = 24
    base = np.tile(np.sin(2 * np.pi * np.arange(period) / period) * 3 + 1, 5)
    vals = base.copy()
    vals[2 * period + 3:3 * period + 3] = np.nan
    f = fill_missing(series(np.arange(vals.size) * HOUR, vals), period=period)
    assert np.array_equal(f.values, base)


def test_long_gap_without_history_fails():
    with pytest.raises(FillError):
        fill_missing(series([0, 100 * HOUR], [1.0, 2.0]), period=24)


def test_trailing_and_leading_missing():
    f = fill_missing(series([0, 3600, 7200, 10800], [np.nan, 1.0, 2.0, np.nan]), period=24)
    assert f.timestamps.tolist() == [3600, 7200, 10800]
    assert f.values.tolist() == [1.0, 2.0, 2.0]


def test_custom_step_needs_period():
    with pytest.raises(FillError):
        fill_missing(series([0, 30, 90], [1.0, 2.0, 3.0], step=30))
    assert fill_missing(series([0, 30, 90], [1.0, 2.0, 3.0], step=30), period=10).values.tolist() == [1, 2, 2.5, 3]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.4))
def test_fill_random_gaps(seed, frac):
    rng = np.random.default_rng(seed)
    n, period = 300, 24
    vals = rng.normal(size=n)
    ts = np.arange(n) * HOUR
    drop = rng.random(n) < frac
    drop[:period + 1] = False  # a full period of history before any gap
    keep_ts = ts[~drop | (rng.random(n) < 0.5)]  # some gaps as NaN rows, some as absent rows
    v = np.where(drop, np.nan, vals)[np.isin(ts, keep_ts)]
    f = fill_missing(series(keep_ts, v), period=period)
    assert np.array_equal(np.diff(f.timestamps), np.full(f.timestamps.size - 1, HOUR))
    assert np.all(np.isfinite(f.values))
    observed = ~drop
    last = np.flatnonzero(observed).max()
    assert f.timestamps[-1] >= ts[last]
    assert np.array_equal(f.values[:last + 1][observed[:last + 1]], vals[observed][: observed[:last + 1].sum()])
    assert np.array_equal(f.filled[:last + 1], drop[:last + 1])


def test_gap_filler_rejects_disorder_and_off_grid():
    g = GapFiller(60, 10)
    g.push(0, 1.0)
    with pytest.raises(FillError):
        g.push(0, 2.0)
    with pytest.raises(FillError):
        g.push(90, 2.0)


def test_split():
    s = synthesize(SynthSpec(length=11))
    train, test = split(s, "half")
    assert len(train) == 5 and len(test) == 6
    train, test = split(s, "none")
    assert len(train) == 0 and len(test) == 11
    with pytest.raises(ValueError):
        split(s, "thirds")


def test_infer_step():
    assert infer_step([0, 60, 120, 300, 360]) == 60
    assert infer_step([5]) is None


def test_synth_zero_noise_sine_is_periodic():
    s = synthesize(SynthSpec(length=480, period=24, noise=0.0))
    assert not s.labels.any()
    assert np.allclose(s.values[24:], s.values[:-24], atol=1e-12)


def test_synth_one_spike():
    s = synthesize(SynthSpec(length=200, anomalies=(Anomaly(120, 10.0),)))
    assert s.labels.sum() == 1 and s.labels[120] == 1


def test_synth_is_deterministic_and_spec_roundtrips():
    spec = suite_case("repeated", 4).spec
    a, b = synthesize(spec), synthesize(SynthSpec.from_dict(spec.to_dict()))
    assert np.array_equal(a.values, b.values) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.values, synthesize(suite_case("repeated", 5).spec).values)


def test_synth_rejects_out_of_range_anomaly():
    with pytest.raises(ValueError):
        synthesize(SynthSpec(length=50, anomalies=(Anomaly(49, 1.0, 3),)))


def test_suite_layout():
    suite = benchmark_suite()
    assert len(suite) == 50
    assert [c.kind for c in suite[:4]] == list(SUITE_KINDS)
    rep = suite_case("repeated", 0)
    first, second = rep.notes["first"], rep.notes["second"]
    s = synthesize(rep.spec)
    d = s.values[second:second + 3] - s.values[first:first + 3]
    assert s.labels[first:first + 3].all() and s.labels[second:second + 3].all()
    assert np.abs(d).max() < 0.5  # the second anomaly replicates the first
    amp = synthesize(suite_case("amplitude", 1).spec)
    spikes = np.flatnonzero(amp.labels)
    assert spikes.max() < len(amp) // 2
    with pytest.raises(ValueError):
        suite_case("chaotic", 0)
    with pytest.raises(ValueError, match="length"):
        suite_case("periodic", 0, length=500)
