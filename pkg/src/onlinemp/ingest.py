"""Series files in and out, gap filling, train/test split and synthetic fixtures."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MINUTE = 60
HOUR = 3600

_TS_KEYS = ("timestamp", "timestamps")
_LABEL_KEYS = ("label", "is_anomaly", "anomaly")
_ID_KEYS = ("KPI ID", "kpi_id", "series_id")


class ParseError(ValueError):
    pass


class FillError(ValueError):
    pass


@dataclass
class LabeledSeries:
    timestamps: np.ndarray
    values: np.ndarray  # NaN marks a missing value
    labels: np.ndarray
    step: int | None = None  # sampling interval in seconds
    filled: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.filled is None:
            self.filled = np.zeros(self.values.size, dtype=bool)
        self.filled = np.asarray(self.filled, dtype=bool)
        n = self.values.size
        if not (self.timestamps.size == self.labels.size == self.filled.size == n):
            raise ValueError("timestamps, values, labels and filled flags differ in length")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return self.values.size

    @property
    def granularity(self) -> str:
        if self.step == MINUTE:
            return "minute"
        if self.step == HOUR:
            return "hour"
        return "custom"

    def slice(self, a: int, b: int | None = None) -> "LabeledSeries":
        s = slice(a, b)
        return LabeledSeries(self.timestamps[s], self.values[s], self.labels[s], self.step, self.filled[s])


def infer_step(timestamps) -> int | None:
    d = np.diff(np.asarray(timestamps, dtype=np.int64))
    d = d[d > 0]
    if d.size == 0:
        return None
    # most common spacing; ties go to the smaller one
    counts = Counter(d.tolist())
    return min(counts, key=lambda s: (-counts[s], s))


def _pick(keys: Iterable[str], candidates) -> str | None:
    for k in candidates:
        if k in keys:
            return k
    return None


def _to_ts(raw, lineno: int) -> int:
    try:
        f = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"line {lineno}: bad timestamp {raw!r}") from None
    if not math.isfinite(f) or f != int(f):
        raise ParseError(f"line {lineno}: timestamp {raw!r} is not an integer")
    return int(f)


def _to_value(raw, lineno: int) -> float | None:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return None
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"line {lineno}: non-numeric value {raw!r}") from None
    if math.isnan(v):
        return None
    if math.isinf(v):
        raise ParseError(f"line {lineno}: infinite value {raw!r}")
    return v


def _to_label(raw, lineno: int) -> int:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return 0
    try:
        f = float(raw)
    except (TypeError, ValueError):
        raise ParseError(f"line {lineno}: bad label {raw!r}") from None
    if f not in (0.0, 1.0):
        raise ParseError(f"line {lineno}: label must be 0 or 1, got {raw!r}")
    return int(f)


def iter_records(lines: Iterable[str], fmt: str) -> Iterator[tuple[int, str | None, int, float | None, int]]:
    """Yield ``(lineno, series_id, timestamp, value_or_None, label)`` in file order."""
    if fmt == "csv":
        it = iter(enumerate(lines, 1))
        header = None
        for lineno, line in it:
            if line.strip():
                header = next(csv.reader([line]))
                header = [h.strip() for h in header]
                break
        if header is None:
            return
        ts_key = _pick(header, _TS_KEYS)
        if ts_key is None or "value" not in header:
            raise ParseError(f"line {lineno}: header needs 'timestamp' and 'value' columns, got {header}")
        cols = {h: i for i, h in enumerate(header)}
        ti, vi = cols[ts_key], cols["value"]
        li = cols.get(_pick(header, _LABEL_KEYS))
        ii = cols.get(_pick(header, _ID_KEYS))
        for lineno, line in it:
            if not line.strip():
                continue
            row = next(csv.reader([line]))
            if len(row) != len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            yield (
                lineno,
                row[ii] if ii is not None else None,
                _to_ts(row[ti], lineno),
                _to_value(row[vi], lineno),
                _to_label(row[li], lineno) if li is not None else 0,
            )
    elif fmt == "ndjson":
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(f"line {lineno}: expected a JSON object")
            ts_key = _pick(obj, _TS_KEYS)
            if ts_key is None or "value" not in obj:
                raise ParseError(f"line {lineno}: record needs 'timestamp' and 'value'")
            lk = _pick(obj, _LABEL_KEYS)
            ik = _pick(obj, _ID_KEYS)
            yield (
                lineno,
                str(obj[ik]) if ik else None,
                _to_ts(obj[ts_key], lineno),
                _to_value(obj["value"], lineno),
                _to_label(obj[lk], lineno) if lk else 0,
            )
    else:
        raise ValueError(f"unknown format {fmt!r}")


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".ndjson", ".jsonl", ".json"):
        return "ndjson"
    return "csv"


def _assemble(records, step: int | None) -> LabeledSeries:
    latest: dict[int, tuple[float | None, int]] = {}
    for _, _, ts, v, lab in records:
        latest[ts] = (v, lab)  # last write wins
    ts = np.array(sorted(latest), dtype=np.int64)
    vals = np.array([np.nan if latest[k][0] is None else latest[k][0] for k in ts.tolist()], dtype=float)
    labs = np.array([latest[k][1] for k in ts.tolist()], dtype=np.int8)
    return LabeledSeries(ts, vals, labs, step if step is not None else infer_step(ts))


def parse_grouped(path, fmt: str | None = None, step: int | None = None) -> dict[str | None, LabeledSeries]:
    """Parse a file that may interleave several series (e.g. a ``KPI ID`` column)."""
    fmt = fmt or guess_format(path)
    groups: dict[str | None, list] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in iter_records(fh, fmt):
            groups.setdefault(rec[1], []).append(rec)
    if not groups:
        raise ParseError(f"{path}: no records")
    return {k: _assemble(v, step) for k, v in groups.items()}


def parse(path, fmt: str | None = None, step: int | None = None) -> LabeledSeries:
    """Read one series: sorted by timestamp, duplicates resolved last-write-wins, labels default 0."""
    groups = parse_grouped(path, fmt, step)
    if len(groups) > 1:
        raise ParseError(f"{path}: holds {len(groups)} series; use parse_grouped")
    return next(iter(groups.values()))


def serialize(series: LabeledSeries, path, fmt: str | None = None) -> None:
    fmt = fmt or guess_format(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps(series, fmt))


def dumps(series: LabeledSeries, fmt: str = "csv") -> str:
    buf = io.StringIO()
    rows = zip(series.timestamps.tolist(), series.values.tolist(), series.labels.tolist())
    if fmt == "csv":
        buf.write("timestamp,value,label\n")
        for ts, v, lab in rows:
            buf.write(f"{ts},{'' if math.isnan(v) else repr(v)},{lab}\n")
    elif fmt == "ndjson":
        for ts, v, lab in rows:
            buf.write(json.dumps({"timestamp": ts, "value": None if math.isnan(v) else v, "label": lab}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


class GapFiller:
    """Fills missing timestamps of an ordered stream of observations.

    Gaps shorter than ``period`` slots are interpolated linearly between the
    neighbouring observations; longer gaps copy the same slot from one period
    earlier.  Values before the first observation are dropped.  A trailing
    run of missing values is copied from one period earlier, or held at the
    last value when less than a period of history exists.
    """

    def __init__(self, step: int, period: int):
        if step <= 0 or period <= 0:
            raise ValueError("step and period must be positive")
        self.step = step
        self.period = period
        self._hist: deque[float] = deque(maxlen=period)
        self._last_ts: int | None = None
        self._last_val: float | None = None
        self._pending_end: int | None = None

    def push(self, ts: int, value: float | None, label: int = 0) -> list[tuple[int, float, int, bool]]:
        """Feed one record; returns the points that became final, in order."""
        if self._last_ts is not None and ts <= max(self._last_ts, self._pending_end or self._last_ts):
            raise FillError(f"timestamp {ts} is not after the previous one")
        if value is None:
            if self._last_ts is not None:
                self._pending_end = ts
            return []
        out: list[tuple[int, float, int, bool]] = []
        if self._last_ts is not None:
            span = ts - self._last_ts
            if span % self.step:
                raise FillError(f"timestamp {ts} is off the {self.step}s grid")
            missing = span // self.step - 1
            if missing:
                out.extend(self._fill_gap(missing, value))
        self._pending_end = None
        self._emit(out, ts, value, label, False)
        return out

    def finish(self) -> list[tuple[int, float, int, bool]]:
        out: list[tuple[int, float, int, bool]] = []
        if self._pending_end is not None:
            span = self._pending_end - self._last_ts
            if span % self.step:
                raise FillError(f"timestamp {self._pending_end} is off the {self.step}s grid")
            for _ in range(span // self.step):
                if len(self._hist) == self.period:
                    v = self._hist[0]
                else:
                    v = self._last_val
                self._emit(out, self._last_ts + self.step, v, 0, True)
            self._pending_end = None
        return out

    def _fill_gap(self, missing: int, right: float):
        out: list[tuple[int, float, int, bool]] = []
        if missing < self.period:
            left = self._last_val
            for i in range(1, missing + 1):
                frac = i / (missing + 1)
                self._emit(out, self._last_ts + self.step, left + (right - left) * frac, 0, True)
        else:
            if len(self._hist) < self.period:
                raise FillError(
                    f"gap of {missing} points after timestamp {self._last_ts} exceeds the available history "
                    f"({len(self._hist)} < period {self.period})"
                )
            for _ in range(missing):
                self._emit(out, self._last_ts + self.step, self._hist[0], 0, True)
        return out

    def _emit(self, out, ts, v, label, filled):
        out.append((ts, v, label, filled))
        self._hist.append(v)
        self._last_ts = ts
        self._last_val = v


def default_period(step: int | None) -> int | None:
    """One day of samples for minute- and hour-level series."""
    if step in (MINUTE, HOUR):
        return 86400 // step
    return None


def fill_missing(series: LabeledSeries, period: int | None = None) -> LabeledSeries:
    step = series.step or infer_step(series.timestamps)
    if step is None:
        return series
    period = period or default_period(step)
    if period is None:
        raise FillError(f"no default period for a {step}s step; pass one explicitly")
    filler = GapFiller(step, period)
    pts = []
    for ts, v, lab in zip(series.timestamps.tolist(), series.values.tolist(), series.labels.tolist()):
        pts.extend(filler.push(ts, None if math.isnan(v) else v, lab))
    pts.extend(filler.finish())
    if not pts:
        raise FillError("series has no observed values")
    ts, vals, labs, filled = zip(*pts)
    return LabeledSeries(np.array(ts), np.array(vals), np.array(labs), step, np.array(filled))


def split(series: LabeledSeries, protocol: str = "half") -> tuple[LabeledSeries, LabeledSeries]:
    """``half``: first floor(n/2) points train, rest test.  ``none``: everything is test."""
    if protocol == "half":
        h = len(series) // 2
        return series.slice(0, h), series.slice(h)
    if protocol == "none":
        return series.slice(0, 0), series
    raise ValueError(f"unknown split protocol {protocol!r}")


# -- synthetic data -------------------------------------------------------------


@dataclass(frozen=True)
class Anomaly:
    position: int
    magnitude: float
    duration: int = 1
    shape: tuple[float, ...] | None = None  # per-point multipliers of magnitude


@dataclass(frozen=True)
class SynthSpec:
    length: int = 1200
    period: int = 24  # 0 gives a smooth non-periodic base
    amplitude: tuple[tuple[int, float], ...] = ((0, 1.0),)  # knots, linearly interpolated
    noise: float = 0.05
    anomalies: tuple[Anomaly, ...] = ()
    seed: int = 0
    offset: float = 0.0
    start: int = 0
    step: int = HOUR
    smooth: int = 12  # moving-average width of the non-periodic base

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["amplitude"] = [list(k) for k in self.amplitude]
        d["anomalies"] = [
            {"position": a.position, "magnitude": a.magnitude, "duration": a.duration,
             "shape": list(a.shape) if a.shape else None}
            for a in self.anomalies
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "amplitude" in d:
            d["amplitude"] = tuple(tuple(k) for k in d["amplitude"])
        if "anomalies" in d:
            d["anomalies"] = tuple(
                Anomaly(a["position"], a["magnitude"], a.get("duration", 1),
                        tuple(a["shape"]) if a.get("shape") else None)
                for a in d["anomalies"]
            )
        return cls(**d)


def synthesize(spec: SynthSpec) -> LabeledSeries:
    n = spec.length
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n)
    knots = np.array(spec.amplitude, dtype=float).reshape(-1, 2)
    amp = np.interp(t, knots[:, 0], knots[:, 1])
    if spec.period > 0:
        base = np.sin(2 * np.pi * t / spec.period)
    else:
        walk = np.cumsum(rng.normal(size=n + spec.smooth))
        base = np.convolve(walk, np.ones(spec.smooth) / spec.smooth, mode="valid")[:n]
        base = (base - base.mean()) / (base.std() or 1.0)
    values = spec.offset + amp * base
    if spec.noise > 0:
        values = values + rng.normal(0.0, spec.noise, n)
    labels = np.zeros(n, dtype=np.int8)
    for a in spec.anomalies:
        shape = np.asarray(a.shape if a.shape else (1.0,) * a.duration, dtype=float)
        if a.position < 0 or a.position + shape.size > n:
            raise ValueError(f"anomaly at {a.position} (length {shape.size}) falls outside the series")
        values[a.position:a.position + shape.size] += a.magnitude * shape
        labels[a.position:a.position + shape.size] = 1
    ts = spec.start + spec.step * t
    return LabeledSeries(ts, values, labels, spec.step)


def _spaced_positions(rng, lo: int, hi: int, count: int, gap: int) -> list[int]:
    """``count`` sorted positions in [lo, hi) at least ``gap`` apart."""
    slack = (hi - lo) - gap * (count - 1)
    if slack <= 0:
        raise ValueError("not enough room for the requested anomalies")
    offsets = np.sort(rng.integers(0, slack, size=count))
    return [int(lo + o + i * gap) for i, o in enumerate(offsets)]


@dataclass(frozen=True)
class SuiteCase:
    kind: str
    spec: SynthSpec
    notes: dict = field(default_factory=dict)


SUITE_KINDS = ("periodic", "amplitude", "nonperiodic", "repeated")
SUITE_MIN_LENGTH = 900  # room for the warm-up plus spaced anomalies of every kind


def suite_case(kind: str, seed: int, length: int = 1200) -> SuiteCase:
    """One hour-level benchmark series of the given kind, fully determined by ``seed``."""
    if kind not in SUITE_KINDS:
        raise ValueError(f"unknown suite kind {kind!r}")
    if length < SUITE_MIN_LENGTH:
        raise ValueError(f"suite series need length >= {SUITE_MIN_LENGTH}, got {length}")
    rng = np.random.default_rng([seed, SUITE_KINDS.index(kind)])
    period = 24
    first = 200  # past the hour-profile warm-up
    noise = float(rng.uniform(0.03, 0.08))
    sign = lambda: float(rng.choice((-1.0, 1.0)))  # noqa: E731
    if kind == "periodic":
        pos = _spaced_positions(rng, first, length - 10, 4, 100)
        anomalies = tuple(Anomaly(p, sign() * 12 * noise) for p in pos)
        spec = SynthSpec(length, period, ((0, 1.0),), noise, anomalies, seed)
        return SuiteCase(kind, spec)
    if kind == "amplitude":
        # small amplitude first, ramp, large amplitude after; spikes sit in the small part
        small, large = 0.2, float(rng.uniform(2.0, 4.0))
        ramp_at = length // 2
        pos = _spaced_positions(rng, first, ramp_at - 60, 3, 80)
        anomalies = tuple(Anomaly(p, sign() * 12 * noise) for p in pos)
        amp = ((0, small), (ramp_at, small), (ramp_at + 4 * period, large))
        spec = SynthSpec(length, period, amp, noise, anomalies, seed)
        return SuiteCase(kind, spec)
    if kind == "nonperiodic":
        pos = _spaced_positions(rng, first, length - 10, 4, 100)
        anomalies = tuple(Anomaly(p, sign() * 12 * noise) for p in pos)
        spec = SynthSpec(length, 0, ((0, 0.5),), noise, anomalies, seed, smooth=48)
        return SuiteCase(kind, spec)
    if kind == "repeated":
        shape = (1.0, 0.6, 0.3)
        mag = sign() * 15 * noise
        p1 = int(rng.integers(first, length - 400))
        p2 = p1 + 4 * period
        anomalies = (Anomaly(p1, mag, 3, shape), Anomaly(p2, mag, 3, shape))
        spec = SynthSpec(length, period, ((0, 1.0),), noise, anomalies, seed)
        return SuiteCase(kind, spec, {"first": p1, "second": p2})
    raise ValueError(f"unknown suite kind {kind!r}")


def benchmark_suite(n_series: int = 50, length: int = 1200, base_seed: int = 0) -> list[SuiteCase]:
    """Round-robin over the four kinds so every kind gets n/4 series."""
    return [suite_case(SUITE_KINDS[i % 4], base_seed + i, length) for i in range(n_series)]
