"""Delay-adjusted precision / recall / F1 and detection timing."""

from __future__ import annotations

import gc
import time
from dataclasses import asdict, dataclass

import numpy as np

from .ingest import HOUR, MINUTE

DELAYS = {"minute": 7, "hour": 3}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    q: int
    raw_tp: int = 0
    raw_fp: int = 0
    raw_fn: int = 0
    n: int = 0
    wall_time_total: float | None = None
    time_per_timestamp: float | None = None  # milliseconds

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(labels, preds):
    labels = np.asarray(labels).astype(np.int8)
    preds = np.asarray(preds).astype(np.int8)
    if labels.shape != preds.shape or labels.ndim != 1:
        raise ValueError(f"labels and predictions differ in shape: {labels.shape} vs {preds.shape}")
    return labels, preds


def segments(labels) -> list[tuple[int, int]]:
    """Maximal runs of 1 as half-open ``(start, end)`` pairs."""
    lab = np.asarray(labels).astype(np.int8)
    edges = np.diff(np.concatenate(([0], lab, [0])))
    return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def adjust_predictions(labels, preds, q: int) -> np.ndarray:
    """Credit a whole anomaly segment iff it is hit within its first ``q`` points, else clear it."""
    if q < 1:
        raise ValueError("delay q must be >= 1")
    labels, preds = _pair(labels, preds)
    out = preds.copy()
    for a, b in segments(labels):
        out[a:b] = 1 if preds[a:min(b, a + q)].any() else 0
    return out


def _counts(labels, preds):
    tp = int(np.sum((labels == 1) & (preds == 1)))
    fp = int(np.sum((labels == 0) & (preds == 1)))
    fn = int(np.sum((labels == 1) & (preds == 0)))
    return tp, fp, fn


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score(labels, preds, q: int, **timing) -> EvalReport:
    labels, preds = _pair(labels, preds)
    adjusted = adjust_predictions(labels, preds, q)
    tp, fp, fn = _counts(labels, adjusted)
    rtp, rfp, rfn = _counts(labels, preds)
    p, r, f = prf(tp, fp, fn)
    return EvalReport(tp, fp, fn, p, r, f, q, rtp, rfp, rfn, int(labels.size), **timing)


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Pool the counts of several series and recompute the metrics."""
    if not reports:
        raise ValueError("nothing to aggregate")
    tp, fp, fn = (sum(getattr(r, k) for r in reports) for k in ("tp", "fp", "fn"))
    p, r, f = prf(tp, fp, fn)
    qs = {r.q for r in reports}
    times = [r.wall_time_total for r in reports if r.wall_time_total is not None]
    n = sum(r.n for r in reports)
    total = sum(times) if times else None
    return EvalReport(
        tp, fp, fn, p, r, f,
        q=qs.pop() if len(qs) == 1 else -1,
        raw_tp=sum(r.raw_tp for r in reports),
        raw_fp=sum(r.raw_fp for r in reports),
        raw_fn=sum(r.raw_fn for r in reports),
        n=n,
        wall_time_total=total,
        time_per_timestamp=(1000.0 * total / n) if total is not None and n else None,
    )


def delay_for_granularity(granularity, q: int | None = None) -> int:
    """Default delay: 7 for minute-level, 3 for hour-level series; anything else needs ``q``."""
    if q is not None:
        if q < 1:
            raise ConfigError("delay q must be >= 1")
        return q
    if granularity in (MINUTE, "minute"):
        return DELAYS["minute"]
    if granularity in (HOUR, "hour"):
        return DELAYS["hour"]
    raise ConfigError(f"granularity {granularity!r} has no default delay; set q explicitly")


def timed_run(detector, values):
    """Run a detector over ``values``; time only the ingest calls.

    Returns ``(outcomes, total_seconds, per_timestamp_ms)``.
    """
    ingest = detector.ingest
    clock = time.perf_counter
    outcomes = []
    total = 0.0
    for v in values:
        t0 = clock()
        o = ingest(v)
        total += clock() - t0
        outcomes.append(o)
    n = len(outcomes)
    return outcomes, total, (1000.0 * total / n if n else 0.0)


@dataclass(frozen=True)
class BenchRow:
    length: int
    cached_s: float
    uncached_s: float
    cached_ms_per_ts: float
    uncached_ms_per_ts: float
    cached_steady_ms_per_ts: float  # after the cache has filled

    @property
    def speedup(self) -> float:
        return self.uncached_s / self.cached_s if self.cached_s else float("inf")


def bench_series(length: int, period: int = 1440, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    return 50.0 + 10.0 * np.sin(2 * np.pi * t / period) + rng.normal(0.0, 1.0, length)


class _gc_paused:
    """Keep the cyclic collector out of timed regions, as timeit does."""

    def __enter__(self):
        self.was_enabled = gc.isenabled()
        gc.disable()

    def __exit__(self, *exc):
        if self.was_enabled:
            gc.enable()


def detection_time(detector, values) -> float:
    """Seconds to stream ``values`` through ``detector``; outcomes are discarded."""
    ingest = detector.ingest
    with _gc_paused():
        t0 = time.perf_counter()
        for v in values:
            ingest(v)
        return time.perf_counter() - t0


def steady_latency(detector, values, skip: int, chunk: int | None = None) -> float:
    """Ingest latency in ms per point after the first ``skip`` points.

    Without ``chunk`` this is the mean.  With it, the median over chunks of
    that many points, which shrugs off bursts of interference from other
    processes.
    """
    ingest = detector.ingest
    for v in values[:skip]:
        ingest(v)
    rest = values[skip:]
    if not chunk:
        return 1000.0 * detection_time(detector, rest) / max(len(rest), 1)
    per_chunk = [
        1000.0 * detection_time(detector, rest[i:i + chunk]) / chunk
        for i in range(0, len(rest) - chunk + 1, chunk)
    ]
    return float(np.median(per_chunk))


def cache_benchmark(lengths, config, period: int = 1440, repeats: int = 1) -> list[BenchRow]:
    """Wall time of cached detection versus detection over the full history (c = n).

    With ``repeats`` > 1 the two runs alternate and the fastest of each is kept.
    """
    from dataclasses import replace

    from .engine import OnlineMatrixProfile

    full_cfg = replace(config, c=None)
    rows = []
    for n in lengths:
        x = bench_series(n, period)
        cached = full = float("inf")
        for _ in range(repeats):
            cached = min(cached, detection_time(OnlineMatrixProfile(config), x))
            full = min(full, detection_time(OnlineMatrixProfile(full_cfg), x))
        skip = min(config.c, n)
        steady = steady_latency(OnlineMatrixProfile(config), x, skip) if n > skip else float("nan")
        rows.append(BenchRow(n, cached, full, 1000.0 * cached / n, 1000.0 * full / n, steady))
    return rows
