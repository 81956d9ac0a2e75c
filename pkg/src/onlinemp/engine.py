"""Streaming left matrix profile detector with distance significance and SR fallback."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import EPS, RollingStats, clamp_radicand
from .spectral import SRConfig, sr_decide

WARMUP = "warmup"
BY_DS = "DS"
BY_SR = "SR"
DEGENERATE = "degenerate"
BY_MP = "MP"

SNAPSHOT_VERSION = 1


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    m: int = 48
    c: int | None = 240  # None keeps the whole history
    l: int = 48
    tau: float = 0.35
    exclusion: int | None = None  # None -> m // 2
    warmup_min: int | None = None  # None -> m
    distance: str = "mean"  # "mean" or "znorm"
    decision: str = "ds"  # "ds" or "mpdiff"
    sr_fallback: bool = True
    mp_sigma: float = 3.0
    sr: SRConfig = field(default_factory=SRConfig)

    @classmethod
    def hour(cls, **overrides) -> "EngineConfig":
        return cls(**{**dict(m=48, c=240, l=48, tau=0.35), **overrides})

    @classmethod
    def minute(cls, **overrides) -> "EngineConfig":
        return cls(**{**dict(m=2880, c=14400, l=30, tau=0.37), **overrides})

    @property
    def excl(self) -> int:
        return self.m // 2 if self.exclusion is None else self.exclusion

    @property
    def warmup(self) -> int:
        return self.m if self.warmup_min is None else self.warmup_min

    @property
    def strip(self) -> int:
        return min(self.l, self.m)

    def validate(self) -> "EngineConfig":
        if self.m < 2:
            raise ValueError("window m must be >= 2")
        if self.excl < 1:
            raise ValueError("exclusion must be >= 1")
        if self.c is not None:
            if self.m > self.c - self.excl - 1:
                raise ValueError(f"need m <= c - exclusion - 1 (m={self.m}, c={self.c}, exclusion={self.excl})")
            if self.warmup > self.c - self.m - self.excl + 1:
                raise ValueError("warmup_min exceeds the number of references the cache can hold")
        if self.l < 1:
            raise ValueError("DS strip length l must be >= 1")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("threshold tau must lie in (0, 1)")
        if self.warmup < 1:
            raise ValueError("warmup_min must be >= 1")
        if self.distance not in ("mean", "znorm"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.decision not in ("ds", "mpdiff"):
            raise ValueError(f"unknown decision rule {self.decision!r}")
        if self.sr_fallback:
            self.sr.validate(self.m)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        d["sr"] = SRConfig(**d.get("sr", {}))
        return cls(**d)


@dataclass(frozen=True)
class DetectionOutcome:
    timestamp: int
    value: float
    mp: float | None
    mp_index: int | None
    ds: float | None
    decision: int
    decided_by: str


@dataclass(frozen=True)
class DistanceProfileEntry:
    index: int
    distance: float


class _Tail:
    """Append-only array addressed by absolute index; the last ``keep`` items stay contiguous."""

    def __init__(self, keep: int | None, dtype=float, chunk: int = 1024):
        self.keep = keep
        self.data = np.zeros(2 * keep if keep else chunk, dtype=dtype)
        self.base = 0
        self.end = 0

    def append(self, v) -> None:
        if self.end - self.base == self.data.size:
            if self.keep is None:
                self.data = np.concatenate((self.data, np.zeros_like(self.data)))
            else:
                self.data[:self.keep] = self.data[self.keep:]
                self.base += self.keep
        self.data[self.end - self.base] = v
        self.end += 1

    def __getitem__(self, i: int):
        if i < self.base or i >= self.end:
            raise IndexError(i)
        return self.data[i - self.base]

    def __setitem__(self, i: int, v) -> None:
        if i < self.base or i >= self.end:
            raise IndexError(i)
        self.data[i - self.base] = v

    def span(self, a: int, b: int) -> np.ndarray:
        if a < self.base or b > self.end:
            raise IndexError(f"[{a}, {b}) outside retained [{self.base}, {self.end})")
        return self.data[a - self.base:b - self.base]

    def export(self) -> tuple[int, np.ndarray]:
        return self.base, self.data[:self.end - self.base].copy()

    def restore(self, base: int, items: np.ndarray) -> None:
        size = self.data.size
        while self.keep is None and size < items.size:
            size *= 2
        self.data = np.zeros(size, dtype=self.data.dtype)
        self.data[:items.size] = items
        self.base = base
        self.end = base + items.size


def distance_significance(query, neighbor, l: int) -> float:
    """Share of the query/neighbour strip deviation carried by the last point.

    Both windows are centred on the mean of their last ``l`` points.  A
    denominator below ``EPS`` gives 0 if the last-point term is also below
    ``EPS``, else 1.
    """
    return _ds(np.asarray(query, float), np.asarray(neighbor, float), l)[0]


def _ds(query: np.ndarray, neighbor: np.ndarray, l: int) -> tuple[float, bool]:
    a = query[-l:]
    b = neighbor[-l:]
    dev = (a - a.sum() / l) - (b - b.sum() / l)
    den = float(np.dot(dev, dev))
    num = float(dev[-1] * dev[-1])
    if den < EPS:
        return (0.0 if num < EPS else 1.0), True
    return num / den, False


def decide(ds: float, neighbor_label: int, window, tau: float, sr: SRConfig | None = SRConfig()) -> tuple[int, str]:
    """Threshold the DS, or hand the window to SR when the neighbour was itself anomalous.

    Passing ``sr=None`` disables the fallback.
    """
    if neighbor_label == 1 and sr is not None:
        return sr_decide(window, sr), BY_SR
    return int(ds > tau), BY_DS


def mp_diff_score(profile: Sequence[float]) -> np.ndarray:
    p = np.asarray(profile, dtype=float)
    if p.size < 2:
        raise ValueError("need at least 2 matrix profile values")
    out = np.zeros_like(p)
    out[1:] = np.diff(p)
    return out


class OnlineMatrixProfile:
    """Left matrix profile over a fixed-size cache of the most recent ``c`` statuses.

    Every call to :meth:`ingest` produces the outcome for the subsequence
    ending at the new status.  Inner products with the query are kept per
    lag (query start minus reference start) so the sliding recurrence updates
    them in place; only the oldest reference, whose predecessor has already
    left the cache, is recomputed with a direct dot product.
    """

    def __init__(self, config: EngineConfig):
        self.cfg = config.validate()
        c = config.c
        self.t = -1
        self.shift: float | None = None
        self._raw = _Tail(c)
        self._xs = _Tail(c)  # values minus `shift`
        self._mu = _Tail(c)  # shifted window means, by window start
        self._css = _Tail(c)  # centred sums of squares (m * var), by window start
        self._labels = _Tail(c, dtype=np.int8)
        self._stats = RollingStats(c if c else max(2 * config.m, 1024))
        self._kcap = (c - config.m) if c else max(config.excl, 1024)
        self._qt = np.zeros(self._kcap + 1)
        self._tmp = np.empty(0)  # scratch for the per-step vector work
        self._k = -1  # largest maintained lag, -1 before the first profile
        self._profile: tuple[int, np.ndarray, float] | None = None
        self._prev_mp: float | None = None
        self._diff_n = 0
        self._diff_mean = 0.0
        self._diff_m2 = 0.0

    # -- state access -------------------------------------------------------

    @property
    def cached(self) -> np.ndarray:
        lo = max(0, self.t + 1 - self.cfg.c) if self.cfg.c else 0
        return self._raw.span(lo, self.t + 1).copy()

    def label(self, timestamp: int) -> int:
        return int(self._labels[timestamp])

    def inner_products(self) -> tuple[int, np.ndarray]:
        """(first reference start, inner products of shifted references with the shifted query)."""
        q = self.t - self.cfg.m + 1
        k, excl = self._k, self.cfg.excl
        if k < excl:
            return q, np.empty(0)
        return q - k, self._qt[self._kcap - k:self._kcap - excl + 1].copy()

    def distance_profile(self) -> list[DistanceProfileEntry]:
        """Admissible distance profile of the latest query, oldest reference first."""
        if self._profile is None:
            return []
        start, rad, offset = self._profile
        d = np.sqrt(np.maximum(rad + offset, 0.0))
        return [DistanceProfileEntry(start + i, float(v)) for i, v in enumerate(d)]

    # -- streaming ------------------------------------------------------------

    def ingest(self, x: float) -> DetectionOutcome:
        x = float(x)
        t = self.t + 1
        if not math.isfinite(x):
            raise IngestError(f"non-finite status {x!r} at timestamp {t}")
        self.t = t
        cfg = self.cfg
        m = cfg.m
        if self.shift is None:
            self.shift = x
        xs = x - self.shift
        self._raw.append(x)
        self._xs.append(xs)
        self._labels.append(0)
        self._stats.update(x)
        self._profile = None
        if t < m - 1:
            return DetectionOutcome(t, x, None, None, None, 0, WARMUP)

        q = t - m + 1
        s1, s2 = self._stats.shifted_sums(q, m)
        mu_q = s1 / m
        css_q = max(s2 - s1 * mu_q, 0.0)
        self._mu.append(mu_q)
        self._css.append(css_q)

        excl = cfg.excl
        k = q if cfg.c is None else min(q, cfg.c - m)
        if k < excl:
            self._k = k
            return DetectionOutcome(t, x, None, None, None, 0, WARMUP)
        if k > self._kcap:
            self._grow(k)

        kcap = self._kcap
        xsv = self._xs
        qt = self._qt
        n_ref = k - excl + 1
        if self._tmp.size < n_ref:
            self._tmp = np.empty(2 * n_ref)
        tmp = self._tmp[:n_ref]
        if k > excl:
            # lags excl..k-1 were maintained at t-1: slide them one step
            jlo, jhi = q - k + 1, q - excl
            seg = qt[kcap - k + 1:kcap - excl + 1]
            t1 = tmp[:seg.size]
            np.multiply(xsv.span(jlo + m - 1, jhi + m), xs, out=t1)
            seg += t1
            np.multiply(xsv.span(jlo - 1, jhi), xsv[q - 1], out=t1)
            seg -= t1
        j0 = q - k
        query = xsv.span(q, t + 1)
        qt[kcap - k] = np.dot(xsv.span(j0, j0 + m), query)
        self._k = k

        qv = qt[kcap - k:kcap - excl + 1]
        mu_r = self._mu.span(j0, q - excl + 1)
        css_r = self._css.span(j0, q - excl + 1)
        if cfg.distance == "mean":
            # radicand minus the query's own css_q, which does not move the argmin
            rad = tmp
            np.multiply(mu_r, 2.0 * m * mu_q, out=rad)
            rad += css_r
            rad -= qv
            rad -= qv
            idx = int(rad.argmin())
            cov_i = qv[idx] - m * mu_r[idx] * mu_q
            r = clamp_radicand(float(rad[idx]) + css_q, css_r[idx] + css_q + 2.0 * abs(cov_i))
            self._profile = (j0, rad, css_q)
        else:
            rad = self._znorm_radicand(qv - m * mu_r * mu_q, css_r, css_q)
            idx = int(rad.argmin())
            r = clamp_radicand(float(rad[idx]), 2.0 * m)
            self._profile = (j0, rad, 0.0)
        mp = math.sqrt(r)
        nn = j0 + idx

        if k - excl + 1 < cfg.warmup:
            self._prev_mp = mp
            return DetectionOutcome(t, x, mp, nn, None, 0, WARMUP)

        if cfg.decision == "mpdiff":
            decision = self._mpdiff_decide(mp)
            self._labels[t] = decision
            return DetectionOutcome(t, x, mp, nn, None, decision, BY_MP)

        ds, degenerate = _ds(self._raw.span(q, t + 1), self._raw.span(nn, nn + m), cfg.strip)
        neighbor_label = int(self._labels[nn + m - 1])
        if cfg.sr_fallback and neighbor_label == 1:
            decision, by = decide(ds, neighbor_label, self._raw.span(q, t + 1), cfg.tau, cfg.sr)
        else:
            decision, by = decide(ds, neighbor_label, None, cfg.tau, None)
            if degenerate:
                by = DEGENERATE
        self._labels[t] = decision
        return DetectionOutcome(t, x, mp, nn, ds, decision, by)

    def run(self, values) -> list[DetectionOutcome]:
        return [self.ingest(v) for v in values]

    def _znorm_radicand(self, cov, css_r, css_q):
        m = self.cfg.m
        floor = m * EPS * EPS
        const_r = css_r <= floor
        if css_q <= floor:
            return np.where(const_r, 0.0, float(m))
        with np.errstate(divide="ignore", invalid="ignore"):
            rad = 2.0 * m * (1.0 - cov / np.sqrt(css_r * css_q))
        return np.where(const_r, float(m), rad)

    def _mpdiff_decide(self, mp: float) -> int:
        score = 0.0 if self._prev_mp is None else mp - self._prev_mp
        self._prev_mp = mp
        decision = 0
        if self._diff_n >= 2:
            std = math.sqrt(self._diff_m2 / (self._diff_n - 1))
            decision = int(score > self._diff_mean + self.cfg.mp_sigma * std)
        self._diff_n += 1
        delta = score - self._diff_mean
        self._diff_mean += delta / self._diff_n
        self._diff_m2 += delta * (score - self._diff_mean)
        return decision

    def _grow(self, k: int) -> None:
        new_cap = max(2 * self._kcap, k)
        grown = np.zeros(new_cap + 1)
        grown[new_cap - self._kcap:] = self._qt
        self._qt = grown
        self._kcap = new_cap

    # -- snapshots ------------------------------------------------------------

    def save(self, path) -> None:
        """Write a snapshot from which :meth:`load` resumes bit-identically."""
        arrays = {}
        for name in ("_raw", "_xs", "_mu", "_css", "_labels"):
            base, items = getattr(self, name).export()
            arrays[name] = items
            arrays[name + "_base"] = np.array(base)
        st = self._stats
        arrays["stats_raw"] = st._raw[:st._end - st._base].copy()
        arrays["stats_p1"] = st._p1[:st._end - st._base + 1].copy()
        arrays["stats_p2"] = st._p2[:st._end - st._base + 1].copy()
        arrays["qt"] = self._qt.copy()
        meta = {
            "format_version": SNAPSHOT_VERSION,
            "config": self.cfg.to_dict(),
            "t": self.t,
            "shift": self.shift,
            "kcap": self._kcap,
            "k": self._k,
            "prev_mp": self._prev_mp,
            "diff": [self._diff_n, self._diff_mean, self._diff_m2],
            "stats": [st.shift, st._base, st._end, st._since_rebuild, st.capacity],
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path) -> "OnlineMatrixProfile":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format_version") != SNAPSHOT_VERSION:
                raise ValueError(f"unsupported snapshot version {meta.get('format_version')!r}")
            eng = cls(EngineConfig.from_dict(meta["config"]))
            for name in ("_raw", "_xs", "_mu", "_css", "_labels"):
                getattr(eng, name).restore(int(z[name + "_base"]), z[name])
            st = eng._stats
            st.shift, st._base, st._end, st._since_rebuild, st.capacity = meta["stats"]
            n = z["stats_raw"].size
            st._raw[:n] = z["stats_raw"]
            st._p1[:n + 1] = z["stats_p1"]
            st._p2[:n + 1] = z["stats_p2"]
            eng._qt = z["qt"].copy()
        eng.t = meta["t"]
        eng.shift = meta["shift"]
        eng._kcap = meta["kcap"]
        eng._k = meta["k"]
        eng._prev_mp = meta["prev_mp"]
        eng._diff_n, eng._diff_mean, eng._diff_m2 = meta["diff"]
        return eng


class SRDetector:
    """Spectral residual on the trailing window of ``m`` statuses, no matrix profile."""

    def __init__(self, config: EngineConfig):
        config.sr.validate(config.m)
        self.cfg = config
        self.t = -1
        self._raw = _Tail(config.m)

    def ingest(self, x: float) -> DetectionOutcome:
        x = float(x)
        t = self.t + 1
        if not math.isfinite(x):
            raise IngestError(f"non-finite status {x!r} at timestamp {t}")
        self.t = t
        self._raw.append(x)
        m = self.cfg.m
        if t < m - 1:
            return DetectionOutcome(t, x, None, None, None, 0, WARMUP)
        return DetectionOutcome(t, x, None, None, None, sr_decide(self._raw.span(t - m + 1, t + 1), self.cfg.sr), BY_SR)

    def run(self, values) -> list[DetectionOutcome]:
        return [self.ingest(v) for v in values]


# Ablation rows: mode -> engine overrides.  "bounded" False drops the cache.
MODES = {
    "omp": dict(distance="mean", bounded=True, decision="ds", sr_fallback=True),
    "mp-znorm": dict(distance="znorm", bounded=False, decision="mpdiff", sr_fallback=False),
    "mp-star": dict(distance="mean", bounded=False, decision="mpdiff", sr_fallback=False),
    "mp-star-cache": dict(distance="mean", bounded=True, decision="mpdiff", sr_fallback=False),
    "mp-star-cache-ds": dict(distance="mean", bounded=True, decision="ds", sr_fallback=False),
    "sr-only": None,
}


def mode_config(mode: str, base: EngineConfig) -> EngineConfig:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {sorted(MODES)}")
    over = MODES[mode]
    if over is None:
        return base
    over = dict(over)
    bounded = over.pop("bounded")
    return replace(base, c=base.c if bounded else None, **over)


def make_detector(mode: str, base: EngineConfig):
    cfg = mode_config(mode, base)
    if mode == "sr-only":
        return SRDetector(cfg)
    return OnlineMatrixProfile(cfg)
