"""Subsequence distances, window statistics and the sliding inner-product recurrence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Degeneracy threshold shared by every module.
EPS = 1e-12
# Negative radicands down to -RADICAND_TOL * scale are rounding noise and clamp to zero.
RADICAND_TOL = 1e-9


class DegenerateSubsequenceError(ValueError):
    """A constant window was passed where a z-normalization is required."""


class InconsistentStateError(RuntimeError):
    """Incrementally maintained statistics disagree with each other."""


@dataclass(frozen=True)
class WindowStats:
    mean: float
    std: float
    sum: float
    sum_sq: float
    m: int

    @classmethod
    def of(cls, values) -> "WindowStats":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            raise ValueError("window statistics of an empty window")
        mean = float(x.mean())
        return cls(mean, float(x.std()), float(x.sum()), float(np.dot(x, x)), x.size)

    @classmethod
    def from_sums(cls, s1: float, s2: float, m: int, shift: float = 0.0) -> "WindowStats":
        """Build stats from sums of ``x - shift``; ``shift`` is added back to the mean."""
        if m <= 0:
            raise ValueError("window statistics of an empty window")
        mean_s = s1 / m
        var = max(s2 / m - mean_s * mean_s, 0.0)
        mean = mean_s + shift
        return cls(
            mean=mean,
            std=math.sqrt(var),
            sum=s1 + m * shift,
            sum_sq=s2 + 2.0 * shift * s1 + m * shift * shift,
            m=m,
        )

    @property
    def var(self) -> float:
        return self.std * self.std


def _as_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"subsequence lengths differ: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("subsequences need at least 2 points")
    return a, b


def mean_normalized_distance(a, b) -> float:
    """Euclidean distance between mean-centred windows (no division by std)."""
    a, b = _as_pair(a, b)
    diff = (a - a.mean()) - (b - b.mean())
    return math.sqrt(float(np.dot(diff, diff)))


def clamp_radicand(r: float, scale: float = 1.0) -> float:
    if r >= 0.0:
        return r
    if r >= -RADICAND_TOL * max(1.0, scale):
        return 0.0
    raise InconsistentStateError(f"negative squared distance {r!r}; statistics and inner product disagree")


def distance_via_stats(ip: float, sa: WindowStats, sb: WindowStats, m: int) -> float:
    """Mean-normalized distance from an inner product and the two windows' stats."""
    cov = ip - m * sa.mean * sb.mean
    spread = m * (sa.var + sb.var)
    r = spread - 2.0 * cov
    return math.sqrt(clamp_radicand(r, spread + 2.0 * abs(cov)))


def update_inner_product(prev: float, x_old_a: float, x_old_b: float, x_new_a: float, x_new_b: float) -> float:
    return prev - x_old_a * x_old_b + x_new_a * x_new_b


def znorm_distance(a, b) -> float:
    """Euclidean distance between z-normalized windows, evaluated term by term."""
    a, b = _as_pair(a, b)
    sa, sb = a.std(), b.std()
    if sa <= EPS or sb <= EPS:
        raise DegenerateSubsequenceError("constant subsequence cannot be z-normalized")
    diff = (a - a.mean()) / sa - (b - b.mean()) / sb
    return math.sqrt(float(np.dot(diff, diff)))


def znorm_distance_via_stats(ip: float, sa: WindowStats, sb: WindowStats, m: int) -> float:
    """The correlation form of the z-normalized distance."""
    if sa.std <= EPS or sb.std <= EPS:
        raise DegenerateSubsequenceError("constant subsequence cannot be z-normalized")
    corr = (ip - m * sa.mean * sb.mean) / (m * sa.std * sb.std)
    r = 2.0 * m * (1.0 - corr)
    return math.sqrt(clamp_radicand(r, 2.0 * m))


class RollingStats:
    """Prefix sums of ``x - shift`` and ``(x - shift)**2`` over the most recent ``capacity`` values.

    Any window lying inside the retained values gets its stats in O(1).  The
    sums restart from the raw retained values every ``capacity`` updates so
    rounding drift cannot accumulate.  ``shift`` is fixed at the first value
    seen, which keeps the sums small for series sitting far from zero.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.shift: float | None = None
        self._raw = np.empty(2 * capacity)
        self._p1 = np.zeros(2 * capacity + 1)
        self._p2 = np.zeros(2 * capacity + 1)
        self._base = 0  # absolute index of _raw[0] / _p[0]
        self._end = 0
        self._since_rebuild = 0

    def __len__(self) -> int:
        return min(self._end, self.capacity)

    @property
    def oldest(self) -> int:
        return max(0, self._end - self.capacity)

    def update(self, x_in: float) -> None:
        """Append ``x_in``; the value leaving the cache is implied by position."""
        if self.shift is None:
            self.shift = float(x_in)
        # a rebuild every `capacity` updates keeps at most 2 * capacity values buffered
        k = self._end - self._base
        v = x_in - self.shift
        self._raw[k] = x_in
        self._p1[k + 1] = self._p1[k] + v
        self._p2[k + 1] = self._p2[k] + v * v
        self._end += 1
        self._since_rebuild += 1
        if self._since_rebuild >= self.capacity:
            self.rebuild()

    def rebuild(self) -> None:
        """Recompute the prefix sums from the raw retained values."""
        start = self.oldest
        n = self._end - start
        raw = self._raw[start - self._base:self._end - self._base].copy()
        self._raw[:n] = raw
        self._base = start
        v = raw - self.shift
        self._p1[0] = 0.0
        self._p2[0] = 0.0
        np.cumsum(v, out=self._p1[1:n + 1])
        np.cumsum(v * v, out=self._p2[1:n + 1])
        self._since_rebuild = 0

    def shifted_sums(self, start: int, m: int) -> tuple[float, float]:
        if m <= 0:
            raise ValueError("window statistics of an empty window")
        if start < self.oldest or start + m > self._end:
            raise IndexError(f"window [{start}, {start + m}) is not inside the retained values")
        a = start - self._base
        b = a + m
        return self._p1[b] - self._p1[a], self._p2[b] - self._p2[a]

    def window(self, start: int, m: int) -> WindowStats:
        s1, s2 = self.shifted_sums(start, m)
        return WindowStats.from_sums(s1, s2, m, self.shift)

    def state(self) -> tuple[np.ndarray, np.ndarray]:
        """Prefix sums for the retained values, oldest first."""
        a = self.oldest - self._base
        b = self._end - self._base
        return self._p1[a:b + 1] - self._p1[a], self._p2[a:b + 1] - self._p2[a]
