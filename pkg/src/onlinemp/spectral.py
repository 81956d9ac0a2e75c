"""Arbitrary-length DFT (Bluestein over radix-2) and spectral-residual saliency."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(size: int, sign: int) -> np.ndarray:
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def _fft_pow2(x: np.ndarray, sign: int = -1) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey; ``len(x)`` must be a power of two."""
    n = x.size
    out = x[_bit_reverse(n)].astype(complex)
    size = 2
    while size <= n:
        half = size // 2
        blocks = out.reshape(-1, size)
        even = blocks[:, :half]
        odd = blocks[:, half:] * _twiddles(size, sign)
        out = np.concatenate((even + odd, even - odd), axis=1).ravel()
        size *= 2
    return out


@lru_cache(maxsize=32)
def _chirp(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    k = np.arange(n)
    # k^2 mod 2n keeps the phase argument small for large n
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1 << (2 * n - 1).bit_length()
    b = np.zeros(size, dtype=complex)
    b[:n] = np.conj(w)
    if n > 1:
        b[-(n - 1):] = np.conj(w[1:])[::-1]
    return w, _fft_pow2(b), size


def dft(x) -> np.ndarray:
    """Forward DFT of any length, no zero-padding of the signal itself."""
    x = np.asarray(x, dtype=complex).ravel()
    n = x.size
    if n == 0:
        raise ValueError("empty input")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    w, fb, size = _chirp(n)
    a = np.zeros(size, dtype=complex)
    a[:n] = x * w
    conv = _fft_pow2(_fft_pow2(a) * fb, sign=1) / size
    return conv[:n] * w


def idft(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex).ravel()
    return np.conj(dft(np.conj(X))) / X.size


@dataclass(frozen=True)
class SRConfig:
    extend_k: int = 5
    mean_filter_q: int = 3
    score_window_z: int = 21
    threshold: float = 3.0
    eps: float = 1e-8

    def validate(self, length: int | None = None) -> None:
        if min(self.extend_k, self.mean_filter_q, self.score_window_z) < 1:
            raise ValueError("SR window sizes must be >= 1")
        if self.threshold <= 0:
            raise ValueError("SR threshold must be positive")
        if length is not None:
            if length < 2 * self.extend_k or length < 2 * self.mean_filter_q:
                raise ValueError(
                    f"window of {length} points too short for SR "
                    f"(extend_k={self.extend_k}, mean_filter_q={self.mean_filter_q})"
                )
            if self.score_window_z >= length:
                raise ValueError(f"score_window_z={self.score_window_z} must be < window length {length}")


def extend_window(x: np.ndarray, k: int) -> np.ndarray:
    """Append ``k`` copies of a gradient-extrapolated estimate after the last point.

    The estimate is built from the points *before* the last one, so a spike
    on the last point does not leak into the extension and mask itself.
    """
    head = x[:-1]
    n = head.size
    steps = np.arange(1, k + 1)
    grad = np.mean((head[-1] - head[n - 1 - steps]) / steps)
    est = head[n - k] + grad * k
    return np.concatenate((x, np.full(k, est)))


def centered_moving_average(v: np.ndarray, q: int) -> np.ndarray:
    """Moving average with a window of ``q`` centred on each point, truncated at the edges."""
    n = v.size
    c = np.concatenate(([0.0], np.cumsum(v)))
    lo = np.clip(np.arange(n) - (q - 1) // 2, 0, n)
    hi = np.clip(np.arange(n) + q // 2 + 1, 0, n)
    return (c[hi] - c[lo]) / (hi - lo)


def sr_saliency(window, cfg: SRConfig = SRConfig()) -> np.ndarray:
    """Saliency map of the window extended by ``cfg.extend_k`` estimated points.

    Spectrum bins whose amplitude is at most ``cfg.eps`` carry no usable phase
    and are dropped before the inverse transform.
    """
    x = np.asarray(window, dtype=float)
    cfg.validate(x.size)
    ext = extend_window(x, cfg.extend_k)
    spec = dft(ext)
    amp = np.abs(spec)
    log_amp = np.log(amp + cfg.eps)
    residual = log_amp - centered_moving_average(log_amp, cfg.mean_filter_q)
    keep = amp > cfg.eps
    rebuilt = np.zeros_like(spec)
    rebuilt[keep] = np.exp(residual[keep]) * spec[keep] / amp[keep]
    return np.abs(idft(rebuilt))


def sr_score(window, cfg: SRConfig = SRConfig()) -> float:
    """Relative saliency of the last real point against the ``score_window_z`` points before it."""
    x = np.asarray(window, dtype=float)
    sal = sr_saliency(x, cfg)
    last = x.size - 1
    local = sal[last - cfg.score_window_z:last].mean()
    return float((sal[last] - local) / (local + cfg.eps))


def sr_decide(window, cfg: SRConfig = SRConfig()) -> int:
    return int(sr_score(window, cfg) > cfg.threshold)
