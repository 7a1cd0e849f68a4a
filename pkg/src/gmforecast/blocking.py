"""Scalar <-> vector blocking of periodic sequences and sample-path increments.

Block m of a scalar series zeta with period T is the row
(zeta(mT), zeta(mT+1), ..., zeta(mT+T-1)), so component p (1-based) of
block m is zeta(mT+p-1).  Block indices keep their sign: observations live
at m <= -1, targets at m >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .increment_algebra import IncrementSpec, expand_operator


@dataclass
class ScalarSeries:
    values: np.ndarray
    start: int = 0
    period: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size < 1:
            raise ValueError("series must hold at least one value")
        if self.period < 1:
            raise ValueError("period must be >= 1")

    @property
    def stop(self) -> int:
        return self.start + len(self.values)


@dataclass
class VectorSeries:
    values: np.ndarray
    start: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ValueError("vector series must be a non-empty 2-d array of rows")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def stop(self) -> int:
        return self.start + self.values.shape[0]

    def row(self, m: int) -> np.ndarray:
        if not self.start <= m < self.stop:
            raise IndexError(f"block {m} outside range [{self.start}, {self.stop})")
        return self.values[m - self.start]

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Rows for block indices lo..hi-1."""
        if lo < self.start or hi > self.stop:
            raise IndexError(f"blocks [{lo}, {hi}) not covered by [{self.start}, {self.stop})")
        return self.values[lo - self.start:hi - self.start]


def block(series: ScalarSeries, T: Optional[int] = None, truncate: bool = False) -> VectorSeries:
    """xi_p(m) = zeta(mT + p - 1)."""
    T = int(T or series.period)
    lo, hi = series.start, series.stop
    first = -(-lo // T)  # ceil
    last = hi // T
    if not truncate and (lo % T or hi % T):
        raise ValueError(f"series range [{lo}, {hi}) does not split into whole blocks of {T}; "
                         "pass truncate=True to drop partial blocks")
    if last <= first:
        raise ValueError("no complete block in the series")
    vals = series.values[first * T - lo:last * T - lo].reshape(last - first, T)
    return VectorSeries(vals.copy(), first)


def unblock(vs: VectorSeries) -> ScalarSeries:
    T = vs.dim
    return ScalarSeries(vs.values.reshape(-1).copy(), vs.start * T, T)


@dataclass
class FunctionalSpec:
    """Target weights: finite scalar a(0..M), geometric a(k) = pattern[k mod L] rho^k,
    or rows already given in blocked form."""
    weights: Optional[np.ndarray] = None
    pattern: Optional[np.ndarray] = None
    rho: Optional[float] = None
    rows: Optional[np.ndarray] = None
    tol: float = 1e-12

    @classmethod
    def finite(cls, weights) -> "FunctionalSpec":
        return cls(weights=np.asarray(weights, dtype=float).ravel())

    @classmethod
    def geometric(cls, pattern, rho: float, tol: float = 1e-12) -> "FunctionalSpec":
        if not 0.0 < rho < 1.0:
            raise ValueError("decay rho must lie in (0, 1)")
        return cls(pattern=np.atleast_1d(np.asarray(pattern, dtype=float)), rho=float(rho), tol=tol)

    @classmethod
    def blocked(cls, rows) -> "FunctionalSpec":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        return cls(rows=rows)

    @property
    def is_infinite(self) -> bool:
        return self.rho is not None

    def certified_blocks(self, T: int) -> tuple:
        """Smallest N with tail of sum (m+1)||a(m)||^2 below tol, and the tail bound.

        ||a(m)||^2 <= T pmax^2 q^m with q = rho^{2T}; the tail of sum (m+1) q^m
        from m = N+1 has the closed form q^{N+1}((N+2) - (N+1) q) / (1-q)^2.
        """
        if not self.is_infinite:
            raise ValueError("finite functional has no truncation horizon")
        pmax = float(np.max(np.abs(self.pattern)))
        q = self.rho ** (2 * T)
        N = 0
        while True:
            tail = T * pmax ** 2 * q ** (N + 1) * ((N + 2) - (N + 1) * q) / (1 - q) ** 2
            if tail < self.tol or N > 100000:
                return N, tail
            N += 1

    def scalar_weights(self, M: int) -> np.ndarray:
        if self.weights is not None:
            w = np.zeros(M + 1)
            k = min(M + 1, len(self.weights))
            w[:k] = self.weights[:k]
            return w
        k = np.arange(M + 1)
        return self.pattern[k % len(self.pattern)] * self.rho ** k


def block_weights(spec: FunctionalSpec, T: int, M: Optional[int] = None) -> np.ndarray:
    """Rows a(0..N), a_p(m) = a(mT+p-1), zero past M; N = floor(M/T)."""
    if spec.rows is not None:
        if spec.rows.shape[1] != T:
            raise ValueError(f"blocked weights have {spec.rows.shape[1]} columns, expected {T}")
        return spec.rows.copy()
    if M is None:
        if spec.weights is not None:
            M = len(spec.weights) - 1
        else:
            N, _ = spec.certified_blocks(T)
            M = (N + 1) * T - 1
    N = M // T
    padded = np.zeros((N + 1) * T)
    padded[:M + 1] = spec.scalar_weights(M)
    return padded.reshape(N + 1, T)


def gm_increment(series: VectorSeries, spec: IncrementSpec) -> VectorSeries:
    """Componentwise sum_j e(j) xi(m - j), defined for m >= start + n."""
    e = expand_operator(spec.integer_part()).values.astype(float)
    n = len(e) - 1
    L = series.values.shape[0]
    if L <= n:
        raise ValueError(f"increment of order {n} needs at least {n + 1} blocks, got {L}")
    out = np.zeros((L - n, series.dim))
    for j, c in enumerate(e):
        if c:
            out += c * series.values[n - j:L - j]
    return VectorSeries(out, series.start + n)
