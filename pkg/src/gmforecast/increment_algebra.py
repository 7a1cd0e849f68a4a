"""Seasonal increment operators and their coefficient sequences.

An increment operator is a product of seasonal differencing factors

    chi(B) = prod_i (1 - B^{mu_i s_i})^{R_i + D_i},

with integer orders R_i and fractional orders D_i.  The integer part expands
to a finite polynomial e(0..n); its inverse is a power series d(k).  The
fractional part is handled through Gegenbauer factors, one per spectral
frequency, whose coefficient series G+ (inverse operator) and G- (operator)
are reciprocal power series.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class SingularEvaluation(ValueError):
    """Raised when a factor with negative total order is evaluated at its zero."""


class Factor(NamedTuple):
    mu: int
    s: int
    R: int
    D: float = 0.0

    @property
    def lag(self) -> int:
        return self.mu * self.s


@dataclass(frozen=True)
class IncrementSpec:
    factors: tuple

    def __post_init__(self):
        facs = tuple(f if isinstance(f, Factor) else Factor(*f) for f in self.factors)
        if len(facs) == 0:
            raise ValueError("an increment spec needs at least one factor")
        for f in facs:
            if int(f.mu) != f.mu or f.mu < 1:
                raise ValueError(f"step mu must be a positive integer, got {f.mu}")
            if int(f.s) != f.s or f.s < 1:
                raise ValueError(f"season s must be a positive integer, got {f.s}")
            if int(f.R) != f.R or f.R < 0:
                raise ValueError(f"integer order R must be a non-negative integer, got {f.R}")
            if not -1.0 < f.D < 1.0:
                raise ValueError(f"fractional order D must lie in (-1, 1), got {f.D}")
        facs = tuple(Factor(int(f.mu), int(f.s), int(f.R), float(f.D)) for f in facs)
        object.__setattr__(self, "factors", facs)

    @classmethod
    def of(cls, *factors) -> "IncrementSpec":
        return cls(tuple(factors))

    @property
    def order(self) -> int:
        """Degree n of the integer-order polynomial, sum of mu*s*R."""
        return sum(f.lag * f.R for f in self.factors)

    @property
    def is_integer(self) -> bool:
        return all(f.D == 0.0 for f in self.factors)

    def integer_part(self) -> "IncrementSpec":
        return IncrementSpec(tuple(Factor(f.mu, f.s, f.R, 0.0) for f in self.factors))

    def fractional_part(self) -> "IncrementSpec":
        return IncrementSpec(tuple(Factor(f.mu, f.s, 0, f.D) for f in self.factors))

    def with_steps(self, mu: Sequence[int]) -> "IncrementSpec":
        if len(mu) != len(self.factors):
            raise ValueError("step vector length must match the number of factors")
        return IncrementSpec(tuple(Factor(int(m), f.s, f.R, f.D) for m, f in zip(mu, self.factors)))

    @property
    def steps(self) -> tuple:
        return tuple(f.mu for f in self.factors)

    def to_dict(self) -> dict:
        return {"factors": [{"mu": f.mu, "s": f.s, "R": f.R, "D": f.D} for f in self.factors]}

    @classmethod
    def from_dict(cls, doc) -> "IncrementSpec":
        items = doc["factors"] if isinstance(doc, dict) else doc
        out = []
        for it in items:
            if isinstance(it, dict):
                out.append(Factor(it.get("mu", 1), it["s"], it.get("R", 0), it.get("D", 0.0)))
            else:
                out.append(Factor(*it))
        return cls(tuple(out))


@dataclass
class CoefficientSeries:
    """Truncated coefficient sequence c(offset), c(offset+1), ...

    tail_bound bounds the discarded tail; norm says in which norm ("l1" or
    "l2").  The l2 norm is used for long-memory series whose absolute sums
    diverge.
    """
    values: np.ndarray
    offset: int = 0
    tail_bound: float = 0.0
    norm: str = "l1"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim == 0 or len(self.values) < 1:
            raise ValueError("coefficient series must hold at least one value")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k):
        return self.values[k]


@dataclass
class FrequencySet:
    frequencies: np.ndarray
    orders: np.ndarray
    halved: np.ndarray = field(default=None)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.orders = np.asarray(self.orders, dtype=float)
        if self.halved is None:
            edge = np.isclose(self.frequencies, 0.0) | np.isclose(self.frequencies, np.pi)
            self.halved = np.where(edge, self.orders / 2.0, self.orders)


# -- integer polynomial helpers ---------------------------------------------

def _int_convolve(a, b, length=None):
    a = np.asarray(a)
    b = np.asarray(b)
    bound = float(np.max(np.abs(a))) * float(np.max(np.abs(b))) * min(len(a), len(b))
    if bound < 2.0 ** 62:
        out = np.convolve(a.astype(np.int64), b.astype(np.int64))
    else:
        out = np.convolve(a.astype(object), b.astype(object))
    if length is not None:
        out = out[:length]
        if len(out) < length:
            out = np.concatenate([out, np.zeros(length - len(out), dtype=out.dtype)])
    return out


def expand_operator(spec: IncrementSpec) -> CoefficientSeries:
    """Coefficients e(0..n) of the integer-order increment polynomial."""
    if not spec.is_integer:
        raise ValueError("fractional order present; use gi_coefficients for the fractional layer")
    poly = np.array([1], dtype=np.int64)
    for f in spec.factors:
        binom = np.zeros(f.lag + 1, dtype=np.int64)
        binom[0], binom[-1] = 1, -1
        for _ in range(f.R):
            poly = _int_convolve(poly, binom)
    return CoefficientSeries(poly, 0, 0.0)


def expand_inverse(spec: IncrementSpec, length: int) -> CoefficientSeries:
    """d(0..K) with sum_k d(k) x^k = prod_i (sum_j x^{mu_i s_i j})^{R_i}.

    Always exactly the first K+1 terms; the tail is infinite whenever any
    R_i > 0, so tail_bound is reported as inf in that case.
    """
    if not spec.is_integer:
        raise ValueError("fractional order present; use gi_coefficients for the fractional layer")
    if length < 0:
        raise ValueError("length must be non-negative")
    K = int(length)
    d = np.zeros(K + 1, dtype=np.int64)
    d[0] = 1
    for f in spec.factors:
        geo = np.zeros(K + 1, dtype=np.int64)
        geo[::f.lag] = 1
        for _ in range(f.R):
            d = _int_convolve(d, geo, K + 1)
    tail = 0.0 if spec.order == 0 else float("inf")
    return CoefficientSeries(d, 0, tail)


# -- frequency-domain evaluators --------------------------------------------

def _difference_power(theta, R, D):
    # (1 - e^{-i theta})^{R+D}; written as 2 sin(theta'/2) e^{i(pi/2 - theta'/2)}
    # with theta' in [0, 2 pi), so the principal branch is never crossed
    th = np.mod(theta, 2 * np.pi)
    modulus = 2.0 * np.sin(th / 2.0)
    phase = np.pi / 2.0 - th / 2.0
    order = R + D
    zero = modulus == 0.0
    if order < 0 and np.any(zero):
        raise SingularEvaluation("factor with negative order evaluated at its zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(zero, 0.0 if order > 0 else 1.0,
                       np.power(np.where(zero, 1.0, modulus), order) * np.exp(1j * order * phase))
    return val


def eval_chi(spec: IncrementSpec, lam):
    """chi(e^{-i lam}) = prod_j (1 - e^{-i lam mu_j s_j})^{R_j + D_j}."""
    lam_arr = np.asarray(lam, dtype=float)
    val = np.ones(lam_arr.shape, dtype=complex)
    for f in spec.factors:
        if f.R == 0 and f.D == 0.0:
            continue
        if f.D == 0.0:
            val = val * (1.0 - np.exp(-1j * lam_arr * f.lag)) ** f.R
        else:
            val = val * _difference_power(lam_arr * f.lag, f.R, f.D)
    return val if val.ndim else complex(val)


def eval_beta(spec: IncrementSpec, lam):
    """beta(i lam) = prod_j prod_{|k| <= s_j/2} (i lam - 2 pi i k / s_j)^{R_j + D_j}."""
    lam_arr = np.asarray(lam, dtype=float)
    val = np.ones(lam_arr.shape, dtype=complex)
    for f in spec.factors:
        order = f.R + f.D
        if order == 0:
            continue
        for k in range(-(f.s // 2), f.s // 2 + 1):
            x = lam_arr - 2 * np.pi * k / f.s
            if f.D == 0.0:
                val = val * (1j * x) ** f.R
                continue
            zero = x == 0.0
            if order < 0 and np.any(zero):
                raise SingularEvaluation("beta factor with negative order evaluated at its zero")
            with np.errstate(divide="ignore", invalid="ignore"):
                part = np.where(zero, 0.0,
                                np.power(np.abs(np.where(zero, 1.0, x)), order)
                                * np.exp(1j * np.sign(x) * np.pi * order / 2.0))
            val = val * part
    return val if val.ndim else complex(val)


def chi_beta_ratio(spec: IncrementSpec, lam):
    """|chi|^2 / |beta|^2 on lam, evaluated away from exact zeros."""
    c = np.abs(eval_chi(spec, lam)) ** 2
    b = np.abs(eval_beta(spec, lam)) ** 2
    return c / b


def singular_frequencies(spec: IncrementSpec) -> np.ndarray:
    """Zeros of chi and beta inside [-pi, pi]."""
    out = set()
    for f in spec.factors:
        if f.R + f.D == 0:
            continue
        for k in range(-(f.lag // 2), f.lag // 2 + 1):
            out.add(round(2 * np.pi * k / f.lag, 15))
        for k in range(-(f.s // 2), f.s // 2 + 1):
            out.add(round(2 * np.pi * k / f.s, 15))
    return np.array(sorted(out))


# -- Gegenbauer layer --------------------------------------------------------

def gegenbauer_series(d: float, u: float, length: int) -> np.ndarray:
    """C_0..C_K of (1 - 2uB + B^2)^{-d} by the three-term recurrence."""
    K = int(length)
    c = np.zeros(K + 1)
    c[0] = 1.0
    if K >= 1:
        c[1] = 2.0 * d * u
    for n in range(2, K + 1):
        c[n] = (2.0 * u * (n + d - 1.0) * c[n - 1] - (n + 2.0 * d - 2.0) * c[n - 2]) / n
    return c


def gegenbauer_coeff(d: float, u: float, n: int) -> float:
    return float(gegenbauer_series(d, u, n)[n])


def frequency_set(spec: IncrementSpec) -> FrequencySet:
    """Frequencies 2 pi k / (mu s), 0 <= k <= floor(mu s / 2), with aggregated orders."""
    table = {}
    for f in spec.factors:
        for k in range(f.lag // 2 + 1):
            nu = 2 * np.pi * k / f.lag
            key = round(nu, 12)
            table.setdefault(key, [nu, 0.0])
            table[key][1] += f.D
    keys = sorted(table)
    freqs = np.array([table[k][0] for k in keys])
    orders = np.array([table[k][1] for k in keys])
    return FrequencySet(freqs, orders)


def _power_law_tail(values, exponent, K):
    # fit |c_n| <= A n^p on the last quarter and integrate the envelope past K
    n = np.arange(len(values))
    lo = max(1, (3 * K) // 4)
    if K < 4:
        return float("inf"), "l1"
    A = float(np.max(np.abs(values[lo:K + 1]) / n[lo:K + 1] ** exponent))
    if exponent < -1.0:
        return 2.0 * A * K ** (exponent + 1.0) / (-exponent - 1.0), "l1"
    if 2 * exponent < -1.0:
        return 2.0 * np.sqrt(A * A * K ** (2 * exponent + 1.0) / (-2 * exponent - 1.0)), "l2"
    return float("inf"), "l2"


def gi_coefficients(spec: IncrementSpec, sign: int, length: int) -> CoefficientSeries:
    """G+ (sign=+1, coefficients of chi^{(D)}(B)^{-1}) or G- (sign=-1, of chi^{(D)}(B))."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    K = int(length)
    fs = frequency_set(spec.fractional_part())
    g = np.zeros(K + 1)
    g[0] = 1.0
    active = False
    for nu, dt in zip(fs.frequencies, fs.halved):
        if dt == 0.0:
            continue
        active = True
        g = np.convolve(g, gegenbauer_series(sign * dt, np.cos(nu), K))[:K + 1]
    if not active:
        return CoefficientSeries(g, 0, 0.0)
    nz = fs.orders[fs.orders != 0.0]
    exponent = float(np.max(sign * nz)) - 1.0
    tail, norm = _power_law_tail(g, exponent, K)
    return CoefficientSeries(g, 0, tail, norm)


def classify_stationarity(spec: IncrementSpec) -> dict:
    """Per-frequency verdicts from the aggregated fractional orders."""
    fs = frequency_set(spec)
    per = []
    for nu, Dv in zip(fs.frequencies, fs.orders):
        per.append({
            "frequency": float(nu),
            "order": float(Dv),
            "stationary": bool(-0.5 < Dv < 0.5),
            "long_memory": bool(0.0 < Dv < 0.5),
            "invertible": bool(-0.5 < Dv < 0.0),
        })
    nonzero = [p for p in per if p["order"] != 0.0]
    return {
        "stationary": all(p["stationary"] for p in per),
        "long_memory": any(p["long_memory"] for p in per),
        "invertible": all(p["invertible"] for p in nonzero),
        "frequencies": per,
    }
