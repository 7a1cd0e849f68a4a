"""Spectral densities of periodic increment sequences and their factors.

Conventions used throughout the package:

* frequency grids have N nodes lam_j = -pi + (j + 1/2) 2 pi / N, symmetric
  about 0 and never hitting 0 or +-pi;
* covariances are R(l) = E[Y(m+l) Y(m)^T] = (1/2pi) int e^{i lam l} f_Y(lam) d lam,
  so a causal factor f_Y = Phi Phi^* with Phi(z) = sum phi(k) z^k gives
  R(l) = sum_k phi(k+l) phi(k)^T;
* Y denotes the integer-order increment chi^{(R)} xi whose density is
  f_Y = |chi|^2 / |beta|^2 f, with f the density in the structural-function
  representation.

A model's factor may describe one of three things ("describes"):

    increment   Phi factors f_Y directly (the factor used for forecasting);
    fractional  Phi factors f~, the density of chi^{(R+D)} xi, so that
                f_Y = |chi^{(D)}|^{-2} f~ and phi_mu = G+ * phi;
    base        Phi factors f itself, so that phi_mu = w_mu * phi.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .increment_algebra import (
    CoefficientSeries,
    IncrementSpec,
    chi_beta_ratio,
    eval_chi,
    gi_coefficients,
    singular_frequencies,
)

DEFAULT_GRID = 2 ** 14
DESCRIBES = ("increment", "fractional", "base")


class QuadratureError(RuntimeError):
    pass


def offset_grid(N: int) -> np.ndarray:
    return -np.pi + (np.arange(N) + 0.5) * (2 * np.pi / N)


def _poly_on_grid(coefs: np.ndarray, lam: np.ndarray) -> np.ndarray:
    # sum_k coefs[k] e^{-i lam k}, coefs shaped (K+1, a, b)
    z = np.exp(-1j * np.outer(lam, np.arange(coefs.shape[0])))
    return np.tensordot(z, coefs, axes=(1, 0))


def _series_tail(coefs: np.ndarray) -> float:
    """Geometric extrapolation of sum_{k>K} ||c_k|| from the last half of a series."""
    norms = np.sqrt(np.sum(np.abs(coefs.reshape(coefs.shape[0], -1)) ** 2, axis=1))
    K = len(norms) - 1
    half = K // 2
    if np.all(norms[half:] == 0.0):
        return 0.0
    if K < 4 or norms[half] == 0.0:
        return float("inf")
    r = (norms[-1] / norms[half]) ** (1.0 / (K - half))
    if r >= 1.0:
        return float("inf")
    return float(norms[-1] * r / (1.0 - r))


def ar_ma_expand(ma: np.ndarray, ar: Optional[np.ndarray], length: int) -> tuple:
    """Power-series coefficients of A(z)^{-1} M(z), k = 0..length-1, plus tail estimate."""
    ma = np.asarray(ma, dtype=float)
    K = int(length)
    T, q = ma.shape[1], ma.shape[2]
    out = np.zeros((K, T, q))
    if ar is None:
        n = min(K, ma.shape[0])
        out[:n] = ma[:n]
        tail = 0.0 if ma.shape[0] <= K else float(np.sum(np.linalg.norm(ma[K:], axis=(1, 2))))
        return out, tail
    ar = np.asarray(ar, dtype=float)
    a0inv = np.linalg.inv(ar[0])
    for k in range(K):
        acc = ma[k].copy() if k < ma.shape[0] else np.zeros((T, q))
        for j in range(1, min(k, ar.shape[0] - 1) + 1):
            acc -= ar[j] @ out[k - j]
        out[k] = a0inv @ acc
    return out, _series_tail(out)


@dataclass
class FactorSeries:
    phi: np.ndarray
    tail_bound: float = 0.0
    psi: Optional[np.ndarray] = None
    psi_tail: float = 0.0
    w: Optional[CoefficientSeries] = None


@dataclass
class SpectralModel:
    dim: int
    spec: IncrementSpec
    describes: str = "increment"
    ma: Optional[np.ndarray] = None
    ar: Optional[np.ndarray] = None
    grid: Optional[np.ndarray] = None
    tail_bound: float = 0.0
    minimal: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.describes not in DESCRIBES:
            raise ValueError(f"describes must be one of {DESCRIBES}")
        if (self.ma is None) == (self.grid is None):
            raise ValueError("give exactly one of MA coefficients or a grid density")
        if self.ma is not None:
            self.ma = np.asarray(self.ma, dtype=float)
            if self.ma.ndim == 1:
                self.ma = self.ma[:, None, None]
            if self.ma.shape[1] != self.dim:
                raise ValueError(f"MA coefficients have {self.ma.shape[1]} rows, expected {self.dim}")
            if self.ar is not None:
                self.ar = np.asarray(self.ar, dtype=float)
                if self.ar.ndim == 1:
                    self.ar = self.ar[:, None, None]
                if self.ar.shape[1:] != (self.dim, self.dim):
                    raise ValueError("AR coefficients must be square T x T matrices")
        else:
            g = np.asarray(self.grid)
            if g.ndim == 1:
                g = g[:, None, None]
            if g.shape[1:] != (self.dim, self.dim):
                raise ValueError("grid density must hold T x T matrices")
            if not np.allclose(g, np.conj(np.swapaxes(g, 1, 2)), atol=1e-12):
                raise ValueError("grid density matrices must be Hermitian")
            if np.min(np.linalg.eigvalsh(g)) < -1e-12:
                raise ValueError("grid density matrices must be positive semidefinite")
            if self.describes == "fractional":
                raise ValueError("grid densities describe base or increment densities only")
            self.grid = g
        if self.describes == "base" and not self.spec.is_integer:
            raise ValueError("base-density models take integer-order specs; use describes='fractional'")

    # -- construction helpers
    @classmethod
    def from_ma(cls, spec, ma, ar=None, describes="increment", name="") -> "SpectralModel":
        ma = np.asarray(ma, dtype=float)
        if ma.ndim == 1:
            ma = ma[:, None, None]
        return cls(ma.shape[1], spec, describes, ma=ma, ar=ar, name=name)

    @classmethod
    def from_grid(cls, spec, values, describes="base", name="") -> "SpectralModel":
        values = np.asarray(values)
        dim = 1 if values.ndim == 1 else values.shape[1]
        return cls(dim, spec, describes, grid=values, name=name)

    @property
    def is_ma(self) -> bool:
        return self.ma is not None

    @property
    def rank(self) -> int:
        return self.ma.shape[2] if self.is_ma else self.dim

    @property
    def grid_size(self) -> int:
        return self.grid.shape[0]

    # -- frequency-domain views
    def factor_on(self, lam) -> np.ndarray:
        """Phi(e^{-i lam}) of the stored factor, shape (n, T, q)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        m = _poly_on_grid(self.ma, lam)
        if self.ar is None:
            return m
        a = _poly_on_grid(self.ar, lam)
        return np.linalg.solve(a, m)

    def _check_grid(self, lam):
        if lam is None:
            return offset_grid(self.grid_size)
        if len(lam) != self.grid_size or not np.allclose(lam, offset_grid(self.grid_size)):
            raise ValueError("grid-form models can only be evaluated on their own grid")
        return lam

    def _factor_gram(self, lam):
        phi = self.factor_on(lam)
        return phi @ np.conj(np.swapaxes(phi, 1, 2))

    def _fractional_gain(self, lam):
        return np.abs(eval_chi(self.spec.fractional_part(), lam)) ** 2

    def increment_density(self, lam=None) -> np.ndarray:
        """f_Y, the density of chi^{(R)} xi, at lam (n, T, T)."""
        ispec = self.spec.integer_part()
        if self.grid is not None:
            lam = self._check_grid(lam)
            if self.describes == "increment":
                return self.grid.copy()
            return chi_beta_ratio(ispec, lam)[:, None, None] * self.grid
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        g = self._factor_gram(lam)
        if self.describes == "increment":
            return g
        if self.describes == "fractional":
            return g / self._fractional_gain(lam)[:, None, None]
        return chi_beta_ratio(ispec, lam)[:, None, None] * g

    def density(self, lam=None) -> np.ndarray:
        """f in the structural-function representation, |beta|^2/|chi|^2 f_Y."""
        if self.grid is not None and self.describes == "base":
            self._check_grid(lam)
            return self.grid.copy()
        lam = offset_grid(self.grid_size) if lam is None else np.atleast_1d(lam)
        return self.increment_density(lam) / chi_beta_ratio(self.spec.integer_part(), lam)[:, None, None]

    def inverse_weight(self, lam=None) -> np.ndarray:
        """|beta|^2/|chi|^2 f^{-1} = f_Y^{-1}; the bounded |chi^{(D)}|^2 f~^{-1} form when fractional."""
        if self.grid is not None:
            lam = self._check_grid(lam)
            return np.linalg.inv(self.increment_density(lam))
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if self.rank != self.dim:
            raise ValueError("rank-deficient factor: the density is singular")
        phi = self.factor_on(lam)
        inv = np.linalg.inv(phi)
        g = np.conj(np.swapaxes(inv, 1, 2)) @ inv
        if self.describes == "fractional":
            return self._fractional_gain(lam)[:, None, None] * g
        if self.describes == "base":
            return g / chi_beta_ratio(self.spec.integer_part(), lam)[:, None, None]
        return g


# -- Fourier blocks -----------------------------------------------------------

@dataclass
class FourierBlock:
    lags: np.ndarray
    grid_size: int
    error: np.ndarray
    converged: bool = True

    @property
    def max_lag(self) -> int:
        return self.lags.shape[0] - 1

    def lag(self, l: int) -> np.ndarray:
        if l >= 0:
            return self.lags[l]
        return np.conj(self.lags[-l]).T

    def toeplitz(self, K: int) -> np.ndarray:
        """Hermitian block matrix with block (i, j) = F(i - j), i, j = 0..K."""
        if K > self.max_lag:
            raise ValueError(f"need lags up to {K}, block holds {self.max_lag}")
        T = self.lags.shape[1]
        out = np.zeros(((K + 1) * T, (K + 1) * T), dtype=self.lags.dtype)
        for i in range(K + 1):
            for j in range(K + 1):
                out[i * T:(i + 1) * T, j * T:(j + 1) * T] = self.lag(i - j)
        return out


def fourier_lags(values: np.ndarray, max_lag: int, first_node: Optional[float] = None) -> np.ndarray:
    """(1/2pi) int e^{i lam l} g d lam for l = 0..L, trapezoid on uniform nodes.

    The nodes are first_node + j 2pi/N; the default is the offset grid.
    """
    N = values.shape[0]
    if max_lag >= N // 2:
        raise ValueError("max lag must stay below half the grid size")
    lam0 = -np.pi + np.pi / N if first_node is None else first_node
    l = np.arange(max_lag + 1)
    phase = np.exp(1j * l * lam0)
    coef = np.fft.ifft(values, axis=0)[:max_lag + 1]
    return coef * phase.reshape((-1,) + (1,) * (values.ndim - 1))


def _fourier_on(model, max_lag, N):
    lam = offset_grid(N)
    G = model.inverse_weight(lam)
    if not np.all(np.isfinite(G)):
        raise QuadratureError("inverse density is singular on the grid")
    F = fourier_lags(G, max_lag)
    return F, float(np.max(np.abs(G)))


def _aligned_grid(model, N: int) -> int:
    """Round N up so every fractional singular frequency sits at a cell edge.

    Offset nodes lie at cell midpoints, so a frequency 2 pi k / L that falls
    on an unshifted node is never sampled and keeps the same position
    relative to the nodes on the N/2, N and 2N grids.  That keeps the
    half-grid difference a consistent error estimate for |lam - nu|^{2D}.
    """
    lags = [f.lag for f in model.spec.factors if f.D != 0.0]
    if not lags:
        return N
    step = 4 * int(np.lcm.reduce([2] + lags))
    return -(-N // step) * step


def fourier_coeffs(model: SpectralModel, max_lag: int, grid: int = DEFAULT_GRID,
                   tol: float = 1e-10, max_grid: int = 2 ** 20, strict: bool = True) -> FourierBlock:
    """Fourier blocks of f_Y^{-1} with dyadic refinement and a Richardson-type error.

    The error attached to lag l is the change from the half-size grid plus a
    rounding floor; the grid doubles until the largest error is below
    tol * |F(0)|.  With fractional factors the grid is rounded up to a
    multiple of 4 lcm(2, lags) so the singular frequencies stay at cell
    edges on every refinement.  Grid-form models are fixed to their own grid.
    """
    if model.grid is not None:
        N = model.grid_size
        G = model.inverse_weight()
        F = fourier_lags(G, max_lag)
        lam = offset_grid(N)
        coarse = fourier_lags(G[0::2], max_lag, lam[0]) if N >= 4 * (max_lag + 1) else F
        err = np.abs(F - coarse) + 100 * np.finfo(float).eps * float(np.max(np.abs(G)))
        return FourierBlock(_realify(F), N, err, bool(np.max(err) <= tol * max(np.max(np.abs(F[0])), 1e-300)))
    N = _aligned_grid(model, max(int(grid), 4 * (max_lag + 1)))
    F_half, _ = _fourier_on(model, max_lag, N // 2)
    while True:
        F, gmax = _fourier_on(model, max_lag, N)
        err = np.abs(F - F_half) + 100 * np.finfo(float).eps * gmax
        scale = float(np.max(np.abs(F[0])))
        ok = float(np.max(err)) <= tol * scale
        if ok or N >= max_grid:
            break
        F_half = F
        N *= 2
    if not ok and strict:
        raise QuadratureError(
            f"Fourier coefficients did not converge by grid {N} (error {np.max(err):.3e}); "
            "the density may violate the minimality condition")
    return FourierBlock(_realify(F), N, err, ok)


def _realify(F):
    if np.max(np.abs(F.imag)) <= 1e-12 * max(float(np.max(np.abs(F.real))), 1e-300):
        return np.ascontiguousarray(F.real)
    return F


# -- structural function ----------------------------------------------------

def structural_function(model: SpectralModel, m: int, mu1=None, mu2=None,
                        grid: int = DEFAULT_GRID) -> np.ndarray:
    """(1/2pi) int e^{i lam m} chi_{mu1} conj(chi_{mu2}) |beta|^{-2} f d lam."""
    base = model.spec.integer_part()
    mu1 = tuple(mu1) if mu1 is not None else base.steps
    mu2 = tuple(mu2) if mu2 is not None else base.steps
    if model.grid is not None:
        lam = offset_grid(model.grid_size)
    else:
        lam = offset_grid(grid)
    fy = model.increment_density(lam)
    if mu1 != base.steps or mu2 != base.steps:
        c0 = eval_chi(base, lam)
        r1 = eval_chi(base.with_steps(mu1), lam) / c0
        r2 = eval_chi(base.with_steps(mu2), lam) / c0
        fy = fy * (r1 * np.conj(r2))[:, None, None]
    val = np.tensordot(np.exp(1j * lam * m), fy, axes=(0, 0)) / len(lam)
    return _realify(val[None])[0]


# -- factors -------------------------------------------------------------------

def _causal_exp(halfcep: np.ndarray) -> np.ndarray:
    # coefficients of exp(sum_k c_k z^k) on the full circle via FFT
    N = halfcep.shape[0]
    W = np.exp(np.fft.fft(halfcep))
    return np.fft.ifft(W)


def _cepstrum(logvals: np.ndarray) -> np.ndarray:
    N = logvals.shape[0]
    h = 2 * np.pi / N
    k = np.arange(N)
    return np.fft.ifft(logvals) * np.exp(1j * k * (-np.pi + h / 2))


def _outer_from_log(logvals: np.ndarray, length: int) -> tuple:
    N = logvals.shape[0]
    c = _cepstrum(logvals).real
    half = np.zeros(N)
    half[0] = c[0] / 2.0
    half[1:N // 2] = c[1:N // 2]
    w = _causal_exp(half).real
    K = min(int(length), N // 2)
    tail = float(np.sum(np.abs(w[K:N // 2])))
    return w[:K], tail


def w_coefficients(spec: IncrementSpec, length: int, grid: int = 2 ** 18,
                   eps: float = 1e-3 * 2 * np.pi, check_radius: float = 0.05) -> CoefficientSeries:
    """Outer function w with |w(e^{-i lam})|^2 = |chi|^2/|beta|^2, by the cepstral method.

    The log ratio is integrable at uncancelled zeros of chi, so finite nodes
    are used as they are; a node sitting exactly on a zero (log = -inf) is
    replaced by the average log ratio of the finite nodes within eps.  The
    achieved accuracy on off-grid points away from singular frequencies is
    stored in .accuracy.
    """
    ispec = spec.integer_part()
    lam = offset_grid(grid)
    ratio = chi_beta_ratio(ispec, lam)
    with np.errstate(divide="ignore"):
        L = np.log(ratio)
    for nu in singular_frequencies(ispec):
        near = np.abs(lam - nu) < eps
        bad = near & ~np.isfinite(L)
        if np.any(bad):
            good = near & np.isfinite(L)
            L[bad] = np.mean(L[good]) if np.any(good) else -40.0
    w, tail = _outer_from_log(L, length)
    series = CoefficientSeries(w, 0, tail)
    series.accuracy = w_accuracy(series, ispec, check_radius)
    return series


def w_accuracy(w: CoefficientSeries, spec: IncrementSpec, radius: float = 0.05, points: int = 2001) -> float:
    lam = np.linspace(-np.pi, np.pi, points)
    sing = singular_frequencies(spec)
    keep = np.ones(points, bool)
    for nu in list(sing) + [-np.pi, np.pi]:
        keep &= np.abs(lam - nu) > radius
    lam = lam[keep]
    val = np.polynomial.polynomial.polyval(np.exp(-1j * lam), w.values)
    return float(np.max(np.abs(np.abs(val) ** 2 - chi_beta_ratio(spec, lam))))


def mu_factor(model: SpectralModel, length: int, w_grid: int = 2 ** 18) -> FactorSeries:
    """phi_mu(0..length-1), the causal factor of f_Y."""
    K = int(length)
    if model.grid is not None:
        if model.dim != 1:
            raise ValueError("matrix grid densities are not factorized; supply an MA-form model")
        ma = factorize_scalar(model, K, target="increment")
        return FactorSeries(ma.ma[:K], ma.tail_bound)
    phi, tail = ar_ma_expand(model.ma, model.ar, K)
    if model.describes == "increment":
        return FactorSeries(phi, tail + model.tail_bound)
    if model.describes == "fractional":
        g = gi_coefficients(model.spec.fractional_part(), +1, K - 1)
        out = np.zeros_like(phi)
        for k in range(K):
            out[k] = np.tensordot(g.values[k::-1], phi[:k + 1], axes=(0, 0))
        return FactorSeries(out, g.tail_bound * max(1.0, float(np.sum(np.abs(phi)))) + tail)
    w = w_coefficients(model.spec, K, w_grid)
    out = np.zeros_like(phi)
    for k in range(K):
        out[k] = np.tensordot(w.values[k::-1], phi[:k + 1], axes=(0, 0))
    return FactorSeries(out, w.tail_bound * max(1.0, float(np.sum(np.abs(phi)))) + tail, w=w)


def invert_factor(factor: FactorSeries, length: Optional[int] = None) -> FactorSeries:
    """Psi_mu with sum_i psi(i) phi(k-i) = delta_k I, power-series inverse."""
    phi = factor.phi
    T, q = phi.shape[1], phi.shape[2]
    if q != T:
        raise ValueError("only square factors (q = T) can be inverted")
    if abs(np.linalg.det(phi[0])) < 1e-14:
        raise ValueError("leading factor coefficient is singular")
    K = phi.shape[0] if length is None else int(length)
    p0inv = np.linalg.inv(phi[0])
    psi = np.zeros((K, T, T))
    psi[0] = p0inv
    for k in range(1, K):
        acc = np.zeros((T, T))
        for i in range(max(0, k - phi.shape[0] + 1), k):
            acc += psi[i] @ phi[k - i]
        psi[k] = -acc @ p0inv
    return FactorSeries(phi, factor.tail_bound, psi, _series_tail(psi), factor.w)


def factorize_scalar(model: SpectralModel, length: int, target: str = "same") -> SpectralModel:
    """Kolmogorov cepstral factor of a scalar grid density.

    target="same" factors the stored grid; target="increment" factors f_Y.
    """
    if model.grid is None or model.dim != 1:
        raise ValueError("factorize_scalar needs a scalar grid-form model")
    vals = model.grid[:, 0, 0].real if target == "same" else model.increment_density()[:, 0, 0].real
    if np.min(vals) <= 0.0:
        raise ValueError("density must be strictly positive on the grid")
    phi, tail = _outer_from_log(np.log(vals), length)
    describes = model.describes if target == "same" else "increment"
    out = SpectralModel.from_ma(model.spec, phi, describes=describes, name=model.name)
    out.tail_bound = tail
    recon = np.abs(_poly_on_grid(phi[:, None, None], offset_grid(len(vals)))[:, 0, 0]) ** 2
    out.meta["reconstruction_error"] = float(np.max(np.abs(recon - vals) / vals))
    return out


# -- minimality ----------------------------------------------------------------

def minimality_check(model: SpectralModel, grid: int = 2 ** 10, max_grid: int = 2 ** 20,
                     rtol: float = 1e-8) -> tuple:
    """Integral of Tr f_Y^{-1} under dyadic refinement: (finite?, estimate).

    Finite when successive estimates settle, or their differences shrink by a
    factor below 0.9 per doubling (so the remaining tail is summable);
    infinite when the differences stop shrinking.
    """
    if model.grid is not None:
        G = model.inverse_weight()
        val = float(np.mean(np.trace(G, axis1=1, axis2=2).real))
        finite = bool(np.isfinite(val))
        model.minimal = finite
        return finite, val
    N = grid
    vals = []
    while N <= max_grid:
        G = model.inverse_weight(offset_grid(N))
        vals.append(float(np.mean(np.trace(G, axis1=1, axis2=2).real)))
        if not np.isfinite(vals[-1]):
            model.minimal = False
            return False, float("inf")
        if len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= rtol * abs(vals[-1]):
            model.minimal = True
            return True, vals[-1]
        if len(vals) >= 4:
            d1 = abs(vals[-2] - vals[-3])
            d2 = abs(vals[-1] - vals[-2])
            d0 = abs(vals[-3] - vals[-4])
            if d2 >= 0.9 * d1 and d1 >= 0.9 * d0:
                model.minimal = False
                return False, vals[-1]
        N *= 2
    d1 = abs(vals[-1] - vals[-2])
    d0 = abs(vals[-2] - vals[-3])
    r = d1 / d0 if d0 > 0 else 0.0
    finite = r < 0.9
    est = vals[-1] + (d1 * r / (1 - r) if finite and r > 0 else 0.0)
    model.minimal = bool(finite)
    return bool(finite), est
