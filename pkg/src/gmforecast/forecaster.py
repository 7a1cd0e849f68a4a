"""Optimal linear forecasts of functionals of future blocks.

The target A xi = sum_{m>=0} a(m)^T xi(m) is rewritten as
B chi xi - V xi with

    b(k) = sum_{m>=k} d(m-k) a(m),
    v(k) = sum_{l=0}^{k+n} e(l-k) b(l),    k = -n..-1,

so only the stationary increments enter the projection and V xi is a known
combination of observed initial values.  Two solvers project B chi xi on the
observed increments:

classical   Fourier blocks Q(l) of f_Y^{-1} give the block-Toeplitz system
            Q c = b on indices 0..K; MSE = <b, c>.
factorized  With Y = sum phi(k) eps(. - k), r(k) = sum_m phi(m)^T b(m+k) and
            MSE = sum ||r(k)||^2.

Both deliver time-domain weights s(k), k >= 1, applied to observed
increments: A^ = sum_k s(k)^T chi xi(-k) - sum_k v(k)^T xi(k).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .blocking import FunctionalSpec, VectorSeries, block_weights
from .increment_algebra import IncrementSpec, expand_inverse, expand_operator
from .spectral import (
    DEFAULT_GRID,
    SpectralModel,
    _series_tail,
    fourier_coeffs,
    invert_factor,
    mu_factor,
)

COND_MAX = 1e12


class IllConditioned(RuntimeError):
    pass


@dataclass
class LiftedFunctional:
    spec: IncrementSpec
    a: np.ndarray
    b: np.ndarray
    v: np.ndarray
    finite: bool = True
    tail_bound: float = 0.0

    @property
    def N(self) -> int:
        return self.a.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    @property
    def order(self) -> int:
        return self.v.shape[0]

    def v_at(self, k: int) -> np.ndarray:
        n = self.order
        if not -n <= k <= -1:
            raise IndexError(k)
        return self.v[k + n]


def _lift_rows(spec: IncrementSpec, a: np.ndarray) -> tuple:
    N, T = a.shape[0] - 1, a.shape[1]
    d = expand_inverse(spec, N).values.astype(float)
    e = expand_operator(spec).values.astype(float)
    n = len(e) - 1
    b = np.zeros_like(a)
    for k in range(N + 1):
        b[k] = d[:N + 1 - k] @ a[k:]
    v = np.zeros((n, T))
    for i, k in enumerate(range(-n, 0)):
        for l in range(0, min(N, k + n) + 1):
            v[i] += e[l - k] * b[l]
    return b, v


def _lift_geometric(ispec, weights, T):
    # the weight certificate fixes a first horizon; it is then extended until
    # the lifted b and v stop changing (to weights.tol) against a doubled one
    N, cert = weights.certified_blocks(T)
    while True:
        a = block_weights(weights, T, (N + 1) * T - 1)
        b, v = _lift_rows(ispec, a)
        N2 = 2 * N + 4
        a2 = block_weights(weights, T, (N2 + 1) * T - 1)
        b2, v2 = _lift_rows(ispec, a2)
        gap = max(float(np.max(np.abs(b2[:N + 1] - b))), float(np.max(np.abs(b2[N + 1:]))),
                  float(np.max(np.abs(v2 - v))) if v.size else 0.0)
        if gap < weights.tol or N > 100000:
            return LiftedFunctional(ispec, a, b, v, False, max(gap, cert))
        N = N2


def lift_functional(spec: IncrementSpec, weights: Union[FunctionalSpec, np.ndarray],
                    T: Optional[int] = None, M: Optional[int] = None) -> LiftedFunctional:
    """b and v for blocked target weights (rows) or a scalar FunctionalSpec plus T."""
    ispec = spec.integer_part()
    if isinstance(weights, FunctionalSpec):
        if weights.rows is None and T is None:
            raise ValueError("a scalar functional needs the period T")
        if weights.is_infinite and M is None:
            return _lift_geometric(ispec, weights, int(T))
        a = block_weights(weights, T or weights.rows.shape[1], M)
    else:
        a = np.asarray(weights, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
    b, v = _lift_rows(ispec, a)
    return LiftedFunctional(ispec, a, b, v, True, 0.0)


def increments_of(path: VectorSeries, spec: IncrementSpec, lo: int, hi: int) -> np.ndarray:
    """chi xi(k) for k = lo..hi-1 from a path covering lo-n..hi-1."""
    e = expand_operator(spec.integer_part()).values.astype(float)
    n = len(e) - 1
    rows = path.window(lo - n, hi)
    out = np.zeros((hi - lo, path.dim))
    for j, c in enumerate(e):
        if c:
            out += c * rows[n - j:n - j + hi - lo]
    return out


def functional_value(lifted: LiftedFunctional, path: VectorSeries) -> float:
    """A_N xi = sum_m a(m)^T xi(m) directly."""
    return float(np.sum(lifted.a * path.window(0, lifted.N + 1)))


def representation_value(lifted: LiftedFunctional, path: VectorSeries) -> float:
    """B_N chi xi - V_N xi from the lifted coefficients."""
    inc = increments_of(path, lifted.spec, 0, lifted.N + 1)
    n = lifted.order
    init = path.window(-n, 0) if n else np.zeros((0, lifted.dim))
    return float(np.sum(lifted.b * inc) - np.sum(lifted.v * init))


@dataclass
class ForecastSolution:
    method: str
    delta: float
    s: np.ndarray
    lifted: LiftedFunctional
    c: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    report: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return self.lifted.v

    @property
    def history_needed(self) -> int:
        return self.s.shape[0] + self.lifted.order

    def level_weights(self) -> np.ndarray:
        """w(m), m = -H..-1 (row 0 is m = -H), with A^ = sum_m w(m)^T xi(m)."""
        e = expand_operator(self.lifted.spec).values.astype(float)
        n = len(e) - 1
        Ks = self.s.shape[0]
        H = Ks + n
        w = np.zeros((H, self.lifted.dim))
        for k in range(1, Ks + 1):
            for j, cj in enumerate(e):
                if cj:
                    w[H - k - j] += cj * self.s[k - 1]
        for i, k in enumerate(range(-n, 0)):
            w[H + k] -= self.lifted.v[i]
        return w


def _s_length(default, lifted):
    return int(default) if default is not None else 256


def solve_classical(model: SpectralModel, lifted: LiftedFunctional, K: int = 256,
                    grid: int = DEFAULT_GRID, s_length: Optional[int] = None,
                    cond_max: float = COND_MAX, block=None) -> ForecastSolution:
    """Truncated block-Toeplitz system Q c = b on indices 0..K, Cholesky solve."""
    T = lifted.dim
    if model.dim != T:
        raise ValueError(f"model dimension {model.dim} does not match functional dimension {T}")
    if lifted.N > K:
        raise ValueError(f"truncation K = {K} is below the functional support N = {lifted.N}")
    Ks = _s_length(s_length, lifted)
    if block is None:
        block = fourier_coeffs(model, K + Ks, grid=grid)
    Q = block.toeplitz(K)
    if np.iscomplexobj(Q):
        Q = Q.real if np.max(np.abs(Q.imag)) < 1e-12 * np.max(np.abs(Q.real)) else Q
    bvec = np.zeros((K + 1) * T)
    bvec[:(lifted.N + 1) * T] = lifted.b.ravel()
    if not np.any(bvec):
        return ForecastSolution("classical", 0.0, np.zeros((Ks, T)), lifted,
                                c=np.zeros((K + 1, T)), report={"K": K, "grid": block.grid_size})
    try:
        cf = linalg.cho_factor(Q, lower=True)
    except linalg.LinAlgError as exc:
        raise IllConditioned("Fourier block matrix is not positive definite") from exc
    anorm = float(np.max(np.sum(np.abs(Q), axis=0)))
    if np.iscomplexobj(Q):
        rcond = 1.0 / np.linalg.cond(Q)
    else:
        rcond, _ = linalg.lapack.dpocon(cf[0], anorm, uplo="L")
    cond = 1.0 / rcond if rcond > 0 else float("inf")
    if cond > cond_max:
        raise IllConditioned(f"condition estimate {cond:.3e} exceeds {cond_max:.1e}")
    cvec = linalg.cho_solve(cf, bvec)
    delta = float(np.real(bvec @ cvec))
    c = cvec.reshape(K + 1, T)
    # s(k) = -sum_j Q(-(j+k)) c(j), with Q(-l) = Q(l)^T for real sequences
    lagsT = np.swapaxes(np.real(block.lags), 1, 2)
    cr = np.real(c)
    s = np.array([-np.einsum("jab,jb->a", lagsT[k:k + K + 1], cr) for k in range(1, Ks + 1)])
    report = {"K": K, "grid": block.grid_size, "condition": cond,
              "quadrature_error": float(np.max(block.error)), "s_tail": _series_tail(s)}
    return ForecastSolution("classical", max(delta, 0.0), s, lifted, c=np.real(c), report=report)


def solve_factorized(model: SpectralModel, lifted: LiftedFunctional,
                     s_length: Optional[int] = None, factor=None) -> ForecastSolution:
    """r(k) = sum_m phi_mu(m)^T b(m+k), MSE = sum ||r(k)||^2, weights through Psi_mu."""
    T = lifted.dim
    if model.dim != T:
        raise ValueError(f"model dimension {model.dim} does not match functional dimension {T}")
    N = lifted.N
    Ks = _s_length(s_length, lifted)
    if factor is None:
        factor = mu_factor(model, N + Ks + 1)
    phi = factor.phi
    if phi.shape[0] < N + 1:
        raise ValueError("factor series shorter than the functional support")
    q = phi.shape[2]
    r = np.zeros((N + 1, q))
    for k in range(N + 1):
        for m in range(N - k + 1):
            r[k] += phi[m].T @ lifted.b[m + k]
    delta = float(np.sum(r * r))
    report = {"factor_tail": factor.tail_bound}
    s = np.zeros((Ks, T))
    if q == T and np.any(r):
        inv = invert_factor(factor, N + Ks + 1) if factor.psi is None else factor
        psi = inv.psi
        for k in range(1, Ks + 1):
            acc = np.zeros(T)
            for j in range(N + 1):
                if j + k < psi.shape[0]:
                    acc -= psi[j + k].T @ r[j]
            s[k - 1] = acc
        report["psi_tail"] = inv.psi_tail
        report["s_tail"] = _series_tail(s)
    elif q != T:
        report["weights"] = "unavailable for q != T"
    return ForecastSolution("factorized", delta, s, lifted, r=r, report=report)


def solve(model, lifted, method: str = "auto", **kw) -> ForecastSolution:
    if method == "auto":
        method = "factorized" if model.is_ma or model.dim == 1 else "classical"
    if method == "factorized":
        return solve_factorized(model, lifted, s_length=kw.get("s_length"))
    if method == "classical":
        return solve_classical(model, lifted, K=kw.get("K", 256), grid=kw.get("grid", DEFAULT_GRID),
                               s_length=kw.get("s_length"))
    raise ValueError(f"unknown method {method!r}")


def forecast_value(model: SpectralModel, N: int, p: int, method: str = "factorized",
                   s_length: Optional[int] = None, **kw) -> ForecastSolution:
    """Forecast of the single component xi_p(N), p = 1..T."""
    T = model.dim
    if not 1 <= p <= T:
        raise ValueError(f"component p must be in 1..{T}")
    a = np.zeros((N + 1, T))
    a[N, p - 1] = 1.0
    lifted = lift_functional(model.spec, a)
    sol = solve(model, lifted, method, s_length=s_length, **kw)
    min_lag = min(f.lag for f in model.spec.factors if f.R > 0) if model.spec.order else np.inf
    if min_lag > N and method == "factorized":
        phi = mu_factor(model, N + 1).phi
        sol.report["single_value_sum"] = float(np.sum(phi[:N + 1, p - 1, :] ** 2))
        sol.delta = sol.report["single_value_sum"]
    return sol


def apply_predictor(solution: ForecastSolution, history: VectorSeries, tail_tol: float = 1e-12) -> float:
    """A^ from the observed blocks m <= -1.

    Level weights older than the supplied history may be dropped when their
    largest entry is below tail_tol * max(1, max |w|); otherwise the history
    is rejected as too short.
    """
    w = solution.level_weights()
    H = w.shape[0]
    if history.stop < 0:
        raise ValueError(f"history must reach block -1, it ends at {history.stop - 1}")
    avail = min(H, -history.start)
    dropped = float(np.max(np.abs(w[:H - avail]), initial=0.0))
    if dropped > tail_tol * max(1.0, float(np.max(np.abs(w)))):
        raise ValueError(f"predictor needs blocks {-H}..-1, history covers "
                         f"{history.start}..{history.stop - 1}")
    return float(np.sum(w[H - avail:] * history.window(-avail, 0)))


def forecast_scalar_functional(model: SpectralModel, weights: FunctionalSpec, T: Optional[int] = None,
                               M: Optional[int] = None, method: str = "auto", **kw) -> ForecastSolution:
    T = int(T or model.dim)
    if model.dim != T:
        raise ValueError("model dimension must equal the period T")
    lifted = lift_functional(model.spec, weights, T, M)
    return solve(model, lifted, method, **kw)


def forecast_scalar_value(model: SpectralModel, M: int, method: str = "factorized", **kw) -> ForecastSolution:
    """Forecast of zeta(M): N = floor(M/T), p = M + 1 - NT."""
    T = model.dim
    N = M // T
    p = M + 1 - N * T
    sol = forecast_value(model, N, p, method, **kw)
    sol.report["block"] = N
    sol.report["component"] = p
    return sol
