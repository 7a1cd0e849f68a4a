"""Seeded generators for periodic increment models and Monte Carlo oracles.

Innovations are standard normal draws from numpy's PCG64 bit generator, so a
seed reproduces the same path on every platform numpy supports.  The
stationary increment Y is generated first (exact recursion after a burn-in,
or a truncated moving average when fractional orders are present) and the
levels are then integrated forward from zero initial values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .blocking import FunctionalSpec, ScalarSeries, VectorSeries, unblock
from .forecaster import ForecastSolution, LiftedFunctional, apply_predictor, functional_value
from .increment_algebra import Factor, IncrementSpec, expand_operator
from .spectral import SpectralModel, mu_factor

FAMILIES = ("SPAR11", "PeriodicMA2Seasonal", "PSARIMA", "WhiteNoise")
FRACTIONAL_TAIL = 1e-6
MAX_MA_LENGTH = 2 ** 14


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class ModelRecipe:
    """Parameters of one simulated model family.

    SPAR11               X_t = phi(v) X_{t-1} + alpha(v) X_{t-T} - phi(v) alpha(v) X_{t-T-1} + eps_t,
                         blocked from X_1 (component v of block m is X_{mT+v}).
    PeriodicMA2Seasonal  (1-B^s)^{1+D0} (1-B^{us})^{1+D1} x(t) = eps(t) - a0 eps(t-1) - a_{i(t)} eps(t-s)
                         with T = s.
    PSARIMA              block model given by an increment spec, MA and AR matrices.
    WhiteNoise           independent N(0, scale^2) values with period T.
    """
    family: str
    T: int = 1
    phi: Optional[Sequence[float]] = None
    alpha: Optional[Sequence[float]] = None
    s: Optional[int] = None
    u: Optional[int] = None
    a0: float = 0.0
    a: Optional[Sequence[float]] = None
    D0: float = 0.0
    D1: float = 0.0
    spec: Optional[dict] = None
    ma: Optional[list] = None
    ar: Optional[list] = None
    describes: str = "increment"
    rho: Optional[float] = None
    scale: float = 1.0
    seed: int = 0
    burn_in: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.scale < 0:
            raise ValueError("innovation scale must be non-negative")
        if self.family == "SPAR11":
            if self.phi is None:
                raise ValueError("SPAR11 needs phi(v)")
            self.phi = [float(x) for x in self.phi]
            self.T = len(self.phi)
            self.alpha = [1.0] * self.T if self.alpha is None else [float(x) for x in self.alpha]
            if len(self.alpha) != self.T:
                raise ValueError("alpha(v) must have T entries")
            if np.prod(np.abs(self.phi)) >= 1.0:
                raise ValueError("SPAR11 needs prod |phi(v)| < 1")
            unit = [x == 1.0 for x in self.alpha]
            if any(unit) and not all(unit):
                raise ValueError("alpha(v) must be all 1 (integrated) or all inside (-1, 1)")
            if not all(unit) and max(abs(x) for x in self.alpha) >= 1.0:
                raise ValueError("SPAR11 needs |alpha(v)| < 1 unless alpha is identically 1")
        elif self.family == "PeriodicMA2Seasonal":
            if self.s is None or self.u is None or self.a is None:
                raise ValueError("PeriodicMA2Seasonal needs s, u and a_1..a_s")
            self.a = [float(x) for x in self.a]
            if len(self.a) != self.s:
                raise ValueError("a must hold s coefficients")
            self.T = int(self.s)
            for D in (self.D0, self.D1):
                if not -0.5 < D < 0.5:
                    raise ValueError("fractional orders D0, D1 must lie in (-1/2, 1/2)")
        elif self.family == "PSARIMA":
            if self.spec is None or self.ma is None:
                raise ValueError("PSARIMA needs an increment spec and MA matrices")
        if self.burn_in is not None and self.burn_in < self.mixing_length():
            raise ValueError(f"burn-in {self.burn_in} is below the mixing length {self.mixing_length()}")

    # -- model view
    def increment_spec(self) -> IncrementSpec:
        if self.family == "SPAR11":
            R = 1 if self.alpha[0] == 1.0 else 0
            return IncrementSpec.of(Factor(1, 1, R))
        if self.family == "PeriodicMA2Seasonal":
            return IncrementSpec.of(Factor(1, 1, 1, self.D0), Factor(1, self.u, 1, self.D1))
        if self.family == "PSARIMA":
            return IncrementSpec.from_dict(self.spec)
        return IncrementSpec.of(Factor(1, 1, 0))

    def matrices(self) -> tuple:
        """(MA, AR or None, describes) of the block model of the increment."""
        T = self.T
        if self.family == "SPAR11":
            phi = np.array(self.phi)
            P0 = np.eye(T)
            for r in range(1, T):
                P0[r, r - 1] = -phi[r]
            P1 = np.zeros((T, T))
            P1[0, T - 1] = -phi[0]
            if T == 1:
                P1[0, 0] = -phi[0]
            if self.alpha[0] == 1.0:
                ar = np.stack([P0, P1])
            else:
                A = np.diag(self.alpha)
                ar = np.stack([P0, P1 - A @ P0, -A @ P1])
            return self.scale * np.eye(T)[None], ar, "increment"
        if self.family == "PeriodicMA2Seasonal":
            s = T
            F0 = np.eye(s)
            for p in range(1, s):
                F0[p, p - 1] = -self.a0
            F1 = -np.diag(self.a)
            F1[0, s - 1] -= self.a0
            describes = "fractional" if (self.D0 or self.D1) else "increment"
            return self.scale * np.stack([F0, F1]), None, describes
        if self.family == "PSARIMA":
            ma = self.scale * np.asarray(self.ma, dtype=float)
            if ma.ndim == 1:
                ma = ma[:, None, None]
            ar = None if self.ar is None else np.asarray(self.ar, dtype=float)
            if ar is not None and ar.ndim == 1:
                ar = ar[:, None, None]
            return ma, ar, self.describes
        return self.scale * np.eye(T)[None], None, "increment"

    def model(self) -> SpectralModel:
        ma, ar, describes = self.matrices()
        if ar is not None:
            _check_stable(ar)
        return SpectralModel.from_ma(self.increment_spec(), ma, ar, describes=describes, name=self.family)

    def mixing_length(self) -> int:
        """Blocks after which an AR start-up transient is below 1e-12 (0 without AR)."""
        _, ar, _ = self.matrices()
        if ar is None:
            return 0
        r = _spectral_radius(ar)
        if r == 0.0:
            return ar.shape[0]
        return int(np.ceil(np.log(1e-12) / np.log(r))) + ar.shape[0]

    def default_burn_in(self) -> int:
        spec = self.increment_spec()
        longest = max(f.lag for f in spec.factors)
        return int(max(10 * longest, self.mixing_length()))

    def default_functional(self) -> Optional[FunctionalSpec]:
        """The discounted functional a(k) = rho^{k+1} when rho is given."""
        if self.rho is None:
            return None
        return FunctionalSpec.geometric([self.rho], self.rho)

    def to_dict(self) -> dict:
        doc = asdict(self)
        return {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in doc.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelRecipe":
        return cls(**doc)


def _companion(ar):
    A0inv = np.linalg.inv(ar[0])
    p, T = ar.shape[0] - 1, ar.shape[1]
    if p == 0:
        return np.zeros((T, T))
    top = np.hstack([-A0inv @ ar[j] for j in range(1, p + 1)])
    if p == 1:
        return top
    low = np.hstack([np.eye(T * (p - 1)), np.zeros((T * (p - 1), T))])
    return np.vstack([top, low])


def _spectral_radius(ar) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(_companion(ar)))))


def _check_stable(ar):
    r = _spectral_radius(ar)
    if r >= 1.0:
        raise ValueError(f"AR part is not stable (spectral radius {r:.6f})")


def recipe_model(recipe: ModelRecipe) -> SpectralModel:
    return recipe.model()


def _ma_length(model: SpectralModel) -> tuple:
    K = 64
    while True:
        fac = mu_factor(model, K)
        if fac.tail_bound < FRACTIONAL_TAIL or K >= MAX_MA_LENGTH:
            return fac.phi, fac.tail_bound
        K *= 2


def simulate_increments(recipe: ModelRecipe, n_blocks: int, reps: int = 1, seed=None,
                        innovations: Optional[np.ndarray] = None) -> tuple:
    """Y(m) for n_blocks consecutive blocks, shape (reps, n_blocks, T), and a report.

    Innovations may be supplied with shape (reps, burn + n_blocks, q); by
    default they are standard normal from PCG64(seed).
    """
    model = recipe.model()
    ma, ar, describes = recipe.matrices()
    T, q = model.dim, model.rank
    seed = recipe.seed if seed is None else seed
    report = {"generator": "numpy PCG64", "seed": seed}
    if describes != "increment":
        phi, tail = _ma_length(model)
        burn = phi.shape[0] - 1
        report.update(method="truncated MA", ma_length=phi.shape[0], tail_bound=tail)
        ar_eff = None
    else:
        phi = ma
        ar_eff = ar
        burn = recipe.burn_in if recipe.burn_in is not None else recipe.default_burn_in()
        burn = max(burn, phi.shape[0] - 1)
        report.update(method="recursion", burn_in=burn)
    total = burn + n_blocks
    if innovations is None:
        eps = make_rng(seed).standard_normal((reps, total, q))
    else:
        eps = np.asarray(innovations, dtype=float)
        if eps.shape != (reps, total, q):
            raise ValueError(f"innovations must have shape {(reps, total, q)}")
    X = np.zeros((reps, total, T))
    for k in range(phi.shape[0]):
        X[:, k:] += np.einsum("ij,rmj->rmi", phi[k], eps[:, :total - k])
    if ar_eff is not None:
        A0inv = np.linalg.inv(ar_eff[0])
        Y = np.zeros_like(X)
        for m in range(total):
            acc = X[:, m].copy()
            for j in range(1, min(m, ar_eff.shape[0] - 1) + 1):
                acc -= Y[:, m - j] @ ar_eff[j].T
            Y[:, m] = acc @ A0inv.T
        X = Y
    return X[:, burn:], report


def integrate_levels(Y: np.ndarray, spec: IncrementSpec) -> np.ndarray:
    """Levels xi with chi xi = Y and the first n levels set to zero; shape (reps, n + L, T)."""
    e = expand_operator(spec.integer_part()).values.astype(float)
    n = len(e) - 1
    reps, L, T = Y.shape
    xi = np.zeros((reps, n + L, T))
    for m in range(L):
        acc = Y[:, m].copy()
        for j in range(1, n + 1):
            if e[j]:
                acc -= e[j] * xi[:, n + m - j]
        xi[:, n + m] = acc
    return xi


def simulate_blocks(recipe: ModelRecipe, n_blocks: int, start: int = 0, reps: int = 1,
                    seed=None) -> tuple:
    """Block paths xi(start), ..., xi(start + n_blocks - 1) for reps replications.

    The first n blocks (n = increment order) are the zero initial values.
    """
    spec = recipe.increment_spec()
    n = spec.order
    if n_blocks <= n:
        raise ValueError(f"need more than {n} blocks")
    Y, report = simulate_increments(recipe, n_blocks - n, reps, seed)
    report["initial_values"] = "zero"
    report["start"] = start
    return integrate_levels(Y, spec), report


def simulate(recipe: ModelRecipe, length: int, seed=None, start: int = 0) -> ScalarSeries:
    """Scalar path of `length` values (a whole number of periods) starting at `start`."""
    T = recipe.T
    if length % T or start % T:
        raise ValueError(f"length and start must be multiples of the period {T}")
    xi, _ = simulate_blocks(recipe, length // T, start // T, 1, seed)
    return unblock(VectorSeries(xi[0], start // T))


# -- oracles -------------------------------------------------------------------

def increment_autocov(model: SpectralModel, max_lag: int, length: int = 4096) -> np.ndarray:
    """R(l) = E[Y(m+l) Y(m)^T] = sum_k phi(k+l) phi(k)^T from the causal factor."""
    phi = mu_factor(model, length).phi
    K = phi.shape[0]
    out = np.zeros((max_lag + 1, model.dim, model.dim))
    for l in range(max_lag + 1):
        out[l] = np.einsum("kij,klj->il", phi[l:], phi[:K - l])
    return out


def _joint_cov(R, idx):
    T = R.shape[1]
    n = len(idx)
    G = np.zeros((n * T, n * T))
    for a, i in enumerate(idx):
        for c, j in enumerate(idx):
            l = i - j
            G[a * T:(a + 1) * T, c * T:(c + 1) * T] = R[l] if l >= 0 else R[-l].T
    return G


def brute_force_projection(source, lifted: LiftedFunctional, P: int, ensemble: Optional[int] = None,
                           seed: int = 0) -> dict:
    """Finite-past least-squares oracle: MSE of B chi xi given Y(-1), ..., Y(-P).

    source is a ModelRecipe or SpectralModel.  Exact second moments come
    from the causal factor; with `ensemble` set (recipe only) the moments
    are estimated from that many simulated paths.  The V xi part of the
    target is known from the initial values, so this is also the MSE of A xi
    given the observed levels.
    """
    b = lifted.b
    N, T = b.shape[0] - 1, b.shape[1]
    idx = list(range(N + 1)) + list(range(-P, 0))
    if ensemble is None:
        model = source.model() if isinstance(source, ModelRecipe) else source
        R = increment_autocov(model, N + P + 1)
        G = _joint_cov(R, idx)
        method = "exact moments"
    else:
        if not isinstance(source, ModelRecipe):
            raise ValueError("empirical moments need a recipe to simulate from")
        Y, _ = simulate_increments(source, N + P + 1, ensemble, seed)
        Z = np.concatenate([Y[:, P:], Y[:, :P]], axis=1).reshape(ensemble, -1)
        G = Z.T @ Z / ensemble
        method = f"empirical moments, ensemble {ensemble}"
    nf = (N + 1) * T
    x = b.ravel()
    var = float(x @ G[:nf, :nf] @ x)
    if P == 0:
        return {"P": 0, "mse": var, "variance": var, "method": method}
    cov = x @ G[:nf, nf:]
    coef = np.linalg.solve(G[nf:, nf:], cov)
    return {"P": P, "mse": float(var - cov @ coef), "variance": var, "method": method}


def _history_blocks(solution: ForecastSolution) -> int:
    return solution.history_needed


def monte_carlo_errors(recipe: ModelRecipe, solution: ForecastSolution, reps: int, seed: int = 0,
                       batch: int = 2000) -> tuple:
    """Per-replication errors A xi - A^ and the increments Y(-1..-L) they should be orthogonal to."""
    lifted = solution.lifted
    H = _history_blocks(solution)
    N = lifted.N
    n_blocks = H + N + 1
    rng_seeds = np.random.SeedSequence(seed).spawn((reps + batch - 1) // batch)
    errors = []
    for bseed, i0 in zip(rng_seeds, range(0, reps, batch)):
        nb = min(batch, reps - i0)
        xi, _ = simulate_blocks(recipe, n_blocks, -H, nb, bseed)
        for r in range(nb):
            path = VectorSeries(xi[r], -H)
            errors.append(functional_value(lifted, path) - apply_predictor(solution, path))
    return np.array(errors)


def monte_carlo_mse(recipe: ModelRecipe, solution: ForecastSolution, reps: int = 10000,
                    seed: int = 0, batch: int = 2000) -> dict:
    """Empirical MSE of the predictor with its standard error."""
    if reps < 2:
        raise ValueError("need at least two replications")
    err = monte_carlo_errors(recipe, solution, reps, seed, batch)
    sq = err ** 2
    mse = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / np.sqrt(reps))
    z = (mse - solution.delta) / se if se > 0 else (0.0 if mse == solution.delta else np.inf)
    return {"reps": reps, "seed": seed, "mse": mse, "se": se, "delta": solution.delta,
            "z": float(z), "within_3se": bool(abs(z) <= 3.0), "mean_error": float(np.mean(err))}


def orthogonality_check(recipe: ModelRecipe, solution: ForecastSolution, reps: int = 10000,
                        lags: Sequence[int] = (1, 2, 3), seed: int = 0) -> dict:
    """E[(A xi - A^) Y(-k)] should vanish: sup |z-score| over lags and components."""
    lifted = solution.lifted
    H = solution.history_needed
    N = lifted.N
    xi, _ = simulate_blocks(recipe, H + N + 1, -H, reps, seed)
    spec = recipe.increment_spec()
    e = expand_operator(spec.integer_part()).values.astype(float)
    n = len(e) - 1
    w = solution.level_weights()
    a = lifted.a
    target = np.einsum("rmt,mt->r", xi[:, H:H + N + 1], a)
    pred = np.einsum("rmt,mt->r", xi[:, :H], w)
    err = target - pred
    out = {}
    worst = 0.0
    for k in range(1, max(lags) + 1):
        if k not in lags:
            continue
        m = H - k  # array row of block -k
        Yk = sum(e[j] * xi[:, m - j] for j in range(n + 1))
        prod = err[:, None] * Yk
        mean = prod.mean(axis=0)
        se = prod.std(axis=0, ddof=1) / np.sqrt(reps)
        z = np.abs(mean) / np.where(se > 0, se, 1.0)
        out[k] = {"mean": mean.tolist(), "se": se.tolist()}
        worst = max(worst, float(np.max(z)))
    return {"lags": out, "max_z": worst, "passed": bool(worst <= 3.5), "reps": reps}


def empirical_structural_function(recipe: ModelRecipe, lags: Sequence[int], samples: int = 100000,
                                  seed: int = 0) -> dict:
    """E[Y(m+l) Y(m)^T] from independent short paths, with elementwise standard errors."""
    lags = list(lags)
    L = max(abs(l) for l in lags)
    Y, _ = simulate_increments(recipe, L + 1, samples, seed)
    out = {}
    for l in lags:
        if l >= 0:
            prod = np.einsum("ri,rj->rij", Y[:, l], Y[:, 0])
        else:
            prod = np.einsum("ri,rj->rij", Y[:, 0], Y[:, -l])
        out[l] = (prod.mean(axis=0), prod.std(axis=0, ddof=1) / np.sqrt(samples))
    return out


# -- named fixtures --------------------------------------------------------------

def periodic_ar_fixture(T: int = 4, phi=(0.4, -0.3, 0.2, 0.1), rho: float = 0.5) -> ModelRecipe:
    """Integrated periodic AR(1) with discount functional (alpha = 1)."""
    return ModelRecipe("SPAR11", T=T, phi=list(phi)[:T], rho=rho)


def seasonal_ma_fixture(s: int = 7, u: int = 4, a0: float = 0.4, D0: float = 0.0, D1: float = 0.0) -> ModelRecipe:
    """Periodic MA with weekly and seasonal differencing, a_k = 0.1 k / s."""
    return ModelRecipe("PeriodicMA2Seasonal", s=s, u=u, a0=a0, a=[0.1 * k / s for k in range(1, s + 1)],
                       D0=D0, D1=D1)


def seasonal_ma_functional(s: int = 7, share: float = 0.3) -> np.ndarray:
    """Blocked weights: share/s on the current block, (1-share)/s on the next one."""
    return np.array([share / s * np.ones(s), (1 - share) / s * np.ones(s)])
