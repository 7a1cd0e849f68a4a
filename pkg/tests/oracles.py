"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test. Each routine takes the slow,
literal route (dictionaries of Python ints, mpmath sums, dense covariance
algebra) so that agreement with the fast library path means something.
"""
import itertools
from math import comb

import mpmath
import numpy as np


def naive_operator_product(factors):
    """Coefficients of prod (1 - x^{mu*s})^R by repeated multiplication, exact ints."""
    poly = {0: 1}
    for mu, s, R in factors:
        lag = mu * s
        for _ in range(R):
            nxt = {}
            for k, c in poly.items():
                nxt[k] = nxt.get(k, 0) + c
                nxt[k + lag] = nxt.get(k + lag, 0) - c
            poly = nxt
    n = max(poly)
    return [poly.get(k, 0) for k in range(n + 1)]


def multi_index_operator(factors):
    """The multi-index sum: sum over j_i in 0..n_i of signed binomial products."""
    ranges = [range(mu * s * R + 1) for mu, s, R in factors]
    n = sum(mu * s * R for mu, s, R in factors)
    out = [0] * (n + 1)
    for js in itertools.product(*ranges):
        term = 1
        for (mu, s, R), j in zip(factors, js):
            lag = mu * s
            if j % lag:
                term = 0
                break
            m = j // lag
            term *= (-1) ** m * comb(R, m)
        out[sum(js)] += term
    return out


def naive_inverse(factors, K):
    """d(k) through prod over factors of (sum_j x^{lag j})^R, ints, truncated at K."""
    poly = [1] + [0] * K
    for mu, s, R in factors:
        lag = mu * s
        geo = [1 if k % lag == 0 else 0 for k in range(K + 1)]
        for _ in range(R):
            poly = [sum(poly[i] * geo[k - i] for i in range(k + 1)) for k in range(K + 1)]
    return poly


def gegenbauer_gamma_sum(d, u, n, dps=40):
    """C_n^{(d)}(u) from the explicit Gamma-ratio sum at extended precision."""
    with mpmath.workdps(dps):
        d = mpmath.mpf(d)
        u = mpmath.mpf(u)
        total = mpmath.mpf(0)
        for k in range(n // 2 + 1):
            total += ((-1) ** k * (2 * u) ** (n - 2 * k) * mpmath.gamma(d - k + n)
                      / (mpmath.factorial(k) * mpmath.factorial(n - 2 * k) * mpmath.gamma(d)))
        return float(total)


def fractional_binomial(D, K):
    """Coefficients of (1-x)^{-D}: Gamma(k+D)/(Gamma(D) k!) by mpmath."""
    return np.array([float(mpmath.gamma(k + D) / (mpmath.gamma(D) * mpmath.factorial(k)))
                     for k in range(K + 1)])


def chi_mp(factors, lam, dps=30):
    """prod (1 - e^{-i lam lag})^{R+D} with mpmath principal powers."""
    with mpmath.workdps(dps):
        val = mpmath.mpc(1)
        for mu, s, R, D in factors:
            z = 1 - mpmath.exp(-1j * mpmath.mpf(lam) * mu * s)
            val *= mpmath.power(z, R + D)
        return complex(val)


def beta_direct(factors, lam):
    """prod_j prod_k (i lam - 2 pi i k/s_j)^{d_j} by literal complex products."""
    val = 1 + 0j
    for mu, s, R, D in factors:
        for k in range(-(s // 2), s // 2 + 1):
            val *= complex(0, lam - 2 * np.pi * k / s) ** (R + D)
    return val


def increment_by_definition(path, factors, m):
    """chi(xi(m)) by the literal product of difference operators on a dict path."""
    current = dict(path)
    for mu, s, R in factors:
        lag = mu * s
        for _ in range(R):
            current = {k: v - current[k - lag] for k, v in current.items() if k - lag in current}
    return current[m]


def ma_autocov(phi, lag):
    """E[Y(t+lag) Y(t)^T] for Y(t) = sum_k phi[k] eps(t-k), unit white noise."""
    phi = np.asarray(phi)
    K = phi.shape[0]
    T = phi.shape[1]
    out = np.zeros((T, T))
    for k in range(K):
        if 0 <= k + lag < K:
            out += phi[k + lag] @ phi[k].T
    return out


def finite_past_mse(phi, b, P):
    """Gaussian conditional variance of sum b(k)^T Y(k) given Y(-1..-P), exact moments.

    Dense joint covariance of the future block 0..len(b)-1 and the past block.
    """
    b = np.asarray(b, dtype=float)
    T = b.shape[1]
    fut = list(range(b.shape[0]))
    past = list(range(-P, 0))
    idx = fut + past

    def block(i, j):
        return ma_autocov(phi, i - j)

    n = len(idx)
    G = np.zeros((n * T, n * T))
    for a, i in enumerate(idx):
        for c, j in enumerate(idx):
            G[a * T:(a + 1) * T, c * T:(c + 1) * T] = block(i, j)
    wf = np.concatenate([b.ravel(), np.zeros(P * T)])
    var = wf @ G @ wf
    if P == 0:
        return float(var)
    nf = len(fut) * T
    Sff = G[:nf, :nf]
    Sfp = G[:nf, nf:]
    Spp = G[nf:, nf:]
    x = b.ravel()
    cov = x @ Sfp
    return float(x @ Sff @ x - cov @ np.linalg.solve(Spp, cov))


def trig_fourier(values, lags):
    """(1/2pi) int e^{i lam l} g(lam) d lam by dense Riemann sum on an offset grid."""
    N = values.shape[0]
    lam = -np.pi + (np.arange(N) + 0.5) * 2 * np.pi / N
    return np.array([np.tensordot(np.exp(1j * lam * l), values, axes=(0, 0)) / N for l in lags])
