"""Admissible density classes, least-favourable optimality residuals and saddle checks.

Everything is evaluated on the offset grid.  Class constraints are stated for
the structural density f, always through the weight |chi|^2/|beta|^2, so the
natural working variable is g = |chi|^2/|beta|^2 f, the density of the
integer-order increment.

Pairing and sign conventions (matching the forecaster):

* the optimal coefficients solve the block-Toeplitz system with blocks
  Q(i - j), Q(l) = (1/2pi) int e^{i lam l} g^{-1}, and C(lam) = sum_j c(j) e^{-i lam j};
* perturbing the optimal MSE gives dDelta = (1/2pi) int tr(g^{-1} C C^* g^{-1} dg),
  so the stationarity conditions read C C^* = g M g, with M the multiplier
  matrix of the class (alpha alpha^*, alpha^2 I, diag(alpha_k^2), alpha^2 B1, ...);
* with g = Phi Phi^* and R(lam) = sum_k r(k) e^{-i lam k}, r(k) = sum_m phi(m)^T b(m+k),
  one has C = Phi R and the factorized form R R^* = Phi^* M Phi.

Inner products <B, f> are tr(B f).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, optimize

from .forecaster import LiftedFunctional, solve_classical
from .increment_algebra import IncrementSpec, chi_beta_ratio
from .spectral import (
    SpectralModel,
    _outer_from_log,
    _poly_on_grid,
    fourier_lags,
    offset_grid,
)

FAMILIES = ("D0", "DVU", "Deps", "D1delta")

_REQUIRED = {
    ("D0", 1): ("P",), ("D0", 2): ("p",), ("D0", 3): ("p_k",), ("D0", 4): ("p", "B1"),
    ("DVU", 1): ("V", "U", "P"), ("DVU", 2): ("V", "U", "p"),
    ("DVU", 3): ("V", "U", "p_k"), ("DVU", 4): ("V", "U", "p", "B2"),
    ("Deps", 1): ("eps", "f1", "p"), ("Deps", 2): ("eps", "f1", "p_k"),
    ("Deps", 3): ("eps", "f1", "p", "B1"), ("Deps", 4): ("eps", "f1", "P"),
    ("D1delta", 1): ("f1", "delta"), ("D1delta", 2): ("f1", "delta_k"),
    ("D1delta", 3): ("f1", "delta", "B2"), ("D1delta", 4): ("f1", "delta_ij"),
}

# multiplier names each residual needs
_MULTIPLIERS = {
    ("D0", 1): ("alpha",), ("D0", 2): ("alpha2",), ("D0", 3): ("alpha2_k",), ("D0", 4): ("alpha2",),
    ("DVU", 1): ("beta", "Gamma1", "Gamma2"), ("DVU", 2): ("beta2", "gamma1", "gamma2"),
    ("DVU", 3): ("beta2_k", "gamma1_k", "gamma2_k"), ("DVU", 4): ("beta2", "gamma1", "gamma2"),
    ("Deps", 1): ("alpha2", "gamma1"), ("Deps", 2): ("alpha2_k", "gamma1_k"),
    ("Deps", 3): ("alpha2", "gamma1"), ("Deps", 4): ("alpha", "Gamma"),
    ("D1delta", 1): ("beta2", "gamma2"), ("D1delta", 2): ("beta2_k", "gamma2_k"),
    ("D1delta", 3): ("beta2", "gamma2"), ("D1delta", 4): ("beta_ij", "gamma_ij"),
}


class InfeasibleClass(ValueError):
    pass


class MissingMultipliers(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, message, last_change=None, last_residual=None):
        super().__init__(message)
        self.last_change = last_change
        self.last_residual = last_residual


def _as_grid(values, dim=None) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError("grid densities must be (n,) or (n, T, T)")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"grid density has dimension {arr.shape[1]}, expected {dim}")
    return arr


def _as_matrix(value, dim) -> np.ndarray:
    m = np.atleast_2d(np.asarray(value, dtype=complex if np.iscomplexobj(value) else float))
    if m.shape != (dim, dim):
        raise ValueError(f"expected a {dim} x {dim} matrix, got {m.shape}")
    return m


def _hermitian_pd(m, name):
    if not np.allclose(m, np.conj(m.T), atol=1e-12):
        raise ValueError(f"{name} must be Hermitian")
    if np.min(np.linalg.eigvalsh(m)) <= 0.0:
        raise ValueError(f"{name} must be positive definite")


@dataclass
class DensityClassSpec:
    """One admissible class: family tag, variant 1..4 and its parameters.

    Moment targets of the D_V^U family use the same names as D0 (P, p, p_k).
    V, U and f1 are structural densities sampled on the offset grid.
    """
    family: str
    variant: int
    dim: int = 1
    P: Optional[np.ndarray] = None
    p: Optional[float] = None
    p_k: Optional[np.ndarray] = None
    B1: Optional[np.ndarray] = None
    B2: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    eps: Optional[float] = None
    f1: Optional[np.ndarray] = None
    delta: Optional[float] = None
    delta_k: Optional[np.ndarray] = None
    delta_ij: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.variant not in (1, 2, 3, 4):
            raise ValueError("variant must be 1, 2, 3 or 4")
        missing = [k for k in _REQUIRED[self.key] if getattr(self, k) is None]
        if missing:
            raise ValueError(f"class {self.family}{self.variant} needs parameters {missing}")
        T = self.dim
        if self.P is not None:
            self.P = _as_matrix(self.P, T)
            _hermitian_pd(self.P, "P")
        for name in ("B1", "B2"):
            if getattr(self, name) is not None:
                m = _as_matrix(getattr(self, name), T)
                _hermitian_pd(m, name)
                setattr(self, name, m)
        for name in ("p_k", "delta_k"):
            if getattr(self, name) is not None:
                v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
                if v.shape != (T,):
                    raise ValueError(f"{name} must hold {T} values")
                setattr(self, name, v)
        if self.delta_ij is not None:
            self.delta_ij = _as_matrix(self.delta_ij, T).real
        for name in ("V", "U", "f1"):
            if getattr(self, name) is not None:
                setattr(self, name, _as_grid(getattr(self, name), T))
        if self.eps is not None and not 0.0 <= self.eps < 1.0:
            raise ValueError("contamination eps must lie in [0, 1)")
        grids = {getattr(self, k).shape[0] for k in ("V", "U", "f1") if getattr(self, k) is not None}
        if len(grids) > 1:
            raise ValueError("bounding densities must share one grid")

    @property
    def key(self) -> tuple:
        return (self.family, self.variant)

    @property
    def name(self) -> str:
        return f"{self.family}{self.variant}"

    @property
    def grid_size(self) -> Optional[int]:
        for k in ("V", "U", "f1"):
            if getattr(self, k) is not None:
                return getattr(self, k).shape[0]
        return None

    def to_dict(self) -> dict:
        doc = {"family": self.family, "variant": self.variant, "dim": self.dim}
        for k in ("P", "p", "p_k", "B1", "B2", "eps", "delta", "delta_k", "delta_ij", "V", "U", "f1"):
            val = getattr(self, k)
            if val is None:
                continue
            val = np.asarray(val)
            if k in ("V", "U", "f1") and self.dim == 1:
                val = val[:, 0, 0]
            doc[k] = np.real(val).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DensityClassSpec":
        known = {"family", "variant", "dim", "P", "p", "p_k", "B1", "B2", "V", "U", "eps", "f1",
                 "delta", "delta_k", "delta_ij"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown class fields {sorted(extra)}")
        return cls(**doc)


@dataclass
class LeastFavorableSolution:
    """Candidate least-favourable density with its multipliers.

    f0 is the structural density on the offset grid; C holds C(lam) of the
    optimal estimate under f0 once computed (solver output or lf_residual).
    """
    f0: np.ndarray
    spec: IncrementSpec
    multipliers: dict = field(default_factory=dict)
    cls: Optional[DensityClassSpec] = None
    C: Optional[np.ndarray] = None
    delta: Optional[float] = None
    residual: Optional[float] = None
    constraints: Optional[dict] = None
    iterations: int = 0
    converged: bool = False
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f0 = _as_grid(self.f0)
        if np.any(np.abs(self.f0 - np.conj(np.swapaxes(self.f0, 1, 2))) > 1e-10):
            raise ValueError("f0 must be Hermitian on the grid")
        if np.min(np.linalg.eigvalsh(self.f0)) < -1e-12:
            raise ValueError("f0 must be positive semidefinite on the grid")

    @property
    def dim(self) -> int:
        return self.f0.shape[1]

    @property
    def lam(self) -> np.ndarray:
        return offset_grid(self.f0.shape[0])

    @property
    def g0(self) -> np.ndarray:
        return increment_scale(self.spec, self.lam)[:, None, None] * self.f0

    def model(self) -> SpectralModel:
        return SpectralModel.from_grid(self.spec, self.g0, describes="increment", name="least favourable")

    def forecast(self, lifted: LiftedFunctional, K: int = 256, s_length: Optional[int] = None):
        """Minimax-robust predictor: the optimal estimate under f0."""
        return solve_classical(self.model(), lifted, K=K, s_length=s_length)

    def to_dict(self) -> dict:
        f0 = self.f0[:, 0, 0].real if self.dim == 1 else self.f0.real
        mult = {k: (np.real(v).tolist() if np.ndim(v) else float(np.real(v)))
                for k, v in self.multipliers.items()}
        return {"class": self.cls.to_dict() if self.cls is not None else None,
                "grid": int(self.f0.shape[0]), "f0": np.asarray(f0).tolist(),
                "multipliers": mult, "delta": self.delta, "residual": self.residual,
                "constraints": self.constraints, "iterations": self.iterations,
                "converged": self.converged, "report": self.report}


def increment_scale(spec: IncrementSpec, lam) -> np.ndarray:
    """|chi|^2/|beta|^2 of the integer part, the weight every class integral carries."""
    return chi_beta_ratio(spec.integer_part(), lam)


def _to_increment(f, spec, lam):
    return increment_scale(spec, lam)[:, None, None] * _as_grid(f)


def _mean(x):
    return np.mean(x, axis=0)


def _tr(a):
    return np.trace(a, axis1=-2, axis2=-1).real


def _pair(B, g):
    return np.einsum("ij,nji->n", B, g).real


def _min_eig(a):
    return np.linalg.eigvalsh(a).min(axis=-1)


# -- class membership ----------------------------------------------------------

def _eq(value, target):
    value, target = np.asarray(value, dtype=complex), np.asarray(target, dtype=complex)
    return {"kind": "eq", "value": np.real(value).tolist(), "target": np.real(target).tolist(),
            "slack": float(np.max(np.abs(value - target))),
            "scale": float(max(1.0, np.max(np.abs(target))))}


def _ineq(margin, label=""):
    # margin >= 0 is satisfied; the slack is the smallest margin
    m = float(np.min(margin))
    return {"kind": "ineq", "slack": m, "scale": 1.0, "where": label}


def _moment_constraints(cls, g):
    T = cls.dim
    v = cls.variant
    fam = cls.family
    if fam == "D1delta":
        return {}
    if v == 1 or (fam == "Deps" and v == 4):
        return {"moment": _eq(_mean(g), cls.P)}
    if fam == "Deps":
        if v == 1:
            return {"moment": _eq(_mean(_tr(g)), cls.p)}
        if v == 2:
            return {"moment": _eq(_mean(np.real(np.diagonal(g, axis1=1, axis2=2))), cls.p_k)}
        return {"moment": _eq(_mean(_pair(cls.B1, g)), cls.p)}
    if v == 2:
        return {"moment": _eq(_mean(_tr(g)), cls.p)}
    if v == 3:
        return {"moment": _eq(_mean(np.real(np.diagonal(g, axis1=1, axis2=2))), cls.p_k)}
    B = cls.B1 if fam == "D0" else cls.B2
    return {"moment": _eq(_mean(_pair(B, g)), cls.p)}


def class_membership(f, cls: DensityClassSpec, spec: IncrementSpec, tol: float = 1e-8) -> dict:
    """Evaluate every defining constraint of the class for a grid density f.

    Equality constraints report |value - target|; bound and ball constraints
    report their smallest margin (negative means violated).  Membership needs
    every equality within tol * max(1, |target|) and every margin >= -tol.
    """
    f = _as_grid(f, cls.dim)
    n = f.shape[0]
    if cls.grid_size is not None and cls.grid_size != n:
        raise ValueError(f"density grid {n} does not match the class grid {cls.grid_size}")
    lam = offset_grid(n)
    scale = increment_scale(spec, lam)
    g = scale[:, None, None] * f
    out = {"psd": _ineq(_min_eig(f), "f")}
    out.update(_moment_constraints(cls, g))
    fam, v = cls.family, cls.variant
    if fam == "DVU":
        V, U = cls.V, cls.U
        if v == 1:
            out["lower"] = _ineq(_min_eig(f - V))
            out["upper"] = _ineq(_min_eig(U - f))
        elif v == 2:
            out["lower"] = _ineq(_tr(f) - _tr(V))
            out["upper"] = _ineq(_tr(U) - _tr(f))
        elif v == 3:
            d = lambda a: np.real(np.diagonal(a, axis1=1, axis2=2))
            out["lower"] = _ineq(d(f) - d(V))
            out["upper"] = _ineq(d(U) - d(f))
        else:
            out["lower"] = _ineq(_pair(cls.B2, f) - _pair(cls.B2, V))
            out["upper"] = _ineq(_pair(cls.B2, U) - _pair(cls.B2, f))
    elif fam == "Deps":
        lb = (1.0 - cls.eps) * cls.f1
        if v == 1:
            excess = _tr(f) - _tr(lb)
        elif v == 2:
            excess = np.real(np.diagonal(f - lb, axis1=1, axis2=2))
        elif v == 3:
            excess = _pair(cls.B1, f) - _pair(cls.B1, lb)
        else:
            excess = _min_eig(f - lb)
        out["contamination"] = _ineq(excess)
        if cls.eps == 0.0:
            out["no_contamination"] = _eq(np.max(np.abs(f - cls.f1)), 0.0)
    elif fam == "D1delta":
        g1 = scale[:, None, None] * cls.f1
        diff = g - g1
        if v == 1:
            out["ball"] = _ineq(cls.delta - _mean(np.abs(_tr(diff))))
        elif v == 2:
            out["ball"] = _ineq(cls.delta_k - _mean(np.abs(np.diagonal(diff, axis1=1, axis2=2))))
        elif v == 3:
            out["ball"] = _ineq(cls.delta - _mean(np.abs(_pair(cls.B2, diff))))
        else:
            out["ball"] = _ineq(cls.delta_ij - _mean(np.abs(diff)))
    worst = 0.0
    for c in out.values():
        viol = c["slack"] / c["scale"] if c["kind"] == "eq" else max(0.0, -c["slack"])
        worst = max(worst, viol)
    return {"member": bool(worst <= tol), "max_violation": worst, "constraints": out}


# -- optimality residuals ------------------------------------------------------

def _need(mult, names, key):
    missing = [k for k in names if k not in mult]
    if missing:
        raise MissingMultipliers(f"class {key[0]}{key[1]} needs multipliers {missing}")
    return [mult[k] for k in names]


def _field(x, n, T, kind):
    """Broadcast a multiplier to (n, T, T): scalar, (n,), (T,), (n, T), (T, T) or (n, T, T)."""
    x = np.asarray(x)
    if kind == "scalar":
        x = x.reshape(-1)
        vals = np.broadcast_to(x if x.size == n else x[:1], (n,))
        return vals[:, None, None] * np.eye(T)
    if kind == "diag":
        if x.ndim == 1:
            x = np.broadcast_to(x, (n, T))
        return np.einsum("nk,kl->nkl", x, np.eye(T))
    if kind == "matrix":
        if x.ndim == 2:
            x = np.broadcast_to(x, (n, T, T))
        return x
    raise ValueError(kind)


def multiplier_matrix(cls: DensityClassSpec, multipliers: dict, n: int) -> np.ndarray:
    """M(lam) in C C^* = g M g for the class: the right-hand side with g factored out."""
    T = cls.dim
    fam, v = cls.key
    names = _MULTIPLIERS[cls.key]
    vals = _need(multipliers, names, cls.key)
    if fam == "D0":
        if v == 1:
            a = np.asarray(vals[0]).reshape(T)
            return np.broadcast_to(np.outer(a, np.conj(a)), (n, T, T)).copy()
        if v == 2:
            return _field(vals[0], n, T, "scalar")
        if v == 3:
            return _field(vals[0], n, T, "diag")
        return _field(vals[0], n, T, "scalar") @ cls.B1
    if fam == "DVU":
        if v == 1:
            b = np.asarray(vals[0]).reshape(T)
            return np.outer(b, np.conj(b)) + _field(vals[1], n, T, "matrix") + _field(vals[2], n, T, "matrix")
        if v == 3:
            return sum(_field(x, n, T, "diag") for x in vals)
        s = sum(_field(x, n, T, "scalar") for x in vals)
        return s if v == 2 else s @ cls.B2
    if fam == "Deps":
        if v == 1:
            return sum(_field(x, n, T, "scalar") for x in vals)
        if v == 2:
            return sum(_field(x, n, T, "diag") for x in vals)
        if v == 3:
            return sum(_field(x, n, T, "scalar") for x in vals) @ cls.B1
        a = np.asarray(vals[0]).reshape(T)
        return np.outer(a, np.conj(a)) + _field(vals[1], n, T, "matrix")
    # D1delta
    if v == 1:
        return _field(vals[0], n, T, "scalar") @ _field(vals[1], n, T, "scalar")
    if v == 2:
        return _field(vals[0], n, T, "diag") @ _field(vals[1], n, T, "diag")
    if v == 3:
        return (_field(vals[0], n, T, "scalar") @ _field(vals[1], n, T, "scalar")) @ cls.B2
    return _field(vals[0], n, T, "matrix") * _field(vals[1], n, T, "matrix")


def _multiplier_conditions(cls, cand, g, tol=1e-9):
    """Sign and active-set conditions on the multiplier fields; worst violation per rule."""
    fam, v = cls.key
    m = cand.multipliers
    f = cand.f0
    n, T = f.shape[0], f.shape[1]
    lam = cand.lam
    out = {}

    def scalar_field(x):
        return np.broadcast_to(np.asarray(x, dtype=float).reshape(-1), (n,)) if np.size(x) in (1, n) else np.asarray(x)

    if fam == "DVU":
        V, U = cls.V, cls.U
        if v == 1:
            G1, G2 = _field(m["Gamma1"], n, T, "matrix"), _field(m["Gamma2"], n, T, "matrix")
            out["Gamma1<=0"] = max(0.0, float(np.max(np.linalg.eigvalsh(G1))))
            out["Gamma2>=0"] = max(0.0, float(-np.min(np.linalg.eigvalsh(G2))))
            off_lo = _min_eig(f - V) > tol
            off_hi = _min_eig(U - f) > tol
            out["Gamma1 inactive"] = float(np.max(np.abs(G1[off_lo]), initial=0.0))
            out["Gamma2 inactive"] = float(np.max(np.abs(G2[off_hi]), initial=0.0))
        else:
            if v == 3:
                g1, g2 = np.asarray(m["gamma1_k"]), np.asarray(m["gamma2_k"])
                d = lambda a: np.real(np.diagonal(a, axis1=1, axis2=2))
                lo, hi = d(f) - d(V), d(U) - d(f)
                g1, g2 = np.broadcast_to(g1, (n, T)), np.broadcast_to(g2, (n, T))
            else:
                g1, g2 = scalar_field(m["gamma1"]), scalar_field(m["gamma2"])
                if v == 2:
                    lo, hi = _tr(f) - _tr(V), _tr(U) - _tr(f)
                else:
                    lo, hi = _pair(cls.B2, f) - _pair(cls.B2, V), _pair(cls.B2, U) - _pair(cls.B2, f)
            out["gamma1<=0"] = max(0.0, float(np.max(g1)))
            out["gamma2>=0"] = max(0.0, float(-np.min(g2)))
            out["gamma1 inactive"] = float(np.max(np.abs(g1[lo > tol]), initial=0.0))
            out["gamma2 inactive"] = float(np.max(np.abs(g2[hi > tol]), initial=0.0))
    elif fam == "Deps":
        lb = (1.0 - cls.eps) * cls.f1
        if v == 4:
            G = _field(m["Gamma"], n, T, "matrix")
            out["Gamma<=0"] = max(0.0, float(np.max(np.linalg.eigvalsh(G))))
            out["Gamma inactive"] = float(np.max(np.abs(G[_min_eig(f - lb) > tol]), initial=0.0))
        else:
            if v == 2:
                gam = np.broadcast_to(np.asarray(m["gamma1_k"]), (n, T))
                excess = np.real(np.diagonal(f - lb, axis1=1, axis2=2))
            else:
                gam = scalar_field(m["gamma1"])
                excess = _tr(f) - _tr(lb) if v == 1 else _pair(cls.B1, f) - _pair(cls.B1, lb)
            scale = np.max(np.abs(gam), initial=1.0)
            out["gamma1<=0"] = max(0.0, float(np.max(gam)))
            out["gamma1 inactive"] = float(np.max(np.abs(gam[excess > tol * max(1.0, scale)]), initial=0.0))
    elif fam == "D1delta":
        g1 = increment_scale(cand.spec, lam)[:, None, None] * cls.f1
        diff = g - g1
        if v == 4:
            gam = _field(m["gamma_ij"], n, T, "matrix")
            out["|gamma|<=1"] = max(0.0, float(np.max(np.abs(gam)) - 1.0))
            nz = np.abs(diff) > tol
            target = np.where(nz, diff / np.where(nz, np.abs(diff), 1.0), gam)
            out["gamma=phase"] = float(np.max(np.abs(gam - target)))
        else:
            if v == 2:
                gam = np.broadcast_to(np.asarray(m["gamma2_k"]), (n, T))
                dev = np.real(np.diagonal(diff, axis1=1, axis2=2))
            else:
                gam = scalar_field(m["gamma2"])
                dev = _tr(diff) if v == 1 else _pair(cls.B2, diff)
            out["|gamma|<=1"] = max(0.0, float(np.max(np.abs(gam)) - 1.0))
            nz = np.abs(dev) > tol
            out["gamma=sign"] = float(np.max(np.abs(gam[nz] - np.sign(dev[nz])), initial=0.0))
    return out


def _factor_scalar(g, length):
    vals = np.real(g[:, 0, 0])
    if np.min(vals) <= 0.0:
        raise ValueError("the candidate density must be strictly positive for the factorized route")
    phi, tail = _outer_from_log(np.log(vals), length)
    return phi, tail


def factorized_R(phi: np.ndarray, b: np.ndarray) -> np.ndarray:
    """r(k) = sum_m phi(m)^T b(m+k), k = 0..N, for a factor stack phi (K, T, q)."""
    N = b.shape[0] - 1
    q = phi.shape[2]
    r = np.zeros((N + 1, q))
    for k in range(N + 1):
        top = min(N - k, phi.shape[0] - 1)
        r[k] = np.einsum("mij,mi->j", phi[:top + 1], b[k:k + top + 1])
    return r


def coefficient_function(g: np.ndarray, lifted: LiftedFunctional, route: str = "factorized",
                         K: int = 256, factor: Optional[np.ndarray] = None) -> tuple:
    """C(lam) on the grid of g, with Delta = (1/2pi) int C^* g^{-1} C.

    route="classical" solves the truncated block-Toeplitz system built from
    g^{-1}; route="factorized" uses C = Phi R with the causal factor of g
    (cepstral for scalar g, or the supplied factor stack phi).
    """
    n, T = g.shape[0], g.shape[1]
    lam = offset_grid(n)
    b = lifted.b
    if not np.any(b):
        return np.zeros((n, T), dtype=complex), 0.0, {"route": route}
    if route == "classical":
        if b.shape[0] > K + 1:
            raise ValueError("truncation K is below the functional support")
        if K >= n // 2:
            raise ValueError("truncation K must stay below half the grid size")
        Ginv = np.linalg.inv(g)
        lags = fourier_lags(Ginv, K)
        Q = np.zeros(((K + 1) * T, (K + 1) * T), dtype=complex)
        for i in range(K + 1):
            for j in range(K + 1):
                Q[i * T:(i + 1) * T, j * T:(j + 1) * T] = lags[i - j] if i >= j else np.conj(lags[j - i]).T
        if np.max(np.abs(Q.imag)) <= 1e-12 * np.max(np.abs(Q.real)):
            Q = Q.real
        bvec = np.zeros((K + 1) * T)
        bvec[:b.size] = b.ravel()
        cvec = linalg.cho_solve(linalg.cho_factor(Q, lower=True), bvec)
        c = np.real(cvec).reshape(K + 1, T)
        C = _poly_on_grid(c[:, :, None], lam)[:, :, 0]
        delta = float(np.real(bvec @ cvec))
        return C, delta, {"route": route, "K": K, "c_tail": float(np.linalg.norm(c[-(K // 8 + 1):]))}
    if route == "factorized":
        if factor is None:
            if T != 1:
                raise ValueError("matrix grid densities are not factorized; supply the factor stack")
            phi, tail = _factor_scalar(g, n // 2)
            phi = phi[:, None, None]
        else:
            phi, tail = np.asarray(factor, dtype=float), 0.0
        r = factorized_R(phi, b)
        Phi = _poly_on_grid(phi, lam)
        R = _poly_on_grid(r[:, :, None], lam)[:, :, 0]
        C = np.einsum("nij,nj->ni", Phi, R)
        return C, float(np.sum(r * r)), {"route": route, "r": r, "factor_tail": tail, "Phi": Phi, "R": R}
    raise ValueError(f"unknown route {route!r}")


@dataclass
class ResidualReport:
    route: str
    field: np.ndarray
    sup_norm: float
    lhs_sup: float
    conditions: dict
    delta: float

    @property
    def relative(self) -> float:
        return self.sup_norm / self.lhs_sup if self.lhs_sup > 0 else self.sup_norm

    def to_dict(self) -> dict:
        return {"route": self.route, "sup_norm": self.sup_norm, "lhs_sup": self.lhs_sup,
                "relative": self.relative, "conditions": self.conditions, "delta": self.delta}


def lf_residual(cls: DensityClassSpec, candidate: LeastFavorableSolution, lifted: LiftedFunctional,
                spec: Optional[IncrementSpec] = None, route: str = "classical", K: int = 256,
                factor: Optional[np.ndarray] = None) -> ResidualReport:
    """Pointwise left side minus right side of the optimality condition of the class.

    classical route:  C C^* - g0 M g0
    factorized route: R R^* - Phi0^* M Phi0
    with M the multiplier matrix of the class.  Sign and active-set rules of
    the multiplier fields are reported in .conditions.
    """
    spec = spec or candidate.spec
    if candidate.dim != cls.dim or lifted.dim != cls.dim:
        raise ValueError("class, candidate and functional dimensions differ")
    f0 = candidate.f0
    n, T = f0.shape[0], f0.shape[1]
    lam = offset_grid(n)
    g = increment_scale(spec, lam)[:, None, None] * f0
    M = multiplier_matrix(cls, candidate.multipliers, n)
    C, delta, info = coefficient_function(g, lifted, route, K, factor)
    if route == "classical" or not np.any(lifted.b):
        lhs = np.einsum("ni,nj->nij", C, np.conj(C))
        rhs = g @ M @ g
    else:
        R, Phi = info["R"], info["Phi"]
        lhs = np.einsum("ni,nj->nij", R, np.conj(R))
        rhs = np.conj(np.swapaxes(Phi, 1, 2)) @ M @ Phi
    diff = lhs - rhs
    conditions = _multiplier_conditions(cls, candidate, g)
    return ResidualReport(route, diff, float(np.max(np.abs(diff))), float(np.max(np.abs(lhs))),
                          conditions, delta)


# -- scalar solver ---------------------------------------------------------------

def _scalar_moment(cls):
    if cls.key in (("D0", 1), ("Deps", 4)):
        return float(np.real(cls.P[0, 0]))
    return float(cls.p)


def solve_lf_scalar(cls: DensityClassSpec, lifted: LiftedFunctional, spec: IncrementSpec,
                    grid: int = 2 ** 12, damping: float = 0.5, tol: float = 1e-10,
                    max_sweeps: int = 500, init: Optional[np.ndarray] = None) -> LeastFavorableSolution:
    """Least-favourable scalar density for D0 (variants 1, 2) and D_eps (variant 1), T = 1.

    Writing g = |chi|^2/|beta|^2 f and g = |Phi|^2, the stationarity condition
    |C|^2 = alpha^2 g^2 with C = Phi R becomes g = |R|^2 / alpha^2, where R is
    built from the first N+1 factor coefficients of g.  Each sweep recomputes
    R from the current g, renormalizes alpha to the class moment (for D_eps the
    update is max((1-eps) g1, |R|^2/alpha^2) with alpha by root finding), and
    moves a fraction `damping` of the way.  Iteration stops when the sup-norm
    change relative to sup g drops below tol.
    """
    if cls.dim != 1 or lifted.dim != 1:
        raise ValueError("solve_lf_scalar handles T = 1 only")
    if cls.key not in (("D0", 1), ("D0", 2), ("Deps", 1)):
        raise NotImplementedError(f"no constructive solver for class {cls.name}")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    n = cls.grid_size or int(grid)
    lam = offset_grid(n)
    scale = increment_scale(spec, lam)
    p = _scalar_moment(cls)
    if p <= 0.0:
        raise InfeasibleClass("the class moment must be positive")
    contaminated = cls.family == "Deps"
    if contaminated:
        lb = (1.0 - cls.eps) * scale * np.real(cls.f1[:, 0, 0])
        base = float(np.mean(lb))
        if base > p * (1 + 1e-12):
            raise InfeasibleClass(f"moment {p} is below the uncontaminated floor {base}")
        if np.min(lb) <= 0.0 and cls.eps == 0.0:
            raise InfeasibleClass("anchor density vanishes; minimality cannot hold")
    else:
        lb = np.zeros(n)
    singleton = contaminated and (cls.eps == 0.0 or abs(p - float(np.mean(lb))) <= 1e-14 * p)

    if init is not None:
        g = scale * np.real(_as_grid(init)[:, 0, 0])
    elif contaminated:
        g = lb + (p - float(np.mean(lb)))
    else:
        g = np.full(n, p)
    b = lifted.b[:, :1]
    N = b.shape[0] - 1

    def step(g):
        phi, _ = _outer_from_log(np.log(g), max(N + 1, 2))
        r = factorized_R(phi[:, None, None], b)[:, 0]
        R2 = np.abs(np.polynomial.polynomial.polyval(np.exp(-1j * lam), r)) ** 2
        if not contaminated:
            alpha2 = float(np.mean(R2)) / p
            return R2 / alpha2, alpha2
        if singleton:
            return lb.copy(), float("inf")
        h = lambda t: float(np.mean(np.maximum(lb, t * R2))) - p
        tmax = p / float(np.mean(R2))
        t = optimize.brentq(h, 0.0, tmax * (1 + 1e-12), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return np.maximum(lb, t * R2), 1.0 / t

    zero = not np.any(b)
    iterations = 0
    change = 0.0
    alpha2 = 0.0
    converged = zero or singleton
    if singleton:
        g = lb.copy()
    while not converged:
        new, alpha2 = step(g)
        nxt = (1.0 - damping) * g + damping * new
        change = float(np.max(np.abs(nxt - g)) / np.max(g))
        g = nxt
        iterations += 1
        if change < tol:
            converged = True
        elif iterations >= max_sweeps:
            break
    f0 = (g / scale)[:, None, None]
    sol = LeastFavorableSolution(f0, spec, cls=cls, iterations=iterations, converged=converged)
    G = g[:, None, None]
    C, delta, info = coefficient_function(G, lifted, "factorized")
    ratio = np.abs(C[:, 0]) ** 2 / g ** 2
    if zero:
        sol.multipliers = {"alpha2": 0.0, "alpha": [0.0]} if not contaminated else {"alpha2": 0.0, "gamma1": np.zeros(n)}
    elif not contaminated:
        alpha2 = float(np.mean(ratio * g) / p)  # Delta / p, exact from the final density
        sol.multipliers = {"alpha2": alpha2, "alpha": [np.sqrt(alpha2)]}
    else:
        inactive = g > lb * (1 + 1e-9) + 1e-300
        alpha2 = float(np.median(ratio[inactive])) if np.any(inactive) else float(np.max(ratio))
        gamma1 = np.where(inactive, 0.0, ratio - alpha2)
        sol.multipliers = {"alpha2": alpha2, "gamma1": gamma1}
    sol.C = C
    sol.delta = delta
    rep = lf_residual(cls, sol, lifted, spec, route="factorized")
    sol.residual = rep.sup_norm
    sol.constraints = class_membership(f0, cls, spec)
    sol.report = {"last_change": change, "damping": damping, "tol": tol, "grid": n,
                  "residual_relative": rep.relative, "conditions": rep.conditions}
    if not converged:
        raise NonConvergence(f"fixed point not reached in {max_sweeps} sweeps (last change {change:.3e})",
                             change, rep.sup_norm)
    return sol


# -- cross MSE and saddle points -------------------------------------------------

def delta_cross(solution: LeastFavorableSolution, f: Union[np.ndarray, SpectralModel],
                spec: Optional[IncrementSpec] = None, lifted: Optional[LiftedFunctional] = None) -> float:
    """Delta(h0; f) = (1/2pi) int C0^* g0^{-1} g g0^{-1} C0 dlam.

    f is a structural grid density on the solution grid or a SpectralModel,
    in which case its increment density is evaluated on that grid.
    """
    spec = spec or solution.spec
    lam = solution.lam
    if solution.C is None:
        if lifted is None:
            raise ValueError("solution carries no C(lam); pass the lifted functional")
        solution.C, solution.delta, _ = coefficient_function(solution.g0, lifted, "classical"
                                                             if solution.dim > 1 else "factorized")
    if isinstance(f, SpectralModel):
        g = f.increment_density(lam)
    else:
        g = increment_scale(spec, lam)[:, None, None] * _as_grid(f, solution.dim)
    ginv = np.linalg.inv(solution.g0)
    x = np.einsum("nij,nj->ni", ginv, solution.C)
    val = np.einsum("ni,nij,nj->n", np.conj(x), g, x)
    return float(np.mean(np.real(val)))


def _random_trig(rng, n, order=6):
    lam = offset_grid(n)
    k = np.arange(1, order + 1)
    coef = rng.standard_normal(order) / k
    phase = rng.uniform(0, 2 * np.pi, order)
    # even perturbations keep the density of a real sequence symmetric
    return np.cos(np.outer(lam, k)) @ (coef * np.cos(phase))


def sample_class(cls: DensityClassSpec, solution: LeastFavorableSolution, rng, size: int) -> list:
    """Admissible structural densities near f0: trig perturbations projected back on the class."""
    spec = solution.spec
    n, T = solution.f0.shape[0], solution.dim
    lam = solution.lam
    scale = increment_scale(spec, lam)[:, None, None]
    g0 = solution.g0
    out = []
    for _ in range(size):
        if cls.family == "D0":
            A = np.eye(T) + 0.0j
            pert = np.zeros((n, T, T), dtype=complex)
            for i in range(T):
                for j in range(T):
                    pert[:, i, j] = _random_trig(rng, n) * (1.0 if i == j else 0.3)
            pert = 0.5 * (pert + np.conj(np.swapaxes(pert, 1, 2)))
            L = A + 0.8 * pert / max(1.0, float(np.max(np.abs(pert))) * T)
            g = L @ g0 @ np.conj(np.swapaxes(L, 1, 2))
            m = _mean(g)
            if cls.variant == 1:
                S = linalg.sqrtm(cls.P) @ linalg.inv(linalg.sqrtm(m))
                g = S @ g @ np.conj(S.T)
            elif cls.variant == 2:
                g = g * (cls.p / float(np.trace(m).real))
            elif cls.variant == 3:
                D = np.diag(np.sqrt(cls.p_k / np.real(np.diag(m))))
                g = D @ g @ D
            else:
                g = g * (cls.p / float(np.trace(cls.B1 @ m).real))
            out.append(0.5 * (g + np.conj(np.swapaxes(g, 1, 2))) / scale)
        elif cls.key == ("Deps", 1) and T == 1:
            lb = (1.0 - cls.eps) * scale[:, 0, 0] * np.real(cls.f1[:, 0, 0])
            p = float(cls.p)
            if cls.eps == 0.0:
                out.append(solution.f0.copy())
                continue
            excess = np.real(g0[:, 0, 0]) - lb
            P1, P2 = _random_trig(rng, n), _random_trig(rng, n)
            W = 1.0 + 0.9 * P1 / max(1e-12, float(np.max(np.abs(P1))))
            kappa = rng.uniform(0.0, 1.0)
            mix = (1 - kappa) * excess * (1.0 + 0.9 * P2 / max(1e-12, float(np.max(np.abs(P2))))) + kappa * W
            room = p - float(np.mean(lb))
            mass = float(np.mean(mix))
            g = lb + (room / mass) * mix if mass > 0 else lb + room
            out.append((g / scale[:, 0, 0])[:, None, None])
        else:
            raise NotImplementedError(f"no sampler for class {cls.name} with T = {T}")
    return out


def saddle_check(solution: LeastFavorableSolution, cls: DensityClassSpec, n: int = 50,
                 tol: float = 1e-8, seed: int = 0, densities: Optional[list] = None) -> dict:
    """Sample admissible f and test Delta(h0; f) <= Delta(h0; f0) + tol * max(1, Delta(h0; f0))."""
    if n == 0 and not densities:
        return {"n": 0, "passed": True, "vacuous": True, "violations": 0, "max_violation": 0.0}
    rng = np.random.default_rng(seed)
    samples = list(densities) if densities is not None else sample_class(cls, solution, rng, n)
    d0 = delta_cross(solution, solution.f0)
    bound = tol * max(1.0, abs(d0))
    excess = []
    members = 0
    for f in samples:
        memb = class_membership(f, cls, solution.spec)
        members += memb["member"]
        excess.append(delta_cross(solution, f) - d0)
    excess = np.array(excess)
    viol = int(np.sum(excess > bound))
    return {"n": len(samples), "passed": viol == 0, "vacuous": False, "violations": viol,
            "max_violation": float(max(0.0, np.max(excess))), "max_excess": float(np.max(excess)),
            "delta0": d0, "tolerance": bound, "admissible_samples": int(members)}
