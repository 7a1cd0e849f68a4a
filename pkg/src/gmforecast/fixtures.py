"""Named models and functionals with their known closed-form mean square errors."""
from __future__ import annotations

import numpy as np

from .blocking import FunctionalSpec
from .simulation import ModelRecipe, periodic_ar_fixture, seasonal_ma_fixture, seasonal_ma_functional


def periodic_ar_delta(phi, rho: float) -> float:
    """Discounted-sum MSE for the integrated periodic AR(1):
    ||Theta^T a||^2 / ((1 - rho^T)^3 (1 + rho^T)), Theta = (Psi0 + rho^T Psi1)^{-1}."""
    phi = np.asarray(phi, dtype=float)
    T = len(phi)
    P0 = np.eye(T)
    for r in range(1, T):
        P0[r, r - 1] = -phi[r]
    P1 = np.zeros((T, T))
    P1[0, T - 1] = -phi[0]
    a = rho ** np.arange(1, T + 1)
    theta = np.linalg.inv(P0 + rho ** T * P1)
    q = rho ** T
    return float(np.sum((theta.T @ a) ** 2) / ((1 - q) ** 3 * (1 + q)))


def periodic_ar_estimate_weights(phi, rho: float) -> tuple:
    """Weights (w1, w2) of the closed-form estimate w1^T X_{-1} + w2^T X_{-2}."""
    phi = np.asarray(phi, dtype=float)
    T = len(phi)
    P0 = np.eye(T)
    for r in range(1, T):
        P0[r, r - 1] = -phi[r]
    P1 = np.zeros((T, T))
    P1[0, T - 1] = -phi[0]
    a = rho ** np.arange(1, T + 1)
    theta = np.linalg.inv(P0 + rho ** T * P1)
    k = 1.0 / (1 - rho ** T)
    w1 = k * (np.eye(T) - theta @ P1).T @ a
    w2 = k * (theta @ P1).T @ a
    return w1, w2


def seasonal_ma_delta(s: int, share: float, a0: float, a) -> float:
    """MSE of the two-block seasonal average under the periodic MA with (1-B)(1-B^u)."""
    a = np.asarray(a, dtype=float)
    total = 0.0
    for k in range(1, s + 1):
        lead = (1 - share) * a0 if k == s else a0
        total += (1 - lead - (1 - share) * a[k - 1]) ** 2
    total += (1 - share) ** 2 * (s - 1) * (1 - a0) ** 2 + (1 - share) ** 2
    return total / s ** 2


NAMED_MODELS = ("white", "periodic_ar", "seasonal_ma")


def named_recipe(doc: dict) -> ModelRecipe:
    name = doc["name"]
    if name == "white":
        return ModelRecipe("WhiteNoise", T=int(doc.get("T", 1)), scale=float(doc.get("scale", 1.0)))
    if name == "periodic_ar":
        phi = doc.get("phi", [0.4, -0.3, 0.2, 0.1])
        return ModelRecipe("SPAR11", phi=phi, alpha=doc.get("alpha"), rho=doc.get("rho", 0.5))
    if name == "seasonal_ma":
        return seasonal_ma_fixture(int(doc.get("s", 7)), int(doc.get("u", 4)), float(doc.get("a0", 0.4)),
                                   float(doc.get("D0", 0.0)), float(doc.get("D1", 0.0)))
    raise ValueError(f"unknown named model {name!r}; choose from {NAMED_MODELS}")


def default_weights(recipe: ModelRecipe):
    """The functional a named model is usually paired with."""
    if recipe.family == "SPAR11" and recipe.rho is not None:
        return FunctionalSpec.geometric([recipe.rho], recipe.rho)
    if recipe.family == "PeriodicMA2Seasonal":
        return seasonal_ma_functional(recipe.T, 0.3)
    return None


def closed_form_delta(recipe: ModelRecipe, weights) -> float:
    """Known MSE for the fixture pairs, or None when no closed form applies."""
    if recipe.family == "SPAR11" and all(x == 1.0 for x in recipe.alpha) and isinstance(weights, FunctionalSpec):
        if (weights.is_infinite and len(weights.pattern) == 1 and weights.rho == recipe.rho
                and weights.pattern[0] == recipe.rho and recipe.scale == 1.0):
            return periodic_ar_delta(recipe.phi, recipe.rho)
    if recipe.family == "PeriodicMA2Seasonal" and recipe.D0 == 0.0 and recipe.D1 == 0.0 and recipe.scale == 1.0:
        rows = weights.rows if isinstance(weights, FunctionalSpec) else np.asarray(weights)
        if rows is not None and rows.shape == (2, recipe.T):
            share = rows[0, 0] * recipe.T
            if np.allclose(rows, seasonal_ma_functional(recipe.T, share), rtol=0, atol=1e-15):
                return seasonal_ma_delta(recipe.T, share, recipe.a0, recipe.a)
    return None
