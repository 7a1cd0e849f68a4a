import numpy as np
import pytest

from gmforecast.blocking import FunctionalSpec
from gmforecast.fixtures import periodic_ar_delta
from gmforecast.forecaster import lift_functional, solve_factorized
from gmforecast.simulation import (
    ModelRecipe,
    brute_force_projection,
    empirical_structural_function,
    integrate_levels,
    monte_carlo_mse,
    orthogonality_check,
    simulate,
    simulate_blocks,
    simulate_increments,
    MAX_MA_LENGTH,
)
from gmforecast.spectral import structural_function

from oracles import finite_past_mse


class TestRecipe:
    def test_unstable_periodic_ar_rejected(self):
        with pytest.raises(ValueError):
            ModelRecipe("SPAR11", phi=[1.5, 1.0])

    def test_mixed_unit_roots_rejected(self):
        with pytest.raises(ValueError):
            ModelRecipe("SPAR11", phi=[0.3, 0.2], alpha=[1.0, 0.5])

    def test_short_burn_in_rejected(self):
        with pytest.raises(ValueError, match="burn-in"):
            ModelRecipe("SPAR11", phi=[0.9, 0.9], burn_in=1)

    def test_burn_in_covers_mixing(self):
        r = ModelRecipe("SPAR11", phi=[0.4, -0.3, 0.2, 0.1])
        assert r.default_burn_in() >= r.mixing_length()
        assert r.default_burn_in() >= 10

    def test_dict_round_trip(self):
        r = ModelRecipe("PeriodicMA2Seasonal", s=3, u=2, a0=0.2, a=[0.1, 0.2, 0.3], D0=0.1)
        assert ModelRecipe.from_dict(r.to_dict()) == r

    def test_fractional_orders_bounded(self):
        with pytest.raises(ValueError):
            ModelRecipe("PeriodicMA2Seasonal", s=2, u=2, a=[0.1, 0.2], D0=0.6)


class TestSimulate:
    def test_zero_innovations(self):
        r = ModelRecipe("SPAR11", phi=[0.4, -0.3], scale=0.0)
        assert np.all(simulate(r, 40, seed=5).values == 0.0)

    def test_same_seed_same_path(self):
        r = ModelRecipe("PeriodicMA2Seasonal", s=3, u=2, a0=0.3, a=[0.1, 0.2, 0.3])
        a = simulate(r, 60, seed=11).values
        b = simulate(r, 60, seed=11).values
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, simulate(r, 60, seed=12).values)

    def test_periodic_ar_inversion(self, rng):
        phi = [0.4, -0.3, 0.2, 0.1]
        r = ModelRecipe("SPAR11", phi=phi)
        T = 4
        Y0, rep = simulate_increments(r, 2, 1, seed=0)
        burn = rep["burn_in"]
        L = 12
        eps = rng.standard_normal((1, burn + L, T))
        Y, _ = simulate_increments(r, L, 1, innovations=eps)
        x = integrate_levels(Y, r.increment_spec())[0].reshape(-1)
        for j in range(2 * T, len(x)):
            f = phi[j % T]
            resid = (x[j] - f * x[j - 1]) - (x[j - T] - f * x[j - T - 1])
            block = j // T - 1  # increment block index within Y
            assert resid == pytest.approx(eps[0, burn + block, j % T], abs=1e-12)

    def test_initial_values_zero(self):
        r = ModelRecipe("PeriodicMA2Seasonal", s=3, u=2, a0=0.3, a=[0.1, 0.2, 0.3])
        xi, rep = simulate_blocks(r, 10, start=-5, reps=2, seed=1)
        assert rep["initial_values"] == "zero"
        assert np.all(xi[:, :r.increment_spec().order] == 0.0)

    def test_fractional_truncation_reported(self):
        r = ModelRecipe("PeriodicMA2Seasonal", s=2, u=2, a0=0.3, a=[0.1, 0.2], D0=-0.2)
        _, rep = simulate_increments(r, 4, 1, seed=0)
        assert rep["method"] == "truncated MA"
        # slowly decaying fractional weights stop at the length cap with the achieved tail recorded
        assert rep["tail_bound"] < 1e-6 or rep["ma_length"] == MAX_MA_LENGTH
        assert np.isfinite(rep["tail_bound"])

    def test_fast_decay_meets_tail_target(self):
        r = ModelRecipe("PSARIMA", T=1, spec={"factors": [[1, 1, 1, 0.0]]}, ma=[1.0, 0.5],
                        ar=[1.0, -0.5], describes="fractional")
        _, rep = simulate_increments(r, 4, 1, seed=0)
        assert rep["tail_bound"] < 1e-6

    def test_length_must_fill_blocks(self):
        with pytest.raises(ValueError):
            simulate(ModelRecipe("SPAR11", phi=[0.4, -0.3]), 7)


class TestBruteForce:
    def test_no_past_gives_variance(self, seasonal_ma):
        recipe, _, lifted = seasonal_ma
        out = brute_force_projection(recipe, lifted, 0)
        assert out["mse"] == out["variance"]

    def test_non_increasing_in_past_length(self, seasonal_ma):
        recipe, _, lifted = seasonal_ma
        mses = [brute_force_projection(recipe, lifted, P)["mse"] for P in (0, 1, 2, 4, 8, 16)]
        assert all(b <= a + 1e-12 for a, b in zip(mses, mses[1:]))

    def test_converges_to_infinite_past(self, seasonal_ma):
        recipe, model, lifted = seasonal_ma
        delta = solve_factorized(model, lifted).delta
        assert brute_force_projection(recipe, lifted, 32)["mse"] == pytest.approx(delta, rel=1e-10)

    def test_matches_dense_oracle(self, seasonal_ma):
        recipe, _, lifted = seasonal_ma
        ma, _, _ = recipe.matrices()
        for P in (0, 3):
            ref = finite_past_mse(ma, lifted.b, P)
            assert brute_force_projection(recipe, lifted, P)["mse"] == pytest.approx(ref, rel=1e-10)

    def test_empirical_moments(self, seasonal_ma):
        recipe, model, lifted = seasonal_ma
        delta = solve_factorized(model, lifted).delta
        out = brute_force_projection(recipe, lifted, 64, ensemble=100000, seed=4)
        assert out["mse"] == pytest.approx(delta, rel=1e-2)


class TestMonteCarlo:
    def test_deterministic_path_has_zero_error(self):
        r = ModelRecipe("SPAR11", phi=[0.4, -0.3], rho=0.5, scale=0.0)
        model = ModelRecipe("SPAR11", phi=[0.4, -0.3]).model()
        lifted = lift_functional(model.spec, FunctionalSpec.geometric([0.5], 0.5), T=2)
        out = monte_carlo_mse(r, solve_factorized(model, lifted, s_length=16), reps=100)
        assert out["mse"] == 0.0

    def test_periodic_ar_within_three_se(self, periodic_ar):
        recipe, model, lifted = periodic_ar
        sol = solve_factorized(model, lifted, s_length=16)
        out = monte_carlo_mse(recipe, sol, reps=4000, seed=2)
        assert out["delta"] == pytest.approx(periodic_ar_delta(recipe.phi, 0.5), rel=1e-8)
        assert out["within_3se"]

    def test_standard_error_scaling(self, periodic_ar):
        recipe, model, lifted = periodic_ar
        sol = solve_factorized(model, lifted, s_length=16)
        a = monte_carlo_mse(recipe, sol, reps=4000, seed=7)
        b = monte_carlo_mse(recipe, sol, reps=8000, seed=8)
        assert a["se"] / b["se"] == pytest.approx(np.sqrt(2), rel=0.15)

    def test_seed_reproducible(self, periodic_ar):
        recipe, model, lifted = periodic_ar
        sol = solve_factorized(model, lifted, s_length=16)
        assert monte_carlo_mse(recipe, sol, reps=500, seed=3) == monte_carlo_mse(recipe, sol, reps=500, seed=3)

    def test_errors_orthogonal_to_past(self, seasonal_ma):
        recipe, model, lifted = seasonal_ma
        sol = solve_factorized(model, lifted, s_length=32)
        out = orthogonality_check(recipe, sol, reps=10000, lags=range(1, 17), seed=5)
        assert out["passed"]


class TestStructuralFunction:
    def test_empirical_matches_spectral(self):
        recipe = ModelRecipe("PeriodicMA2Seasonal", s=2, u=2, a0=0.3, a=[0.1, 0.2])
        model = recipe.model()
        lags = list(range(-8, 9))
        emp = empirical_structural_function(recipe, lags, samples=100000, seed=9)
        worst = 0.0
        for l in lags:
            mean, se = emp[l]
            ref = structural_function(model, l, grid=2 ** 10)
            worst = max(worst, float(np.max(np.abs(mean - ref) / np.maximum(se, 1e-12) * (se > 0))))
        assert worst < 3.5
