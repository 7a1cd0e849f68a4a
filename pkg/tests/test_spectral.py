import numpy as np
import pytest
from scipy import linalg

from gmforecast.increment_algebra import Factor, IncrementSpec, chi_beta_ratio, gi_coefficients
from gmforecast.simulation import ModelRecipe, empirical_structural_function
from gmforecast.spectral import (
    SpectralModel,
    ar_ma_expand,
    factorize_scalar,
    fourier_coeffs,
    invert_factor,
    minimality_check,
    mu_factor,
    offset_grid,
    structural_function,
    w_coefficients,
    FactorSeries,
)

from oracles import ma_autocov, trig_fourier

DIFF = IncrementSpec.of(Factor(1, 1, 1))
FLAT = IncrementSpec.of(Factor(1, 1, 0))


class TestModel:
    def test_needs_exactly_one_form(self):
        with pytest.raises(ValueError):
            SpectralModel(1, FLAT)

    def test_grid_must_be_psd(self):
        vals = -np.ones(16)
        with pytest.raises(ValueError):
            SpectralModel.from_grid(FLAT, vals)

    def test_ar_ma_expand_geometric(self):
        coefs, tail = ar_ma_expand(np.ones((1, 1, 1)), np.array([[[1.0]], [[-0.5]]]), 40)
        assert coefs[:, 0, 0] == pytest.approx(0.5 ** np.arange(40))
        assert tail == pytest.approx(0.5 ** 40 / 0.5, rel=1e-6)

    def test_density_views_agree(self):
        m = SpectralModel.from_ma(DIFF, [1.0, 0.4], describes="base")
        lam = offset_grid(64)
        fy = m.increment_density(lam)[:, 0, 0]
        f = m.density(lam)[:, 0, 0]
        assert fy == pytest.approx(chi_beta_ratio(DIFF, lam) * f, rel=1e-13)


class TestFourierCoeffs:
    def test_constant_integrand_gives_impulse(self):
        blk = fourier_coeffs(SpectralModel.from_ma(DIFF, [1.0]), 5, grid=256)
        assert blk.lags[:, 0, 0] == pytest.approx([1, 0, 0, 0, 0, 0], abs=1e-15)

    def test_explicit_fourier_pair(self):
        lam = offset_grid(256)
        m = SpectralModel.from_grid(FLAT, 1.0 / (1.0 + np.cos(lam)), describes="increment")
        blk = fourier_coeffs(m, 4)
        assert blk.lags[:, 0, 0] == pytest.approx([1.0, 0.5, 0, 0, 0], abs=1e-12)

    def test_seasonal_ma_against_fine_grid(self, seasonal_ma):
        _, model, _ = seasonal_ma
        blk = fourier_coeffs(model, 8, grid=2 ** 12)
        fine = trig_fourier(model.inverse_weight(offset_grid(10 * 2 ** 12)), range(9))
        assert np.max(np.abs(blk.lags - fine)) < 1e-8

    def test_hermitian_lag_symmetry(self, seasonal_ma):
        _, model, _ = seasonal_ma
        blk = fourier_coeffs(model, 6, grid=2 ** 12)
        for l in range(1, 6):
            assert np.allclose(blk.lag(-l), blk.lag(l).conj().T)

    def test_toeplitz_is_positive_definite(self, periodic_ar, seasonal_ma):
        for _, model, _ in (periodic_ar, seasonal_ma):
            Q = fourier_coeffs(model, 32, grid=2 ** 12).toeplitz(32)
            assert np.allclose(Q, Q.conj().T)
            linalg.cholesky(Q, lower=True)

    def test_error_estimate_bounds_refinement(self, seasonal_ma):
        _, model, _ = seasonal_ma
        coarse = fourier_coeffs(model, 10, grid=2 ** 10, tol=1.0)
        fine = fourier_coeffs(model, 10, grid=2 ** 11, tol=1.0)
        assert np.all(np.abs(fine.lags - coarse.lags) <= coarse.error)


class TestStructuralFunction:
    def test_hermitian_in_lag_and_steps(self, seasonal_ma):
        _, model, _ = seasonal_ma
        mu1, mu2 = (1, 2), (2, 1)
        a = structural_function(model, 3, mu1, mu2, grid=2 ** 12)
        b = structural_function(model, -3, mu2, mu1, grid=2 ** 12)
        assert np.allclose(b, np.conj(a).T, atol=1e-12)

    def test_zero_lag_is_psd(self, periodic_ar):
        _, model, _ = periodic_ar
        D0 = structural_function(model, 0, grid=2 ** 12)
        assert np.allclose(D0, D0.conj().T)
        assert np.min(np.linalg.eigvalsh(D0)) > 0

    def test_matches_ma_autocovariance(self):
        phi = np.array([[[1.0, 0.0], [0.3, 1.0]], [[0.5, -0.2], [0.1, 0.4]]])
        model = SpectralModel.from_ma(FLAT, phi)
        for l in (0, 1, 2):
            assert structural_function(model, l, grid=256) == pytest.approx(ma_autocov(phi, l), abs=1e-12)

    def test_monte_carlo_covariance(self):
        recipe = ModelRecipe("PSARIMA", T=2, spec={"factors": [[1, 1, 0]]},
                             ma=[[[1.0, 0.0], [0.5, 1.0]], [[0.4, 0.0], [0.0, -0.3]]])
        model = recipe.model()
        emp = empirical_structural_function(recipe, [0, 1], samples=100000, seed=3)
        for l, (mean, se) in emp.items():
            assert np.max(np.abs(mean - structural_function(model, l, grid=512))) < 1e-2


class TestWCoefficients:
    def test_unit_ratio(self):
        w = w_coefficients(FLAT, 6, grid=2 ** 10)
        assert w.values == pytest.approx([1, 0, 0, 0, 0, 0], abs=1e-14)

    @pytest.mark.parametrize("factors", [[(1, 1, 1)], [(1, 1, 1), (1, 4, 1)], [(1, 3, 1)]])
    def test_squared_modulus_matches_ratio(self, factors):
        w = w_coefficients(IncrementSpec.of(*[Factor(*f) for f in factors]), 4096)
        assert w.values[0] > 0
        assert w.accuracy < 1e-6


class TestMuFactor:
    def test_flat_spec_leaves_factor(self):
        phi = np.array([1.0, 0.6, -0.2])
        out = mu_factor(SpectralModel.from_ma(FLAT, phi, describes="base"), 5)
        assert out.phi[:, 0, 0] == pytest.approx([1.0, 0.6, -0.2, 0, 0], abs=1e-12)

    def test_base_factor_is_convolution(self):
        theta = 0.4
        out = mu_factor(SpectralModel.from_ma(DIFF, [1.0, theta], describes="base"), 64)
        w = out.w.values
        expected = np.convolve(w, [1.0, theta])[:64]
        assert out.phi[:, 0, 0] == pytest.approx(expected, abs=1e-14)

    def test_base_factor_reproduces_density(self):
        model = SpectralModel.from_ma(DIFF, [1.0, 0.4], describes="base")
        out = mu_factor(model, 4096)
        lam = np.linspace(-3.0, 3.0, 301)
        lam = lam[np.abs(lam) > 0.05]
        Phi = np.polynomial.polynomial.polyval(np.exp(-1j * lam), out.phi[:, 0, 0])
        assert np.max(np.abs(np.abs(Phi) ** 2 - model.increment_density(lam)[:, 0, 0])) < 1e-6

    def test_fractional_factor_is_gegenbauer_convolution(self):
        spec = IncrementSpec.of(Factor(1, 1, 1, 0.2), Factor(1, 4, 1, -0.1))
        phi = np.array([[[1.0, 0.0], [-0.4, 1.0]], [[-0.1, 0.0], [0.0, -0.2]]])
        out = mu_factor(SpectralModel.from_ma(spec, phi, describes="fractional"), 30)
        g = gi_coefficients(spec, 1, 29).values
        for i in range(2):
            for j in range(2):
                ref = np.convolve(g, phi[:, i, j])[:30]
                assert out.phi[:, i, j] == pytest.approx(ref, abs=1e-14)


class TestInvertFactor:
    def test_identity(self):
        inv = invert_factor(FactorSeries(np.eye(3)[None]), 4)
        assert np.allclose(inv.psi[0], np.eye(3))
        assert np.allclose(inv.psi[1:], 0.0)

    def test_geometric_inverse(self):
        theta = 0.7
        inv = invert_factor(FactorSeries(np.array([1.0, theta])[:, None, None]), 8)
        assert inv.psi[:, 0, 0] == pytest.approx((-theta) ** np.arange(8))

    def test_periodic_ar_inverse_is_ar_polynomial(self, periodic_ar):
        recipe, model, _ = periodic_ar
        inv = invert_factor(mu_factor(model, 40), 40)
        assert np.allclose(inv.psi[0], model.ar[0], atol=1e-12)
        assert np.allclose(inv.psi[1], model.ar[1], atol=1e-12)
        assert np.max(np.abs(inv.psi[2:])) < 1e-12

    def test_singular_leading_rejected(self):
        with pytest.raises(ValueError):
            invert_factor(FactorSeries(np.zeros((2, 2, 2))))

    def test_tall_factor_rejected(self):
        with pytest.raises(ValueError):
            invert_factor(FactorSeries(np.ones((2, 2, 1))))


class TestFactorizeScalar:
    def test_flat_density(self):
        m = SpectralModel.from_grid(FLAT, np.ones(256))
        out = factorize_scalar(m, 4)
        assert out.ma[:, 0, 0] == pytest.approx([1, 0, 0, 0], abs=1e-14)

    @pytest.mark.parametrize("theta", [0.3, -0.8])
    def test_ma1_closed_form(self, theta):
        lam = offset_grid(2 ** 12)
        m = SpectralModel.from_grid(FLAT, np.abs(1 + theta * np.exp(-1j * lam)) ** 2)
        out = factorize_scalar(m, 5)
        assert out.ma[:, 0, 0] == pytest.approx([1, theta, 0, 0, 0], abs=1e-9)

    def test_non_positive_rejected(self):
        vals = np.ones(64)
        vals[3] = 0.0
        with pytest.raises(ValueError):
            factorize_scalar(SpectralModel.from_grid(FLAT, vals), 4)


class TestMinimality:
    def test_bounded_fractional_model(self):
        spec = IncrementSpec.of(Factor(1, 1, 1, 0.3), Factor(1, 4, 1, -0.2))
        ok, val = minimality_check(SpectralModel.from_ma(spec, [1.0, 0.3], describes="fractional"))
        assert ok and np.isfinite(val)

    def test_extra_zero_order_diverges(self):
        ok, _ = minimality_check(SpectralModel.from_ma(DIFF, [1.0, -1.0]))
        assert not ok

    def test_identity_density_finite(self):
        ok, val = minimality_check(SpectralModel.from_ma(IncrementSpec.of(Factor(1, 2, 1)), np.eye(2)[None]))
        assert ok
        assert val == pytest.approx(2.0)
