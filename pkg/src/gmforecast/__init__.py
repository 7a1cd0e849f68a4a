"""Optimal and minimax-robust linear forecasting for periodic sequences with seasonal increments."""
from .increment_algebra import (
    Factor,
    IncrementSpec,
    classify_stationarity,
    eval_beta,
    eval_chi,
    expand_inverse,
    expand_operator,
    gi_coefficients,
)
from .blocking import FunctionalSpec, ScalarSeries, VectorSeries, block, gm_increment, unblock
from .spectral import SpectralModel, fourier_coeffs, mu_factor, structural_function, w_coefficients
from .forecaster import (
    apply_predictor,
    forecast_value,
    lift_functional,
    solve,
    solve_classical,
    solve_factorized,
)
from .minimax import (
    DensityClassSpec,
    LeastFavorableSolution,
    class_membership,
    delta_cross,
    lf_residual,
    saddle_check,
    solve_lf_scalar,
)
from .simulation import ModelRecipe, brute_force_projection, monte_carlo_mse, simulate

__version__ = "0.1.0"
