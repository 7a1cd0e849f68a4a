"""Numeric defaults shared by the library entry points and the command line.

Every value here can be overridden per call (keyword) or per run (flag).
"""

DEFAULTS = {
    "grid": 2 ** 14,            # quadrature nodes for Fourier blocks
    "K": 256,                   # block-Toeplitz truncation of the classical solver
    "s_length": 256,            # number of predictor weights s(1..)
    "fourier_tol": 1e-10,       # relative target for grid refinement
    "max_grid": 2 ** 20,
    "cond_max": 1e12,           # ceiling on the Cholesky condition estimate
    "lf_grid": 2 ** 12,         # grid of least-favourable densities
    "lf_damping": 0.5,
    "lf_tol": 1e-10,
    "lf_max_sweeps": 500,
    "lf_residual_tol": 1e-6,
    "membership_tol": 1e-8,
    "saddle_samples": 50,
    "saddle_tol": 1e-8,
    "reps": 10000,
    "seed": 0,
    "z_max": 3.0,               # Monte Carlo acceptance in standard errors
    "closed_form_rtol": 1e-8,
    "lags": 16,                 # coefficients printed by `expand`
}


def resolve(overrides: dict = None) -> dict:
    """Defaults updated by the non-None entries of overrides, with sanity checks."""
    out = dict(DEFAULTS)
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in out:
            raise KeyError(f"unknown setting {k!r}")
        out[k] = type(DEFAULTS[k])(v) if not isinstance(DEFAULTS[k], float) else float(v)
    for k in ("fourier_tol", "lf_tol", "lf_residual_tol", "membership_tol", "saddle_tol", "closed_form_rtol"):
        if out[k] <= 0:
            raise ValueError(f"tolerance {k} must be positive")
    for k in ("grid", "K", "s_length", "lf_grid", "reps", "lf_max_sweeps"):
        if out[k] < 1:
            raise ValueError(f"{k} must be at least 1")
    return out
