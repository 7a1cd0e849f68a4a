"""Document loading, report rendering and the four batch commands.

Each cmd_* returns (report, ok): a JSON-ready dict and whether every
requested check passed.  Nothing time- or host-dependent enters a report,
so identical inputs and seed give identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config
from .blocking import FunctionalSpec, ScalarSeries, block
from .fixtures import closed_form_delta, default_weights, named_recipe
from .forecaster import IllConditioned, apply_predictor, lift_functional, solve
from .increment_algebra import (
    IncrementSpec,
    classify_stationarity,
    expand_inverse,
    expand_operator,
    gi_coefficients,
)
from .minimax import (
    DensityClassSpec,
    InfeasibleClass,
    NonConvergence,
    saddle_check,
    solve_lf_scalar,
)
from .simulation import ModelRecipe, monte_carlo_mse
from .spectral import SpectralModel, offset_grid


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    model: Optional[str] = None
    spec: Optional[str] = None
    weights: Optional[str] = None
    cls: Optional[str] = None
    data: Optional[str] = None
    method: str = "factorized"
    out: Optional[str] = None
    fmt: str = "json"
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fmt not in ("json", "csv"):
            raise InputError("format must be json or csv")
        if self.method not in ("classical", "factorized"):
            raise InputError("method must be classical or factorized")
        for name in ("model", "spec", "weights", "cls", "data"):
            val = getattr(self, name)
            if val is not None and not val.lstrip().startswith(("{", "[")) and not os.path.exists(val):
                raise InputError(f"--{name if name != 'cls' else 'class'} file {val!r} does not exist")
        self.settings = config.resolve(self.settings)


# -- documents ------------------------------------------------------------------

def read_document(source: str):
    """Inline JSON text or a path to a JSON file."""
    text = source if source.lstrip().startswith(("{", "[")) else open(source).read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"could not parse JSON from {source!r}: {exc}") from exc


def load_spec(doc) -> IncrementSpec:
    return IncrementSpec.from_dict(doc)


def load_model(doc) -> tuple:
    """(SpectralModel, ModelRecipe or None) from a named model, a recipe or raw matrices."""
    if "name" in doc:
        recipe = named_recipe(doc)
        return recipe.model(), recipe
    if "family" in doc:
        recipe = ModelRecipe.from_dict(doc)
        return recipe.model(), recipe
    if "spec" not in doc or "ma" not in doc:
        raise InputError("a model document needs a name, a family, or spec plus ma")
    spec = load_spec(doc["spec"])
    model = SpectralModel.from_ma(spec, np.asarray(doc["ma"], dtype=float),
                                  None if doc.get("ar") is None else np.asarray(doc["ar"], dtype=float),
                                  describes=doc.get("describes", "increment"))
    recipe = ModelRecipe("PSARIMA", T=model.dim, spec=spec.to_dict(), ma=doc["ma"], ar=doc.get("ar"),
                         describes=doc.get("describes", "increment"))
    return model, recipe


def load_weights(doc, T: int):
    """Blocked rows, finite scalar weights, or a geometric (discounted) functional."""
    if doc is None:
        return None
    if isinstance(doc, list):
        return FunctionalSpec.blocked(doc) if np.ndim(doc) == 2 else FunctionalSpec.finite(doc)
    if "rows" in doc:
        return FunctionalSpec.blocked(doc["rows"])
    if "weights" in doc:
        return FunctionalSpec.finite(doc["weights"])
    if "geometric" in doc:
        g = doc["geometric"]
        return FunctionalSpec.geometric(g["pattern"], g["rho"], g.get("tol", 1e-12))
    raise InputError("weights document needs rows, weights or geometric")


def read_series(source: str, T: int) -> ScalarSeries:
    """CSV with a value column (optionally t,value); without t the last value sits at t = -1."""
    text = open(source).read() if os.path.exists(source) else source
    rows = [r for r in csv.reader(io.StringIO(text)) if r and r[0].strip()]
    if rows and not _is_number(rows[0][-1]):
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    else:
        header = None
    if not rows:
        raise InputError("data file holds no values")
    if header and "t" in header:
        ti, vi = header.index("t"), header.index("value") if "value" in header else len(header) - 1
        t = [int(r[ti]) for r in rows]
        vals = [float(r[vi]) for r in rows]
        if t != list(range(t[0], t[0] + len(t))):
            raise InputError("time index must be consecutive")
        start = t[0]
    else:
        vals = [float(r[-1]) for r in rows]
        start = -len(vals)
    return ScalarSeries(np.array(vals), start, T)


def _is_number(x):
    try:
        float(x)
        return True
    except ValueError:
        return False


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def render(report: dict, fmt: str = "json") -> str:
    report = _clean(report)
    if fmt == "json":
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, val in _flatten(report):
        writer.writerow([key, val])
    return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


# -- commands -------------------------------------------------------------------

def cmd_expand(spec_doc, lags: int = 16) -> tuple:
    spec = load_spec(spec_doc)
    ispec = spec.integer_part()
    e = expand_operator(ispec)
    d = expand_inverse(ispec, lags)
    report = {"spec": spec.to_dict(), "order": spec.order,
              "operator": [int(x) for x in e.values],
              "inverse": [int(x) for x in d.values],
              "inverse_tail": d.tail_bound,
              "stationarity": classify_stationarity(spec)}
    if not spec.is_integer:
        gp = gi_coefficients(spec, +1, lags)
        gm = gi_coefficients(spec, -1, lags)
        report["G_plus"] = {"values": gp.values, "tail_bound": gp.tail_bound, "norm": gp.norm}
        report["G_minus"] = {"values": gm.values, "tail_bound": gm.tail_bound, "norm": gm.norm}
    return report, True


def _weights_for(weights_doc, recipe, T):
    weights = load_weights(weights_doc, T)
    if weights is None and recipe is not None:
        weights = default_weights(recipe)
        if isinstance(weights, np.ndarray):
            weights = FunctionalSpec.blocked(weights)
    if weights is None:
        raise InputError("no weights given and the model has no default functional")
    return weights


def cmd_forecast(model_doc, weights_doc=None, method: str = "factorized", data: Optional[str] = None,
                 settings: Optional[dict] = None) -> tuple:
    cfg = config.resolve(settings)
    model, recipe = load_model(model_doc)
    T = model.dim
    weights = _weights_for(weights_doc, recipe, T)
    lifted = lift_functional(model.spec, weights, T)
    kw = {"K": cfg["K"], "grid": cfg["grid"], "s_length": cfg["s_length"]}
    sol = solve(model, lifted, method, **kw)
    report = {"method": sol.method, "delta": sol.delta, "N": lifted.N, "T": T,
              "functional_tail": lifted.tail_bound, "b": lifted.b, "v": lifted.v,
              "s_head": sol.s[:8], "history_blocks": sol.history_needed,
              "solver": {k: v for k, v in sol.report.items() if np.isscalar(v) or isinstance(v, str)}}
    ok = True
    checks = {}
    if recipe is not None:
        cf = closed_form_delta(recipe, weights)
        if cf is not None:
            rel = abs(sol.delta - cf) / cf if cf else abs(sol.delta)
            checks["closed_form"] = {"value": cf, "relative_error": rel, "passed": rel <= cfg["closed_form_rtol"]}
            ok &= checks["closed_form"]["passed"]
    if data is not None:
        series = read_series(data, T)
        hist = block(series, T, truncate=True)
        report["forecast"] = apply_predictor(sol, hist)
    report["checks"] = checks
    report["passed"] = ok
    return report, ok


def load_class(doc, spec: IncrementSpec, grid: int) -> DensityClassSpec:
    """Class document; f1, V, U may be lists on the grid or {"constant": c} (structural density)."""
    doc = dict(doc)
    n = grid
    for key in ("f1", "V", "U"):
        if isinstance(doc.get(key), dict):
            item = doc[key]
            if "constant" in item:
                doc[key] = np.full(n, float(item["constant"]))
            elif "increment_constant" in item:
                from .minimax import increment_scale
                doc[key] = float(item["increment_constant"]) / increment_scale(spec, offset_grid(n))
            else:
                raise InputError(f"cannot read density {key}")
    return DensityClassSpec.from_dict(doc)


def cmd_lf(class_doc, weights_doc, spec_doc, settings: Optional[dict] = None) -> tuple:
    cfg = config.resolve(settings)
    spec = load_spec(spec_doc)
    cls = load_class(class_doc, spec, cfg["lf_grid"])
    weights = load_weights(weights_doc, cls.dim) if weights_doc is not None else None
    if weights is None:
        raise InputError("the least favourable computation needs weights")
    lifted = lift_functional(spec, weights, cls.dim)
    try:
        sol = solve_lf_scalar(cls, lifted, spec, grid=cfg["lf_grid"], damping=cfg["lf_damping"],
                              tol=cfg["lf_tol"], max_sweeps=cfg["lf_max_sweeps"])
    except InfeasibleClass as exc:
        return {"error": str(exc), "type": "InfeasibleClass", "passed": False}, False
    except NonConvergence as exc:
        return {"error": str(exc), "type": "NonConvergence", "last_change": exc.last_change,
                "last_residual": exc.last_residual, "passed": False}, False
    saddle = saddle_check(sol, cls, cfg["saddle_samples"], cfg["saddle_tol"], seed=cfg["seed"])
    doc = sol.to_dict()
    checks = {
        "residual": {"value": sol.residual, "passed": sol.residual < cfg["lf_residual_tol"]},
        "membership": {"value": sol.constraints["max_violation"],
                       "passed": sol.constraints["max_violation"] < cfg["membership_tol"]},
        "saddle": {"value": saddle["max_violation"], "passed": saddle["passed"]},
    }
    ok = all(c["passed"] for c in checks.values()) and sol.converged
    return {"least_favourable": doc, "saddle": saddle, "checks": checks, "passed": ok}, ok


def cmd_validate(model_doc, weights_doc=None, method: str = "factorized", reps: int = 10000,
                 seed: int = 0, settings: Optional[dict] = None) -> tuple:
    cfg = config.resolve(settings)
    model, recipe = load_model(model_doc)
    weights = _weights_for(weights_doc, recipe, model.dim)
    lifted = lift_functional(model.spec, weights, model.dim)
    sol = solve(model, lifted, method, K=cfg["K"], grid=cfg["grid"], s_length=cfg["s_length"])
    mc = monte_carlo_mse(recipe, sol, reps, seed)
    ok = abs(mc["z"]) <= cfg["z_max"]
    mc["passed"] = ok
    mc["method"] = sol.method
    return mc, ok


__all__ = ["RunConfig", "InputError", "read_document", "load_model", "load_weights", "load_spec",
           "read_series", "render", "cmd_expand", "cmd_forecast", "cmd_lf", "cmd_validate",
           "IllConditioned"]
