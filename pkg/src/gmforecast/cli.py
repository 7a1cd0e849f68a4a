"""Command line: gmforecast {expand,forecast,lf,validate}."""
from __future__ import annotations

import argparse
import sys

from . import config
from .cli_io import (
    InputError,
    RunConfig,
    cmd_expand,
    cmd_forecast,
    cmd_lf,
    cmd_validate,
    read_document,
    render,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmforecast",
                                description="Optimal and minimax-robust forecasts for periodic "
                                            "sequences with seasonal increments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--grid", type=int, help=f"quadrature grid (default {config.DEFAULTS['grid']})")
        sp.add_argument("--lags", type=int, help="coefficients to print / classical truncation K")
        sp.add_argument("--seed", type=int, default=config.DEFAULTS["seed"])

    e = sub.add_parser("expand", help="operator, inverse and fractional coefficients of a spec")
    e.add_argument("--spec", required=True, help="JSON file or inline JSON of the increment spec")
    common(e)

    f = sub.add_parser("forecast", help="solve the forecasting problem for a model and functional")
    f.add_argument("--model", required=True)
    f.add_argument("--weights")
    f.add_argument("--method", choices=("classical", "factorized"), default="factorized")
    f.add_argument("--data", help="CSV of observed values ending at t = -1")
    common(f)

    lf = sub.add_parser("lf", help="least favourable density in a scalar class plus saddle check")
    lf.add_argument("--class", dest="cls", required=True)
    lf.add_argument("--weights", required=True)
    lf.add_argument("--spec", required=True)
    common(lf)

    v = sub.add_parser("validate", help="Monte Carlo check of the theoretical MSE")
    v.add_argument("--model", required=True)
    v.add_argument("--weights")
    v.add_argument("--method", choices=("classical", "factorized"), default="factorized")
    v.add_argument("--reps", type=int, default=config.DEFAULTS["reps"])
    common(v)
    return p


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format
    try:
        run = RunConfig(args.command, model=getattr(args, "model", None), spec=getattr(args, "spec", None),
                        weights=getattr(args, "weights", None), cls=getattr(args, "cls", None),
                        data=getattr(args, "data", None), method=getattr(args, "method", "factorized"),
                        out=args.out, fmt=fmt, settings={"grid": args.grid, "seed": args.seed})
        doc = lambda src: read_document(src) if src is not None else None
        if args.command == "expand":
            report, ok = cmd_expand(doc(run.spec), args.lags or config.DEFAULTS["lags"])
        elif args.command == "forecast":
            settings = dict(run.settings, K=args.lags or run.settings["K"])
            report, ok = cmd_forecast(doc(run.model), doc(run.weights), run.method, run.data, settings)
        elif args.command == "lf":
            report, ok = cmd_lf(doc(run.cls), doc(run.weights), doc(run.spec), run.settings)
        else:
            report, ok = cmd_validate(doc(run.model), doc(run.weights), run.method, args.reps, args.seed,
                                      run.settings)
    except (InputError, ValueError, KeyError, NotImplementedError) as exc:
        report, ok = {"error": str(exc), "type": type(exc).__name__, "passed": False}, False
        _emit(render(report, fmt), args.out)
        return 2
    _emit(render(report, fmt), args.out)
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
