"""Command-line interface.

Every subcommand writes its results (CSV/JSON) plus ``manifest.json`` to
``--out`` and prints a short summary. Exit codes: 0 success, 2 invalid
input or options, 3 numerical failure, 4 rejection of the maintained
assumptions (empty band intersection).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bounds import (
    breakdown_c,
    intersect_bands,
    max_plausible_c,
    te_bounds,
    theta1_band,
    theta2_family,
    Rejection,
)
from .core import GridSpec, common_support_trim, leave_one_out_rate, load_table, save_table
from .errors import ConfigurationError, MteBoundsError, NonFiniteError
from .export import dumps_json, frame_to_csv
from .infer import LivEstimator, bootstrap_bands
from .late import late_report_from_table
from .liv import fit_outcome_rf, fit_ps, liv_curve
from .simulate import (
    McConfig,
    counterexample_index_sufficiency,
    counterexample_monotonicity,
    gen_threshold_design,
    gen_differential_me,
    iv_weight_integral,
    run_mc,
)

DEFAULT_CS = "1.1111111111111112,1.3333333333333333,1.5555555555555556,1.7777777777777777"
NOT_IN_MANIFEST = ("func", "workers")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _add_data(p):
    g = p.add_argument_group("input")
    g.add_argument("--data", required=True, help="CSV file with a header row")
    for role in ("y", "t", "d", "z", "x", "judge"):
        g.add_argument(f"--{role}-col", dest=f"{role}_col", default=None, help=f"header of the {role} column")


def _add_pipeline(p):
    g = p.add_argument_group("estimation")
    g.add_argument("--leave-one-out", action="store_true", help="build z as the judge leave-one-out rate of t")
    g.add_argument("--min-cases", type=int, default=20, help="drop judges with this many cases or fewer")
    g.add_argument("--trim", choices=("t", "d", "none"), default="t", help="common-support trim on this arm")
    g.add_argument("--degree-ps", type=int, default=2, help="propensity polynomial degree")
    g.add_argument("--degree-mte", type=int, default=1, help="MTE polynomial degree K")
    g.add_argument("--grid-quantiles", type=int, default=19, help="number of interior quantiles of z")
    g.add_argument("--pooled", action="store_true", help="average curves over groups")
    g.add_argument("--min-denominator", type=float, default=1e-6)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtebounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="LIV curves for the observed (and true) treatment")
    _add_data(p)
    _add_pipeline(p)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="bands, scaled family, parameter bounds")
    _add_data(p)
    _add_pipeline(p)
    p.add_argument("--c", type=_floats, default=[1.2], help="comma-separated sensitivity constants")
    p.add_argument("--effect-range", type=float, nargs=2, metavar=("LOW", "HIGH"), default=None,
                   help="report the largest c keeping the band inside this range")
    p.add_argument("--theta2", action="store_true", help="add the scaled-family envelope")
    p.add_argument("--te", choices=("ATE", "ATT", "ATU"), default=None, help="parameter to bound")
    p.add_argument("--group", default=None, help="group label for --te (default: the only group)")
    p.add_argument("--extrapolate", action="store_true", help="integrate over all of [0, 1]")
    p.add_argument("--breakdown", choices=("lower>0", "upper<0"), default=None)
    p.add_argument("--also", action="append", default=[], metavar="CSV",
                   help="another sample (instrument or treatment measure) to intersect with")
    p.add_argument("--boot", type=int, default=0, help="bootstrap replications (0 = off)")
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("late", help="binary-instrument Wald ratio and band")
    _add_data(p)
    p.add_argument("--c", type=float, default=1.2)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_late)

    p = sub.add_parser("simulate", help="generate a synthetic sample")
    p.add_argument("--dgp", choices=("threshold", "differential-me"), default="threshold")
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--r", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="counterexamples and the IV-weight diagnostic")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--counterexample", choices=("b", "c"))
    what.add_argument("--iv-weights", action="store_true")
    p.add_argument("--data", default=None, help="sample for --iv-weights (default: simulated)")
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--r", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("mc", help="bias and coverage study")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--r", type=float, default=0.95)
    p.add_argument("--c", type=_floats, default=_floats(DEFAULT_CS))
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--workers", type=int, default=None, help="process count (default: MTEBOUNDS_WORKERS or 1)")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_mc)
    return parser


# helpers -------------------------------------------------------------------------

def _columns(args) -> dict:
    return {role: getattr(args, f"{role}_col") for role in ("y", "t", "d", "z", "x", "judge")
            if getattr(args, f"{role}_col", None)}


def _prepare(args, path=None):
    table = load_table(path or args.data, _columns(args))
    if args.leave_one_out:
        table = leave_one_out_rate(table, args.min_cases)
    if args.trim != "none":
        table = common_support_trim(table, args.trim)
    return table


def _curves(args, table, grid):
    ps_t = fit_ps(table, "t", args.degree_ps)
    rf = fit_outcome_rf(table, (args.degree_ps, args.degree_mte))
    f_hat = liv_curve(rf, ps_t, grid, args.min_denominator)
    theta_hat = None
    if table.d is not None:
        ps_d = fit_ps(table, "d", args.degree_ps)
        theta_hat = liv_curve(rf, ps_d, grid, args.min_denominator)
    return ps_t, rf, f_hat, theta_hat


def _check_finite(frame: pd.DataFrame):
    num = frame.select_dtypes(include=[np.number])
    if not np.all(np.isfinite(num.to_numpy(dtype=float))):
        raise NonFiniteError("an output column has non-finite values")


def _write_csv(frame: pd.DataFrame, path: Path):
    _check_finite(frame)
    frame_to_csv(frame, path)


def _manifest(args, command, out: Path, table=None, seed=None, extra=None):
    options = {k: v for k, v in sorted(vars(args).items()) if k not in NOT_IN_MANIFEST}
    manifest = {
        "subcommand": command,
        "options": options,
        "input": None if table is None else {**table.fingerprint(),
                                             "steps": [dict(step=s.step, rows_in=s.rows_in, rows_out=s.rows_out, detail=s.detail)
                                                       for s in table.history]},
        "version": __version__,
        "seed": seed,
    }
    if extra:
        manifest.update(extra)
    dumps_json(manifest, out / "manifest.json")


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(args, table):
    return GridSpec.from_quantiles(table.z, args.grid_quantiles, per_group=not args.pooled)


# subcommands --------------------------------------------------------------------

def cmd_estimate(args) -> int:
    out = _outdir(args.out)
    table = _prepare(args)
    grid = _grid(args, table)
    _, _, f_hat, theta_hat = _curves(args, table, grid)
    frame = pd.DataFrame({"z": f_hat.z, "x": f_hat.x, "f_hat": f_hat.values})
    if theta_hat is not None:
        frame["theta_hat"] = theta_hat.values
    _write_csv(frame, out / "curves.csv")
    _manifest(args, "estimate", out, table)
    print(f"wrote {len(frame)} grid rows to {out / 'curves.csv'}")
    return 0


def cmd_bounds(args) -> int:
    out = _outdir(args.out)
    table = _prepare(args)
    grid = _grid(args, table)
    ps_t, rf, f_hat, theta_hat = _curves(args, table, grid)
    summary = {}
    frames = []
    for c in args.c:
        band = theta1_band(f_hat, c)
        frame = band.to_frame()
        if theta_hat is not None:
            frame["theta_hat"] = theta_hat.values
        if args.theta2:
            env = theta2_family(f_hat, ps_t, c, 201).envelope()
            frame["theta2_lower"], frame["theta2_upper"] = env.lower, env.upper
        frames.append(frame)
    _write_csv(pd.concat(frames, ignore_index=True), out / "bounds.csv")

    if args.also:
        c = args.c[0]
        bands = [theta1_band(f_hat, c)]
        for path in args.also:
            other = _prepare(args, path)
            _, _, f_other, _ = _curves(args, other, grid)
            bands.append(theta1_band(f_other, c))
        result = intersect_bands(bands)
        if isinstance(result, Rejection):
            dumps_json({"rejected": True, "z": result.z, "x": result.x, "lower": result.lower, "upper": result.upper},
                       out / "rejection.json")
            _manifest(args, "bounds", out, table, args.seed)
            result.raise_()
        _write_csv(result.to_frame(), out / "intersection.csv")

    if args.effect_range is not None:
        pc = max_plausible_c(f_hat, *args.effect_range)
        summary["max_plausible_c"] = str(pc)
    if args.te is not None:
        kw = {"x": _group_label(args.group, f_hat), "domain": "extrapolate" if args.extrapolate else "restricted"}
        te = [te_bounds(f_hat, ps_t, c, args.te, **kw).summary() for c in args.c]
        summary["te_bounds"] = te
        if args.breakdown:
            bd = breakdown_c(f_hat, ps_t, args.te, args.breakdown, **kw)
            summary["breakdown"] = {"c": bd.value, "scanned": list(bd.scanned), "c_max_admissible": bd.c_max_admissible}
    if args.boot > 0:
        est = LivEstimator("t", args.degree_ps, args.degree_mte)
        boots = [bootstrap_bands(table, est, grid, args.boot, args.level, seed=args.seed, workers=args.workers).to_frame()
                 .assign(curve="f_hat", c=1.0)]
        for c in args.c:
            for side in ("lower", "upper"):
                e = LivEstimator("t", args.degree_ps, args.degree_mte, band=side, c=c)
                boots.append(bootstrap_bands(table, e, grid, args.boot, args.level, seed=args.seed, workers=args.workers)
                             .to_frame().assign(curve=side, c=c))
        _write_csv(pd.concat(boots, ignore_index=True), out / "bootstrap.csv")
    if summary:
        dumps_json(summary, out / "summary.json")
        print(dumps_json(summary), end="")
    _manifest(args, "bounds", out, table, args.seed if args.boot else None)
    print(f"wrote bands for c = {', '.join(map(repr, args.c))} to {out / 'bounds.csv'}")
    return 0


def _group_label(text, curve):
    if text is None:
        return None
    for g in curve.groups:
        if str(g) == text:
            return g
    raise ConfigurationError(f"group {text!r} is not on the curve")


def cmd_late(args) -> int:
    out = _outdir(args.out)
    table = load_table(args.data, _columns(args))
    report = late_report_from_table(table, args.c)
    dumps_json(report, out / "late.json")
    _manifest(args, "late", out, table)
    print(dumps_json(report), end="")
    return 0


def cmd_simulate(args) -> int:
    if args.dgp == "threshold":
        table = gen_threshold_design(McConfig(r=args.r, n=args.n), args.seed)
    else:
        table = gen_differential_me(args.n, args.seed)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, path)
    _manifest(args, "simulate", path.parent, table, args.seed)
    print(f"wrote {table.n} rows to {path}")
    return 0


def cmd_check(args) -> int:
    if args.counterexample == "b":
        result = {"counterexample": "b", "value": counterexample_monotonicity()}
        print(repr(result["value"]))
    elif args.counterexample == "c":
        res = counterexample_index_sufficiency()
        result = {"counterexample": "c", "by_instrument": res.by_instrument, "by_score": res.by_score,
                  "index_sufficiency_violated": res.violated}
        print(f"{res.by_instrument} {res.by_score}")
    else:
        table = load_table(args.data) if args.data else gen_threshold_design(McConfig(r=args.r, n=args.n), args.seed)
        diag = iv_weight_integral(table)
        result = {"iv_weight_integral": diag.integral, "cov_ratio": diag.cov_ratio}
        print(f"{diag.integral} {diag.cov_ratio}")
    if args.out:
        out = _outdir(args.out)
        dumps_json(result, out / "check.json")
        _manifest(args, "check", out, seed=args.seed)
    return 0


def cmd_mc(args) -> int:
    out = _outdir(args.out)
    config = McConfig(r=args.r, n=args.n, reps=args.reps, cs=tuple(args.c), seed=args.seed)
    report = run_mc(config, workers=args.workers)
    _write_csv(report.to_frame(), out / "mc_report.csv")
    report.to_json(out / "mc_report.json")
    _manifest(args, "mc", out, seed=args.seed, extra={"failed": report.failed})
    print(f"{report.used} of {report.reps} replications used; report in {out / 'mc_report.csv'}")
    return 0


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except MteBoundsError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


def main():
    sys.exit(run(sys.argv[1:]))
