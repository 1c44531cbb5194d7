"""Command-line interface: ``covbranch simulate|estimate|forecast|backtest|report``.

Exit codes: 0 success, 1 data or estimation error, 2 argument or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import sys
from pathlib import Path

from . import __version__
from .estimate import (
    DEFAULT_Q,
    DEFAULT_WINDOW,
    KINDS,
    BacktestRow,
    backtest,
    ci_backtest,
    ci_mean,
    estimate,
    estimator_path,
    forecast_unregistered,
    normalize_kind,
    series_meta,
)
from .exceptions import (
    CalibrationError,
    CovbranchError,
    ExplosionError,
    UndefinedEstimateError,
    ValidationError,
)
from .ingest import parse_csv
from .model import InitialPopulation, OffspringLaw, calibrate
from .simulate import ModelConfig, monte_carlo, simulate_trajectory
from .svg import line_chart

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2
FORMATS = ("csv", "json", "svg")


class UsageError(Exception):
    """Invalid argument combination; exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _formats(text):
    fmts = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fmts if f not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {FORMATS}")
    return fmts


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_output(p):
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--format", type=_formats, default=["csv", "json"],
                   help="comma-separated subset of csv,json,svg")


def _add_input(p, multiple=False):
    if multiple:
        p.add_argument("--input", action="append", required=True, metavar="PATH",
                       help="case CSV; repeat for several series")
        p.add_argument("--label", action="append", help="display label per input, in order")
    else:
        p.add_argument("--input", required=True, metavar="PATH", help="case CSV (date,value[,region])")
    p.add_argument("--value-kind", choices=("daily", "cumulative"), default="daily")
    p.add_argument("--region")
    p.add_argument("--fill-missing-zero", action="store_true")
    p.add_argument("--allow-corrections", action="store_true")
    p.add_argument("--keep-leading-zeros", action="store_true",
                   help="do not trim zero days before the first positive count")


def _add_estimation(p):
    p.add_argument("--estimator", default="harris", choices=("harris", "lotka-nagaev", "crump-hove"),
                   type=lambda s: s.replace("_", "-"))
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW, help="Crump-Hove window N")
    p.add_argument("--seed", type=_seed, help="bootstrap seed (required when --ci-reps > 0)")
    p.add_argument("--ci-level", type=float, default=0.95)
    p.add_argument("--ci-reps", type=int, default=2000, help="bootstrap replicates; 0 disables intervals")
    p.add_argument("--q", type=float, default=DEFAULT_Q, help="registration mass of the bootstrap law")
    p.add_argument("--m-override", type=float, help="use this reproduction mean instead of the estimate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covbranch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate the two-type process")
    p.add_argument("--family", choices=("finite2", "geometric", "poisson"),
                   help="calibrate a law of this family to --m")
    p.add_argument("--m", type=float, help="target reproduction mean for --family")
    p.add_argument("--q", type=float, default=DEFAULT_Q)
    p.add_argument("--law", help="offspring law as a JSON object or a path to one")
    p.add_argument("--n0", type=int, default=1, help="initial contaminated individuals N")
    p.add_argument("--days", type=int)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--cap", type=int, default=None, help="population cap per day")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--workers", type=int, default=1, help="threads for the ensemble; output does not depend on it")
    p.add_argument("--from-metadata", metavar="PATH", help="rerun from a metadata.json written earlier")
    _add_output(p)

    p = sub.add_parser("estimate", help="estimator paths and point estimates")
    _add_input(p)
    _add_estimation(p)
    _add_output(p)

    p = sub.add_parser("forecast", help="expected unregistered population and registered proportion")
    _add_input(p)
    _add_estimation(p)
    p.add_argument("--s", type=int, help="base day (default: 20, or the last day if shorter)")
    p.add_argument("--horizon", type=int, default=5)
    p.set_defaults(ci_reps=0)
    _add_output(p)

    p = sub.add_parser("backtest", help="predicted vs observed registered counts")
    _add_input(p)
    _add_estimation(p)
    p.add_argument("--K", "--backtest-days", dest="K", type=int, default=5)
    p.add_argument("--protocol", choices=("full", "rolling"), default="full")
    _add_output(p)

    p = sub.add_parser("report", help="compare several series")
    _add_input(p, multiple=True)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--s", type=int, default=20)
    p.add_argument("--last", type=int, default=20, help="days of registered proportion to compare")
    _add_output(p)
    return parser


class _Writer:
    def __init__(self, out, formats):
        self.out = Path(out)
        self.formats = formats
        self.written = []
        self.out.mkdir(parents=True, exist_ok=True)

    def _put(self, name, text):
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.written.append(str(path))

    def csv(self, name, header, rows):
        if "csv" not in self.formats:
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self._put(name, buf.getvalue())

    def text(self, name, text, fmt="csv"):
        if fmt in self.formats:
            self._put(name, text)

    def json(self, name, obj):
        if "json" in self.formats:
            self._put(name, json.dumps(obj, indent=2, default=str) + "\n")

    def svg(self, name, series, **kw):
        if "svg" in self.formats:
            self._put(name, line_chart(series, **kw))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _load_series(args, path=None):
    path = Path(path or args.input)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from None
    return parse_csv(text, args.value_kind, args.region, args.fill_missing_zero,
                     args.allow_corrections, not args.keep_leading_zeros)


def _need_seed(args):
    if getattr(args, "ci_reps", 0) and args.seed is None:
        raise UsageError("--seed is required when bootstrap intervals are requested (--ci-reps > 0)")


def _date(series, day):
    d = series.date(day)
    return d.isoformat() if d else ""


def _law_from_args(args):
    if args.law:
        text = args.law
        if not text.lstrip().startswith("{"):
            try:
                text = Path(text).read_text(encoding="utf-8")
            except OSError as err:
                raise UsageError(f"cannot read law file {args.law}: {err}") from None
        try:
            return OffspringLaw.from_dict(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise UsageError(f"bad law specification: {err}") from None
    if args.family is None or args.m is None:
        raise UsageError("give either --law or both --family and --m")
    return calibrate(args.family, args.m, args.q)


def cmd_simulate(args) -> dict:
    if args.from_metadata:
        meta = json.loads(Path(args.from_metadata).read_text(encoding="utf-8"))
        config = ModelConfig.from_dict(meta["config"])
        seed, reps = meta["seed"], meta["reps"]
    else:
        if args.seed is None:
            raise UsageError("--seed is required for simulate")
        if args.days is None:
            raise UsageError("--days is required for simulate")
        try:
            law = _law_from_args(args)
            kw = {"cap": args.cap} if args.cap else {}
            config = ModelConfig(law, InitialPopulation.fixed(args.n0), args.days, **kw)
        except ValidationError as err:
            raise UsageError(str(err)) from None
        seed, reps = args.seed, args.reps
    if reps < 1:
        raise UsageError("--reps must be >= 1")

    out = _Writer(args.out, args.format)
    summary = monte_carlo(config, reps, seed, args.workers)
    out.text("ensemble.csv", summary.to_csv())
    meta = {"command": "simulate", "seed": seed, "reps": reps, "config": config.to_dict(),
            "n_exploded": summary.n_exploded, "extinct_fraction": summary.extinct_fraction}
    try:
        traj = simulate_trajectory(config, seed)
    except ExplosionError as err:
        meta["trajectory"] = f"not written: {err}"
        print(f"warning: {err}; trajectory.csv skipped", file=sys.stderr)
    else:
        out.text("trajectory.csv", traj.to_csv())
        out.csv("registered.csv", ["date", "value"],
                [[_synthetic_date(d), v] for d, v in enumerate(traj.z2)])
    out.json("metadata.json", meta)
    days = list(range(1, config.days + 1))
    out.svg("ensemble.svg", {"mean z1": (days, summary.mean_z1[1:]), "mean z2": (days, summary.mean_z2[1:]),
                             "q97.5 z1": (days, summary.q975[1:])},
            title="Monte Carlo ensemble", ylabel="individuals")
    return {"written": out.written}


def _synthetic_date(d):
    # synthetic series are dated from 2020-01-01 so they parse as case CSVs
    return (dt.date(2020, 1, 1) + dt.timedelta(days=d)).isoformat()


def _point_estimates(series, args):
    points = []
    for kind in KINDS:
        try:
            est = estimate(series, kind, None, args.window)
        except CovbranchError as err:
            print(f"warning: {kind} undefined at the last day: {err}", file=sys.stderr)
            continue
        if args.ci_reps:
            try:
                lo, hi = ci_mean(series, kind, args.ci_level, args.ci_reps, args.seed, args.q, args.window)
                est = est.with_ci(lo, hi, args.ci_level)
            except CalibrationError as err:
                raise UsageError(str(err)) from None
            except CovbranchError as err:
                print(f"warning: no interval for {kind}: {err}", file=sys.stderr)
        points.append(est)
    return points


def cmd_estimate(args) -> dict:
    _need_seed(args)
    series = _load_series(args)
    out = _Writer(args.out, args.format)
    paths = {k: estimator_path(series, k, args.window) for k in KINDS}
    figure = {}
    for kind, path in paths.items():
        lag = args.window if kind == "crump_hove" else 1
        rows = [[e.day, e.day + lag, _date(series, e.day + lag), repr(e.value)] for e in path]
        out.csv(f"path_{kind}.csv", ["day", "sample_end", "date", "value"], rows)
        figure[kind] = ([e.day + lag for e in path], path.values)
    ends = sorted({d for xs, _ in figure.values() for d in xs})
    lookup = {k: dict(zip(*v)) for k, v in figure.items()}
    out.csv("m_dynamics.csv", ["day", "date"] + list(KINDS),
            [[d, _date(series, d)] + [_cell(lookup[k].get(d)) for k in KINDS] for d in ends])
    points = _point_estimates(series, args)
    out.json("estimates.json", {
        "series_meta": series_meta(series),
        "point_estimates": [e.to_dict() for e in points],
        "skipped_days": {k: list(p.skipped) for k, p in paths.items()},
        "seed": args.seed, "ci_reps": args.ci_reps, "ci_level": args.ci_level, "q": args.q,
        "window": args.window,
    })
    out.svg("m_dynamics.svg", figure, title="Dynamics of the reproduction mean", ylabel="m")
    return {"written": out.written, "point_estimates": points}


def _base_day(args, series):
    s = args.s if args.s is not None else min(20, len(series))
    if not 1 <= s <= len(series):
        raise UsageError(f"--s {s} outside the series (1..{len(series)})")
    return s


def cmd_forecast(args) -> dict:
    _need_seed(args)
    series = _load_series(args)
    s = _base_day(args, series)
    if args.horizon < 0:
        raise UsageError("--horizon must be >= 0")
    primary = normalize_kind(args.estimator)
    if args.m_override is not None:
        ms = {"override": args.m_override}
    else:
        ms = {}
        for kind in KINDS:
            try:
                ms[kind] = estimate(series, kind, None, args.window).value
            except CovbranchError as err:
                print(f"warning: {kind} unavailable: {err}", file=sys.stderr)
        if primary not in ms:
            raise UndefinedEstimateError(f"{primary} estimate undefined on this series")
    forecasts = {k: forecast_unregistered(series, s, args.horizon, m) for k, m in ms.items()}
    labels = list(forecasts)
    first = forecasts[labels[0]]
    out = _Writer(args.out, args.format)
    out.csv("mean_unregistered.csv", ["day", "date", "k", "observed"] + labels,
            [[pt.day, _date(series, pt.day) if pt.observed else "", pt.k, int(pt.observed)]
             + [repr(forecasts[k].points[i].m1_hat) for k in labels] for i, pt in enumerate(first.points)])
    out.csv("alpha.csv", ["day", "date", "observed"] + labels,
            [[pt.day, _date(series, pt.day) if pt.observed else "", int(pt.observed)]
             + [repr(forecasts[k].points[i].alpha_hat) for k in labels] for i, pt in enumerate(first.points)])
    chosen = "override" if args.m_override is not None else primary
    out.json("forecast.json", {
        "series_meta": series_meta(series), "base_day": s, "horizon": args.horizon,
        "estimator": chosen, "m": ms,
        "forecast": [{"day": p.day, "k": p.k, "m1_hat": p.m1_hat, "alpha": p.alpha_hat,
                      "z2": p.z2, "observed": p.observed} for p in forecasts[chosen].points],
    })
    days = [p.day for p in first.points]
    out.svg("mean_unregistered.svg", {k: (days, [p.m1_hat for p in f.points]) for k, f in forecasts.items()},
            title="Expected unregistered contaminated", ylabel="individuals")
    out.svg("alpha.svg", {k: (days, [p.alpha_hat for p in f.points]) for k, f in forecasts.items()},
            title="Proportion of registered", ylabel="alpha")
    return {"written": out.written, "forecasts": forecasts}


def cmd_backtest(args) -> dict:
    _need_seed(args)
    series = _load_series(args)
    if not 1 <= args.K < len(series):
        raise UsageError(f"--K must satisfy 1 <= K < series length ({len(series)}), got {args.K}")
    rows = backtest(series, args.K, args.m_override, args.protocol)
    if args.ci_reps:
        try:
            cis = ci_backtest(series, args.K, args.ci_level, args.ci_reps, args.seed, args.q,
                              args.m_override, args.protocol)
        except CalibrationError as err:
            raise UsageError(str(err)) from None
        rows = [BacktestRow(r.k, r.day, r.predicted, r.observed, r.m, ci) for r, ci in zip(rows, cis)]
    out = _Writer(args.out, args.format)
    out.csv("backtest.csv", ["k", "day", "date", "predicted", "observed", "ci_lower", "ci_upper", "m"],
            [[r.k, r.day, _date(series, r.day), r.predicted, r.observed,
              _cell(r.ci[0] if r.ci else None), _cell(r.ci[1] if r.ci else None), repr(r.m)] for r in rows])
    out.json("backtest.json", {"series_meta": series_meta(series), "protocol": args.protocol,
                               "m_override": args.m_override, "seed": args.seed,
                               "ci_level": args.ci_level, "ci_reps": args.ci_reps,
                               "rows": [r.to_dict() for r in rows]})
    xs = [r.day for r in rows]
    out.svg("backtest.svg", {"predicted": (xs, [r.predicted for r in rows]),
                             "observed": (xs, [r.observed for r in rows])},
            title="Observed and predicted registered cases", ylabel="cases")
    return {"written": out.written, "rows": rows}


def _align(columns):
    """Align ``{label: [(date, value), ...]}`` on their last days.

    Returns rows ``[offset, date, v1, v2, ...]`` for the trailing overlap
    (``offset`` 0 is the last day) and any warnings.  ``date`` is filled
    only when every series ends on the same date.
    """
    cols = {k: v for k, v in columns.items()}
    length = min((len(v) for v in cols.values()), default=0)
    ends = {v[-1][0] for v in cols.values() if v}
    lengths = {len(v) for v in cols.values()}
    warnings = []
    if len(ends) > 1 or len(lengths) > 1:
        warnings.append(f"date ranges differ; aligned on the trailing {length} day(s)")
    same_end = len(ends) == 1
    rows = []
    for i in range(length):
        back = length - i
        first = next(iter(cols.values()))[-back][0]
        date = first.isoformat() if same_end and hasattr(first, "isoformat") else ""
        rows.append([1 - back, date] + [cols[k][-back][1] for k in cols])
    return rows, warnings


def cmd_report(args) -> dict:
    labels = list(args.label or [])
    inputs = list(args.input)
    if len(labels) > len(inputs):
        raise UsageError("more --label than --input values")
    harris_cols, alpha_cols, meta = {}, {}, []
    for i, path in enumerate(inputs):
        series = _load_series(args, path)
        label = labels[i] if i < len(labels) else (series.region or Path(path).stem)
        if label in harris_cols:
            label = f"{label}_{i + 1}"
        hp = estimator_path(series, "harris", args.window)
        harris_cols[label] = [(series.date(e.day + 1) or e.day + 1, e.value) for e in hp]
        m = estimate(series, "harris").value
        s = min(args.s, len(series))
        fc = forecast_unregistered(series, s, 0, m)
        alpha_cols[label] = [(series.date(p.day) or p.day, p.alpha_hat) for p in fc.points][-args.last:]
        meta.append({"label": label, "input": str(path), **series_meta(series), "base_day": s,
                     "harris": m})

    out = _Writer(args.out, args.format)
    warnings = []
    for name, cols in (("comparison_harris", harris_cols), ("comparison_alpha", alpha_cols)):
        rows, w = _align(cols)
        warnings += [f"{name}: {x}" for x in w]
        out.csv(f"{name}.csv", ["offset", "date"] + list(cols), [[_cell(c) for c in r] for r in rows])
        xs = [r[0] for r in rows]
        out.svg(f"{name}.svg", {k: (xs, [r[2 + j] for r in rows]) for j, k in enumerate(cols)},
                title=name.replace("_", " "), xlabel="days before the last observation")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out.json("index.json", {"series": meta, "warnings": warnings, "window": args.window,
                            "base_day": args.s, "last": args.last,
                            "files": [Path(f).name for f in out.written]})
    return {"written": out.written, "warnings": warnings}


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "forecast": cmd_forecast,
            "backtest": cmd_backtest, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as err:
        print(f"covbranch: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CalibrationError as err:
        print(f"covbranch: calibration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except CovbranchError as err:
        print(f"covbranch: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
