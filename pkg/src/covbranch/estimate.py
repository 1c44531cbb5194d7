"""Reproduction-mean estimators, forecasts of the unregistered population,
registered proportions, backtests and bootstrap intervals.

Days are 1-based: ``z2(1)`` is the first entry of a series.  An estimator
"at day n" follows the usual subscripting, so Harris at ``n`` consumes
entries ``1..n+1``.
"""

from __future__ import annotations

import datetime as dt
import io
import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from numbers import Integral, Real

import numpy as np

from .exceptions import (
    CalibrationError,
    InsufficientDataError,
    UndefinedEstimateError,
    ValidationError,
)
from .model import InitialPopulation, calibrate, classify
from .simulate import ModelConfig, make_rng, simulate_paths

__all__ = [
    "KINDS",
    "BacktestRow",
    "CaseSeries",
    "EstimateReport",
    "EstimatorPath",
    "Forecast",
    "ForecastPoint",
    "MeanEstimate",
    "alpha",
    "backtest",
    "build_report",
    "ci_backtest",
    "ci_mean",
    "crump_hove",
    "estimate",
    "estimator_path",
    "forecast_unregistered",
    "harris",
    "lotka_nagaev",
    "round_half_away",
]

KINDS = ("lotka_nagaev", "harris", "crump_hove")
DEFAULT_WINDOW = 5
DEFAULT_Q = 0.3


def normalize_kind(kind: str) -> str:
    k = kind.lower().replace("-", "_")
    if k not in KINDS:
        raise ValidationError(f"unknown estimator {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class CaseSeries:
    """Observed daily registered counts ``z2(1..n)``.

    Parameters
    ----------
    z2 : tuple of int
    dates : tuple of datetime.date, optional
        Contiguous calendar days, one per entry.
    region : str, optional
    warnings : tuple of str
        Corrections applied while parsing.
    """

    z2: tuple
    dates: tuple | None = None
    region: str | None = None
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "z2", tuple(self.z2))
        for i, v in enumerate(self.z2, start=1):
            if isinstance(v, bool) or not isinstance(v, Integral) or v < 0:
                raise ValidationError(f"day {i}: counts must be non-negative integers, got {v!r}")
        if self.dates is not None:
            dates = tuple(self.dates)
            object.__setattr__(self, "dates", dates)
            if len(dates) != len(self.z2):
                raise ValidationError("dates and counts differ in length")
            for a, b in zip(dates, dates[1:]):
                if (b - a).days != 1:
                    raise ValidationError(f"dates not contiguous between {a} and {b}")

    @classmethod
    def from_counts(cls, z2, start: dt.date | str | None = None, region=None) -> "CaseSeries":
        z2 = tuple(int(v) for v in z2)
        dates = None
        if start is not None:
            if isinstance(start, str):
                start = dt.date.fromisoformat(start)
            dates = tuple(start + dt.timedelta(days=i) for i in range(len(z2)))
        return cls(z2, dates, region)

    def __len__(self):
        return len(self.z2)

    def z(self, day: int) -> int:
        """Count registered on ``day`` (1-based)."""
        if not 1 <= day <= len(self.z2):
            raise IndexError(f"day {day} outside 1..{len(self.z2)}")
        return self.z2[day - 1]

    @property
    def u(self) -> tuple:
        """Cumulative totals ``U(1..n)``."""
        out, acc = [], 0
        for v in self.z2:
            acc += v
            out.append(acc)
        return tuple(out)

    def date(self, day: int):
        return self.dates[day - 1] if self.dates else None

    def to_csv(self, start: dt.date | str = "2020-01-01") -> str:
        """``date,value`` CSV readable by :func:`covbranch.ingest.parse_csv`."""
        dates = self.dates
        if dates is None:
            dates = CaseSeries.from_counts(self.z2, start).dates
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "value"])
        for d, v in zip(dates, self.z2):
            w.writerow([d.isoformat(), v])
        return buf.getvalue()


def _values(series) -> tuple:
    if isinstance(series, CaseSeries):
        return series.z2
    vals = tuple(series)
    for v in vals:
        if not isinstance(v, Real) or v < 0:
            raise ValidationError(f"counts must be non-negative numbers, got {v!r}")
    return vals


def _ratio(num, den):
    if isinstance(num, Integral) and isinstance(den, Integral):
        return float(Fraction(int(num), int(den)))
    return float(num / den)


@dataclass(frozen=True)
class MeanEstimate:
    """Point estimate of the reproduction mean.

    ``numerator / denominator`` is the exact ratio behind ``value``.
    """

    kind: str
    value: float
    day: int
    numerator: float = 0
    denominator: float = 1
    window: int | None = None
    ci: tuple | None = None

    def __post_init__(self):
        if self.value < 0:
            raise ValidationError("estimate must be >= 0")
        if self.ci is not None and not self.ci[0] <= self.value <= self.ci[1]:
            raise ValidationError("confidence interval must contain the estimate")

    def with_ci(self, lower, upper, level) -> "MeanEstimate":
        return MeanEstimate(self.kind, self.value, self.day, self.numerator,
                            self.denominator, self.window, (lower, upper, level))

    @property
    def criticality(self):
        return classify(self.value)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "value": self.value, "day": self.day,
             "numerator": self.numerator, "denominator": self.denominator,
             "criticality": self.criticality.value}
        if self.window is not None:
            d["window"] = self.window
        if self.ci is not None:
            d["ci"] = {"lower": self.ci[0], "upper": self.ci[1], "level": self.ci[2]}
        return d


def lotka_nagaev(series, n: int) -> MeanEstimate:
    """One-step ratio ``z2(n+1) / z2(n)``."""
    z = _values(series)
    if not 1 <= n < len(z):
        raise InsufficientDataError(f"Lotka-Nagaev at day {n} needs 1 <= n < {len(z)}")
    num, den = z[n], z[n - 1]
    if den == 0:
        raise UndefinedEstimateError(f"Lotka-Nagaev undefined at day {n}: z2({n}) = 0")
    return MeanEstimate("lotka_nagaev", _ratio(num, den), n, num, den)


def harris(series, n: int) -> MeanEstimate:
    """Ratio of cumulative sums ``(z2(2) + ... + z2(n+1)) / (z2(1) + ... + z2(n))``."""
    z = _values(series)
    if not 1 <= n < len(z):
        raise InsufficientDataError(f"Harris at day {n} needs 1 <= n < {len(z)}")
    den = sum(z[:n])
    num = sum(z[1 : n + 1])
    if den == 0:
        raise UndefinedEstimateError(f"Harris undefined at day {n}: U({n}) = 0")
    return MeanEstimate("harris", _ratio(num, den), n, num, den)


def crump_hove(series, n: int, window: int = DEFAULT_WINDOW) -> MeanEstimate:
    """Windowed ratio ``sum z2(n+1..n+N) / sum z2(n..n+N-1)``."""
    z = _values(series)
    if window < 1:
        raise ValidationError("window must be >= 1")
    if n < 1 or n + window > len(z):
        raise InsufficientDataError(
            f"Crump-Hove at day {n} with window {window} needs 1 <= n <= {len(z) - window}")
    den = sum(z[n - 1 : n - 1 + window])
    num = sum(z[n : n + window])
    if den == 0:
        raise UndefinedEstimateError(f"Crump-Hove undefined at day {n} (window {window}): zero denominator")
    return MeanEstimate("crump_hove", _ratio(num, den), n, num, den, window)


def _last_day(kind, length, window):
    return length - (window if kind == "crump_hove" else 1)


def estimate(series, kind: str = "harris", n: int | None = None, window: int = DEFAULT_WINDOW) -> MeanEstimate:
    """Dispatch on ``kind``; ``n`` defaults to the last admissible day."""
    kind = normalize_kind(kind)
    if n is None:
        n = _last_day(kind, len(_values(series)), window)
    if kind == "harris":
        return harris(series, n)
    if kind == "lotka_nagaev":
        return lotka_nagaev(series, n)
    return crump_hove(series, n, window)


@dataclass(frozen=True)
class EstimatorPath:
    """Estimates for every admissible day; ``skipped`` lists undefined days."""

    kind: str
    estimates: tuple
    skipped: tuple = ()
    window: int | None = None

    def __iter__(self):
        return iter(self.estimates)

    def __len__(self):
        return len(self.estimates)

    def __getitem__(self, i):
        return self.estimates[i]

    @property
    def values(self) -> list:
        return [e.value for e in self.estimates]

    @property
    def days(self) -> list:
        return [e.day for e in self.estimates]


def estimator_path(series, kind: str = "harris", window: int = DEFAULT_WINDOW) -> EstimatorPath:
    """Rolling estimates, one per sample ``z2(1..s)``.

    Entry ``day`` is the estimator subscript ``n``; the sample it uses ends
    at ``n + 1`` (``n + window`` for Crump-Hove).
    """
    kind = normalize_kind(kind)
    length = len(_values(series))
    if length < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {length}")
    out, skipped = [], []
    for n in range(1, _last_day(kind, length, window) + 1):
        try:
            out.append(estimate(series, kind, n, window))
        except UndefinedEstimateError:
            skipped.append(n)
    return EstimatorPath(kind, tuple(out), tuple(skipped), window if kind == "crump_hove" else None)


def alpha(z2_day, m1_hat) -> float:
    """Registered proportion ``z2 / (z2 + M1)``."""
    if z2_day < 0 or m1_hat < 0:
        raise ValidationError("alpha needs non-negative arguments")
    if z2_day == 0 and m1_hat == 0:
        raise UndefinedEstimateError("alpha undefined for 0 registered and 0 unregistered")
    return z2_day / (z2_day + m1_hat)


@dataclass(frozen=True)
class ForecastPoint:
    day: int
    k: int
    m1_hat: float
    alpha_hat: float
    z2: float
    observed: bool


@dataclass(frozen=True)
class Forecast:
    """Expected unregistered contaminated ``M1(s+k) = z2(s) m**k``.

    Points run from the base day ``s`` through the end of the series
    (``observed=True``) and ``horizon`` days beyond it.  Past the end ``z2``
    holds the projected registrations ``z2(n) m**(d-n)``.
    """

    base_day: int
    m: float
    kind: str
    points: tuple

    def __iter__(self):
        return iter(self.points)

    def at(self, day: int) -> ForecastPoint:
        return self.points[day - self.base_day]


def forecast_unregistered(series, s: int, horizon: int, m_est) -> Forecast:
    """Forecast the unregistered population from base day ``s``.

    Parameters
    ----------
    series : CaseSeries or sequence of counts
    s : int
        Base day; ``z2(s)`` stands in for ``M1(s)``.
    horizon : int
        Days forecast past the end of the series.
    m_est : MeanEstimate or float

    Raises
    ------
    UndefinedEstimateError
        If ``z2(s) = 0``, which makes every forecast degenerate.
    """
    z = _values(series)
    n = len(z)
    m = m_est.value if isinstance(m_est, MeanEstimate) else float(m_est)
    kind = m_est.kind if isinstance(m_est, MeanEstimate) else "given"
    if not 1 <= s <= n:
        raise ValidationError(f"base day s={s} outside 1..{n}")
    if horizon < 0:
        raise ValidationError("horizon must be >= 0")
    if not m > 0:
        raise ValidationError(f"reproduction mean must be > 0, got {m!r}")
    base = z[s - 1]
    if base == 0:
        raise UndefinedEstimateError(f"degenerate base: z2({s}) = 0")
    points = []
    m1 = float(base)
    reg = None
    for k in range(0, n - s + horizon + 1):
        d = s + k
        if k:
            m1 = m1 * m
        if d <= n:
            reg = z[d - 1]
        else:
            reg = reg * m
        a = alpha(reg, m1)
        points.append(ForecastPoint(d, k, m1, a, reg, d <= n))
    return Forecast(s, m, kind, tuple(points))


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class BacktestRow:
    """One-step prediction for the day ``k`` days before the end (``k = 1`` is the last day)."""

    k: int
    day: int
    predicted: int
    observed: int
    m: float
    ci: tuple | None = None

    def __post_init__(self):
        if self.ci is not None and not self.ci[0] <= self.predicted <= self.ci[1]:
            raise ValidationError("forecast interval must contain the prediction")

    def to_dict(self) -> dict:
        d = {"k": self.k, "day": self.day, "predicted": self.predicted,
             "observed": self.observed, "m": self.m}
        if self.ci is not None:
            d["ci_lower"], d["ci_upper"] = self.ci
        return d


def backtest(series, days: int, m_override: float | None = None, protocol: str = "full") -> list:
    """Re-predict the last ``days`` observations from their predecessors.

    ``protocol='full'`` uses one Harris estimate on the whole series (or
    ``m_override``); ``'rolling'`` re-estimates Harris on the data preceding
    each predicted day.  Predictions are ``round(z2(d-1) * m)`` rounded half
    away from zero.  Rows are ordered ``k = days..1``.
    """
    z = _values(series)
    n = len(z)
    if not 1 <= days < n:
        raise ValidationError(f"backtest needs 1 <= K < length ({n}), got K={days}")
    if protocol not in ("full", "rolling"):
        raise ValidationError(f"unknown backtest protocol {protocol!r}")
    full_m = m_override if m_override is not None else harris(z, n - 1).value
    rows = []
    for k in range(days, 0, -1):
        d = n - k + 1
        if m_override is None and protocol == "rolling":
            m = harris(z, d - 2).value if d >= 3 else full_m
        else:
            m = full_m
        rows.append(BacktestRow(k, d, round_half_away(z[d - 2] * m), z[d - 1], m))
    return rows


def _bootstrap_config(z, m, q, cap=None):
    law = calibrate("geometric", m, q)
    n0 = max(1, round_half_away(z[0] / q)) if q > 0 else 1
    kw = {"cap": cap} if cap else {}
    return ModelConfig(law, InitialPopulation.fixed(n0), len(z), **kw)


def _bootstrap_estimates(z, kind, n, window, point, q, replicates, seed, condition=False):
    try:
        config = _bootstrap_config(z, point, q)
    except CalibrationError as err:
        raise CalibrationError(f"bootstrap law: {err}") from None
    _, z2, exploded = simulate_paths(config, replicates, seed)
    out = []
    for path, ex in zip(z2, exploded):
        if ex or (condition and path[-1] == 0):
            continue
        try:
            out.append(estimate(path.tolist(), kind, n, window).value)
        except UndefinedEstimateError:
            pass
    if len(out) < 10:
        raise InsufficientDataError(f"only {len(out)} of {replicates} bootstrap re-estimates were defined")
    return np.array(out)


def ci_mean(series, kind: str = "harris", level: float = 0.95, replicates: int = 2000,
            seed: int = 0, q: float = DEFAULT_Q, window: int = DEFAULT_WINDOW,
            n: int | None = None, point: float | None = None,
            condition_on_survival: bool = False):
    """Parametric-bootstrap interval for the reproduction mean.

    A geometric law is calibrated to the point estimate with registration
    mass ``q``; synthetic series of the same length are simulated from
    ``Z1(0) = round(z2(1) / q)`` and re-estimated at the same day.  The
    interval is the empirical ``(1 -+ level) / 2`` quantile pair, widened if
    needed so that it contains the point estimate.

    With ``condition_on_survival`` only replicates whose last registered
    count is positive are kept, mirroring an observed series that is still
    growing.  This gives markedly narrower intervals.

    Returns
    -------
    lower, upper : float
    """
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    z = _values(series)
    kind = normalize_kind(kind)
    est = estimate(z, kind, n, window)
    if point is None:
        point = est.value
    boot = _bootstrap_estimates(z, kind, est.day, window, point, q, replicates, seed,
                                condition_on_survival)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    return min(float(lo), est.value), max(float(hi), est.value)


def ci_backtest(series, days: int, level: float = 0.95, replicates: int = 2000, seed: int = 0,
                q: float = DEFAULT_Q, m_override: float | None = None, protocol: str = "full") -> list:
    """Predictive intervals for the :func:`backtest` rows.

    Each bootstrap replicate draws a Harris estimate from the parametric
    bootstrap of :func:`ci_mean`, then simulates the registrations of day
    ``d`` from ``Z1(d-2) = round(z2(d-1) / q)`` under the geometric law
    calibrated to that estimate.  Bounds are floor/ceil of the quantiles,
    widened to contain the prediction.

    Returns
    -------
    list of (int, int)
        One ``(lower, upper)`` pair per row, ordered like :func:`backtest`.
    """
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    z = _values(series)
    rows = backtest(z, days, m_override, protocol)
    point = rows[-1].m
    boot = _bootstrap_estimates(z, "harris", len(z) - 1, None, point, q, replicates, seed)
    # feasible geometric means for this q
    hi_m = 1 / q - 1 if q > 0 else math.inf
    m_star = np.clip(boot, 1e-9, hi_m)
    p = m_star / (1 + m_star)
    rng = make_rng(seed, 1 << 20)
    out = []
    for row in rows:
        n_prev = max(1, round_half_away(z[row.day - 2] / q))
        spreaders = rng.binomial(n_prev, p)
        extra = rng.negative_binomial(np.maximum(spreaders, 1), 1 - p)
        z1 = spreaders + np.where(spreaders > 0, extra, 0)
        sim = rng.binomial(z1, q)
        lo, hi = np.quantile(sim, [(1 - level) / 2, (1 + level) / 2])
        out.append((min(math.floor(lo), row.predicted), max(math.ceil(hi), row.predicted)))
    return out


@dataclass
class EstimateReport:
    """Everything the estimation workflow produces for one series."""

    series_meta: dict
    estimator_paths: list
    point_estimates: list
    forecast: dict
    alpha_path: list
    backtest: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, default=str, **kw)


def series_meta(series) -> dict:
    z = _values(series)
    meta = {"length": len(z), "total": sum(z)}
    if isinstance(series, CaseSeries):
        meta["region"] = series.region
        if series.dates:
            meta["start"] = series.dates[0].isoformat()
            meta["end"] = series.dates[-1].isoformat()
        meta["warnings"] = list(series.warnings)
    return meta


def build_report(series, kind: str = "harris", window: int = DEFAULT_WINDOW, s: int | None = None,
                 horizon: int = 5, ci_level: float = 0.95, ci_reps: int = 2000, seed: int = 0,
                 q: float = DEFAULT_Q, backtest_days: int | None = 5,
                 m_override: float | None = None) -> EstimateReport:
    """Run estimation, forecasting and (optionally) backtesting on one series.

    ``ci_reps=0`` skips the bootstrap intervals.
    """
    kind = normalize_kind(kind)
    z = _values(series)
    if len(z) < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {len(z)}")
    paths = {k: estimator_path(z, k, window) for k in KINDS}
    points = []
    for k in KINDS:
        try:
            est = estimate(z, k, None, window)
        except (UndefinedEstimateError, InsufficientDataError):
            continue
        if ci_reps:
            try:
                est = est.with_ci(*ci_mean(z, k, ci_level, ci_reps, seed, q, window), ci_level)
            except (CalibrationError, InsufficientDataError):
                pass
        points.append(est)

    chosen = m_override
    if chosen is None:
        chosen = next((e for e in points if e.kind == kind), None)
        if chosen is None:
            raise UndefinedEstimateError(f"{kind} estimate undefined on this series")
    base = min(s if s is not None else 20, len(z))
    fc = forecast_unregistered(z, base, horizon, chosen)

    rows = []
    if backtest_days and backtest_days < len(z):
        rows = backtest(z, backtest_days, m_override)
        if ci_reps:
            cis = ci_backtest(z, backtest_days, ci_level, ci_reps, seed, q, m_override)
            rows = [BacktestRow(r.k, r.day, r.predicted, r.observed, r.m, ci) for r, ci in zip(rows, cis)]

    return EstimateReport(
        series_meta=series_meta(series),
        estimator_paths=[{"kind": p.kind, "window": p.window, "skipped": list(p.skipped),
                          "days": p.days, "values": p.values} for p in paths.values()],
        point_estimates=[e.to_dict() for e in points],
        forecast={"base_day": fc.base_day, "m": fc.m, "kind": fc.kind,
                  "points": [asdict(pt) for pt in fc.points]},
        alpha_path=[{"day": pt.day, "alpha": pt.alpha_hat, "observed": pt.observed} for pt in fc.points],
        backtest=[r.to_dict() for r in rows],
    )
