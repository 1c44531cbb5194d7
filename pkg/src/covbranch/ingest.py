"""CSV ingestion of daily or cumulative case counts.

Grammar: UTF-8, comma separated, a header naming ``date`` and ``value``
columns and optionally ``region``.  Dates are ISO-8601 calendar days and
values are integers.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass

from .estimate import CaseSeries
from .exceptions import ParseError, ValidationError

__all__ = [
    "RawRow",
    "RawTable",
    "cumulative_from_daily",
    "daily_from_cumulative",
    "parse_csv",
    "read_table",
    "series_from_table",
    "validate",
]


@dataclass(frozen=True)
class RawRow:
    date: dt.date
    value: int
    region: str | None = None
    line: int | None = None


@dataclass(frozen=True)
class RawTable:
    rows: tuple

    @property
    def regions(self) -> list:
        return sorted({r.region for r in self.rows if r.region is not None})

    def filter(self, region: str | None) -> "RawTable":
        if region is None:
            return self
        return RawTable(tuple(r for r in self.rows if r.region == region))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        has_region = any(r.region is not None for r in self.rows)
        w.writerow(["date", "value", "region"] if has_region else ["date", "value"])
        for r in self.rows:
            w.writerow([r.date.isoformat(), r.value] + ([r.region or ""] if has_region else []))
        return buf.getvalue()


def read_table(content: str) -> RawTable:
    """Parse CSV text into rows without any series semantics.

    Raises
    ------
    ParseError
        Missing header columns or an unparseable row; carries the line number.
    """
    if content.startswith("﻿"):
        content = content[1:]
    reader = csv.reader(io.StringIO(content))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input: header row 'date,value[,region]' required", line=1) from None
    cols = [h.strip().lower() for h in header]
    if "date" not in cols or "value" not in cols:
        raise ParseError(f"header must name 'date' and 'value' columns, got {header!r}", line=1)
    i_date, i_val = cols.index("date"), cols.index("value")
    i_reg = cols.index("region") if "region" in cols else None

    rows = []
    for rec in reader:
        line = reader.line_num
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) < len(cols):
            raise ParseError(f"expected {len(cols)} fields, got {len(rec)}", line=line)
        try:
            day = dt.date.fromisoformat(rec[i_date].strip())
        except ValueError:
            raise ParseError(f"bad date {rec[i_date]!r}", line=line) from None
        raw = rec[i_val].strip()
        try:
            value = int(raw)
        except ValueError:
            try:
                f = float(raw)
            except ValueError:
                raise ParseError(f"bad value {raw!r}", line=line) from None
            if not f.is_integer():
                raise ParseError(f"value {raw!r} is not an integer count", line=line) from None
            value = int(f)
        region = (rec[i_reg].strip() or None) if i_reg is not None else None
        rows.append(RawRow(day, value, region, line))
    return RawTable(tuple(rows))


def _daily_from_cumulative(u, allow_corrections=False, lines=None):
    daily, notes = [], []
    prev = 0
    for i, total in enumerate(u):
        d = total - prev
        if d < 0:
            line = lines[i] if lines else None
            where = f"line {line}" if line else f"entry {i + 1}"
            if not allow_corrections:
                msg = f"cumulative count decreases from {prev} to {total}"
                if line:
                    raise ParseError(msg, line=line)
                raise ValidationError(f"{where}: {msg}")
            notes.append(f"{where}: cumulative count decreases from {prev} to {total}; daily value clamped to 0")
            d = 0
        daily.append(d)
        prev = max(prev, total)
    return daily, notes


def daily_from_cumulative(u, allow_corrections: bool = False) -> list:
    """First differences of a cumulative series, ``z2(1) = U(1)``.

    Raises
    ------
    ValidationError
        If ``u`` decreases and corrections are not allowed.  With
        ``allow_corrections`` the offending days are clamped to 0.
    """
    return _daily_from_cumulative(list(u), allow_corrections)[0]


def cumulative_from_daily(z2) -> list:
    """Running sums ``U(k) = z2(1) + ... + z2(k)``."""
    out, acc = [], 0
    for v in z2:
        if v < 0:
            raise ValidationError(f"daily counts must be >= 0, got {v}")
        acc += v
        out.append(acc)
    return out


def series_from_table(table: RawTable, value_kind: str = "daily", region: str | None = None,
                      fill_missing_zero: bool = False, allow_corrections: bool = False,
                      trim_leading_zeros: bool = True) -> CaseSeries:
    """Turn parsed rows into a contiguous :class:`CaseSeries`."""
    if value_kind not in ("daily", "cumulative"):
        raise ValidationError(f"value_kind must be 'daily' or 'cumulative', got {value_kind!r}")
    table = table.filter(region)
    rows = table.rows
    if region is None and len(table.regions) > 1:
        raise ValidationError(f"input holds several regions {table.regions}; select one with region=")
    if region is not None and not rows:
        raise ValidationError(f"no rows for region {region!r}")
    if region is None and table.regions:
        region = table.regions[0]

    seen = {}
    for r in rows:
        if r.date in seen:
            raise ParseError(f"duplicate date {r.date} (first seen on line {seen[r.date].line})", line=r.line)
        seen[r.date] = r
    rows = sorted(rows, key=lambda r: r.date)

    dates, values, lines = [], [], []
    for r in rows:
        if dates:
            gap = (r.date - dates[-1]).days
            if gap > 1:
                if not fill_missing_zero:
                    raise ParseError(f"missing dates between {dates[-1]} and {r.date}", line=r.line)
                for j in range(1, gap):
                    dates.append(dates[-1] + dt.timedelta(days=1))
                    values.append(0 if value_kind == "daily" else values[-1])
                    lines.append(None)
        dates.append(r.date)
        values.append(r.value)
        lines.append(r.line)

    notes = []
    if value_kind == "cumulative":
        values, notes = _daily_from_cumulative(values, allow_corrections, lines)
    else:
        for i, v in enumerate(values):
            if v < 0:
                if not allow_corrections:
                    raise ParseError(f"negative daily value {v}", line=lines[i])
                notes.append(f"line {lines[i]}: negative daily value {v} clamped to 0")
                values[i] = 0

    if trim_leading_zeros:
        start = next((i for i, v in enumerate(values) if v > 0), len(values))
        dates, values = dates[start:], values[start:]
    return CaseSeries(tuple(values), tuple(dates), region, tuple(notes))


def parse_csv(content: str, value_kind: str = "daily", region: str | None = None,
              fill_missing_zero: bool = False, allow_corrections: bool = False,
              trim_leading_zeros: bool = True) -> CaseSeries:
    """Parse ``date,value[,region]`` CSV text into a :class:`CaseSeries`.

    Parameters
    ----------
    content : str
        CSV text.
    value_kind : {'daily', 'cumulative'}
        Cumulative inputs are differenced.
    region : str, optional
        Keep only rows with this region label.
    fill_missing_zero : bool
        Insert zero days for missing dates instead of failing.
    allow_corrections : bool
        Clamp negative daily values (or decreasing cumulative totals) to 0
        and record a warning instead of failing.
    trim_leading_zeros : bool
        Start the series at the first positive count.
    """
    return series_from_table(read_table(content), value_kind, region, fill_missing_zero,
                             allow_corrections, trim_leading_zeros)


def validate(series) -> dict:
    """Summary of a series' usability for estimation; never mutates it."""
    if series is None:
        series = CaseSeries(())
    z = tuple(series.z2 if isinstance(series, CaseSeries) else series)
    leading = next((i for i, v in enumerate(z) if v > 0), len(z))
    report = {
        "length": len(z),
        "zeros": [i + 1 for i, v in enumerate(z) if v == 0],
        "total": sum(z),
        "leading_zeros": leading,
        "usable": len(z) >= 2 and sum(z) > 0,
        "warnings": list(getattr(series, "warnings", ())),
    }
    if leading:
        report["suggestion"] = f"trim {leading} leading zero day(s)"
    return report
