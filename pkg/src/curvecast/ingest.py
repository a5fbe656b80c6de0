"""Hourly price/demand ingestion: CSV parsing, joining, calendar rules.

Input files are headered CSVs:

* prices:      ``date,hour,price``
* demand:      ``date,hour,gross_demand``
* wind infeed: ``date,hour,wind_infeed`` (optional; effective demand is
  gross demand minus wind infeed when supplied)
* holidays:    plain text, one ISO date per line (``#`` comments allowed)

``date`` is ISO (YYYY-MM-DD), ``hour`` is 1..24. Empty fields and the
tokens NA/NaN/null (any case) are missing values.

Calendar rules: weekends are dropped; dates listed in the holiday file are
dropped entirely; weekdays that are present in the files but carry no valid
data at all are *kept* as degenerate gap days (no curve is fitted for them,
and downstream time-series models see them as missing observations on the
contiguous workday axis). Day indices are assigned 1..T in date order.

A valid pair is an hour with both price and effective demand present and
the price not flagged as an outlier (price strictly above
``outlier_threshold``). A day's demand domain [domain_lo, domain_hi] is the
min/max demand over its valid pairs.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import ParseError

DEFAULT_OUTLIER_THRESHOLD = 200.0
DEFAULT_MIN_VALID_PAIRS = 4

_NA_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class HourlyObservation:
    """One (day, hour) cell after joining price and demand files."""

    day_index: int
    calendar_date: dt.date
    hour: int
    price: float  # NaN when missing
    demand: float  # NaN when missing (effective demand: gross - wind)
    is_outlier: bool
    is_missing: bool

    @property
    def is_valid(self) -> bool:
        """True when the pair enters curve fitting."""
        return not self.is_missing and not self.is_outlier


@dataclass(frozen=True)
class DayRecord:
    """All hourly observations of one workday plus its demand domain."""

    day_index: int
    calendar_date: dt.date
    observations: tuple[HourlyObservation, ...]
    n_valid: int
    domain_lo: float  # NaN when no valid pair
    domain_hi: float
    fit_eligible: bool

    def valid_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (demands, prices) arrays over valid pairs, demand-ordered."""
        pairs = [(o.demand, o.price) for o in self.observations if o.is_valid]
        pairs.sort()
        if not pairs:
            return np.empty(0), np.empty(0)
        u, y = zip(*pairs)
        return np.asarray(u, dtype=float), np.asarray(y, dtype=float)


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of workdays with the global demand envelope."""

    days: tuple[DayRecord, ...]
    global_lo: float
    global_hi: float
    holiday_dates: frozenset[dt.date] = field(default_factory=frozenset)
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD
    min_valid_pairs: int = DEFAULT_MIN_VALID_PAIRS

    @property
    def n_days(self) -> int:
        return len(self.days)

    def fit_days(self) -> tuple[DayRecord, ...]:
        """Days that carry enough valid pairs for curve fitting."""
        return tuple(d for d in self.days if d.fit_eligible)

    def day_by_index(self, day_index: int) -> DayRecord:
        d = self.days[day_index - 1]
        if d.day_index != day_index:  # pragma: no cover - guarded by construction
            raise KeyError(f"day_index {day_index} not contiguous")
        return d


def _parse_hourly_csv(path, value_column: str) -> dict[tuple[dt.date, int], tuple[float, int]]:
    """Parse one hourly CSV into {(date, hour): (value, line_no)}; NaN = missing."""
    path = Path(path)
    out: dict[tuple[dt.date, int], tuple[float, int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: file is empty, expected header "
                             f"'date,hour,{value_column}'") from None
        header = [h.strip() for h in header]
        expected = ["date", "hour", value_column]
        if header != expected:
            raise ParseError(f"{path}:1: bad header {header!r}, expected {expected!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{line_no}: expected 3 fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"{path}:{line_no}: bad date {row[0]!r}") from None
            try:
                hour = int(row[1])
            except ValueError:
                raise ParseError(f"{path}:{line_no}: bad hour {row[1]!r}") from None
            if not 1 <= hour <= 24:
                raise ParseError(f"{path}:{line_no}: hour {hour} outside 1..24")
            raw = row[2].strip()
            if raw.lower() in _NA_TOKENS:
                value = math.nan
            else:
                try:
                    value = float(raw)
                except ValueError:
                    raise ParseError(
                        f"{path}:{line_no}: bad {value_column} value {raw!r}") from None
            key = (date, hour)
            if key in out:
                raise ParseError(
                    f"{path}:{line_no}: duplicate entry for {date} hour {hour} "
                    f"(first seen on line {out[key][1]})")
            out[key] = (value, line_no)
    return out


def load_holidays(path) -> frozenset[dt.date]:
    """Read a holiday file: one ISO date per line, '#' comments allowed."""
    path = Path(path)
    dates = set()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                dates.add(dt.date.fromisoformat(text))
            except ValueError:
                raise ParseError(f"{path}:{line_no}: bad date {text!r}") from None
    return frozenset(dates)


def load_dataset(
    price_file,
    demand_file,
    wind_file=None,
    holidays: Iterable[dt.date] = (),
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD,
    min_valid_pairs: int = DEFAULT_MIN_VALID_PAIRS,
) -> Dataset:
    """Load, join and validate the hourly files into a Dataset.

    Weekends and holiday dates are dropped; remaining weekdays are kept in
    date order with contiguous day_index 1..T, including all-NA gap days.
    """
    prices = _parse_hourly_csv(price_file, "price")
    demands = _parse_hourly_csv(demand_file, "gross_demand")
    wind = _parse_hourly_csv(wind_file, "wind_infeed") if wind_file is not None else None
    holiday_dates = frozenset(holidays)

    for (date, hour), (value, line_no) in demands.items():
        if not math.isnan(value) and value <= 0.0:
            raise ParseError(
                f"{Path(demand_file)}:{line_no}: non-positive gross_demand {value} "
                f"for {date} hour {hour}")

    all_dates = sorted({d for d, _ in prices} | {d for d, _ in demands})
    kept_dates = [d for d in all_dates if d.weekday() < 5 and d not in holiday_dates]

    days: list[DayRecord] = []
    for day_index, date in enumerate(kept_dates, start=1):
        obs: list[HourlyObservation] = []
        for hour in range(1, 25):
            key = (date, hour)
            has_price = key in prices
            has_demand = key in demands
            if not has_price and not has_demand:
                continue
            price = prices[key][0] if has_price else math.nan
            gross = demands[key][0] if has_demand else math.nan
            if wind is not None:
                wind_val = wind[key][0] if key in wind else math.nan
                demand = gross - wind_val
            else:
                demand = gross
            missing = math.isnan(price) or math.isnan(demand)
            outlier = (not math.isnan(price)) and price > outlier_threshold
            obs.append(HourlyObservation(day_index, date, hour, price, demand,
                                         is_outlier=outlier, is_missing=missing))
        valid = [o for o in obs if o.is_valid]
        n_valid = len(valid)
        if n_valid:
            lo = min(o.demand for o in valid)
            hi = max(o.demand for o in valid)
        else:
            lo = hi = math.nan
        eligible = n_valid >= min_valid_pairs
        if 0 < n_valid < min_valid_pairs:
            warnings.warn(
                f"day {date} has only {n_valid} valid pairs "
                f"(< {min_valid_pairs}); excluded from curve fitting")
        days.append(DayRecord(day_index, date, tuple(obs), n_valid, lo, hi, eligible))

    with_domain = [d for d in days if d.n_valid >= 1]
    if with_domain:
        global_lo = min(d.domain_lo for d in with_domain)
        global_hi = max(d.domain_hi for d in with_domain)
    else:
        global_lo = global_hi = math.nan

    return Dataset(tuple(days), global_lo, global_hi, holiday_dates,
                   outlier_threshold, min_valid_pairs)


def split_learning_forecast(ds: Dataset, split_date: dt.date) -> tuple[Dataset, Dataset]:
    """Partition into (days before split_date, days on/after split_date).

    Day indices are preserved from the full dataset so that learning and
    forecast samples stay aligned on the same workday axis. Splits at or
    outside the date range yield an empty part.
    """
    learn = tuple(d for d in ds.days if d.calendar_date < split_date)
    fcst = tuple(d for d in ds.days if d.calendar_date >= split_date)

    def _sub(days: tuple[DayRecord, ...]) -> Dataset:
        return Dataset(days, ds.global_lo, ds.global_hi, ds.holiday_dates,
                       ds.outlier_threshold, ds.min_valid_pairs)

    return _sub(learn), _sub(fcst)


def _fmt(value: float) -> str:
    """Round-trip-exact float formatting; NaN becomes the NA token."""
    return "NA" if math.isnan(value) else repr(value)


def write_price_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "hour", "price"])
        for day in ds.days:
            for o in day.observations:
                w.writerow([o.calendar_date.isoformat(), o.hour, _fmt(o.price)])


def write_demand_csv(ds: Dataset, path) -> None:
    """Write effective demand as gross_demand (no separate wind file)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "hour", "gross_demand"])
        for day in ds.days:
            for o in day.observations:
                w.writerow([o.calendar_date.isoformat(), o.hour, _fmt(o.demand)])


def workday_calendar(start: dt.date, n_days: int,
                     holidays: Iterable[dt.date] = ()) -> list[dt.date]:
    """First n_days Mon-Fri dates from start, skipping the given holidays."""
    holiday_dates = set(holidays)
    out: list[dt.date] = []
    date = start
    while len(out) < n_days:
        if date.weekday() < 5 and date not in holiday_dates:
            out.append(date)
        date += dt.timedelta(days=1)
    return out


__all__ = [
    "HourlyObservation", "DayRecord", "Dataset",
    "load_dataset", "load_holidays", "split_learning_forecast",
    "write_price_csv", "write_demand_csv", "workday_calendar",
    "DEFAULT_OUTLIER_THRESHOLD", "DEFAULT_MIN_VALID_PAIRS",
]
