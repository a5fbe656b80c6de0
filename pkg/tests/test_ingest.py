"""Ingest: CSV parsing, calendar rules, outlier/missing handling, splits."""

import datetime as dt
import math

import numpy as np
import pytest

from curvecast import ingest
from curvecast.exceptions import ParseError


def _write(path, header, rows):
    lines = [header] + [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _full_day_rows(date, price_fn, demand_fn):
    iso = date.isoformat()
    prices = [(iso, h, price_fn(h)) for h in range(1, 25)]
    demands = [(iso, h, demand_fn(h)) for h in range(1, 25)]
    return prices, demands


@pytest.fixture()
def basic_files(tmp_path):
    """Mon 2023-01-02 .. Sun 2023-01-08: five workdays plus a weekend."""
    dates = [dt.date(2023, 1, 2) + dt.timedelta(days=i) for i in range(7)]
    prices, demands = [], []
    for d in dates:
        p, q = _full_day_rows(d, lambda h: 20.0 + h, lambda h: 50000.0 + 100 * h)
        prices += p
        demands += q
    pf = _write(tmp_path / "prices.csv", "date,hour,price", prices)
    df = _write(tmp_path / "demand.csv", "date,hour,gross_demand", demands)
    return pf, df


def test_weekends_dropped_and_day_index_contiguous(basic_files):
    ds = ingest.load_dataset(*basic_files)
    assert ds.n_days == 5
    assert [d.day_index for d in ds.days] == [1, 2, 3, 4, 5]
    assert all(d.calendar_date.weekday() < 5 for d in ds.days)
    assert ds.day_by_index(3).calendar_date == dt.date(2023, 1, 4)


def test_holidays_dropped(basic_files, tmp_path):
    hol = tmp_path / "holidays.txt"
    hol.write_text("2023-01-04  # midweek holiday\n\n")
    holidays = ingest.load_holidays(hol)
    ds = ingest.load_dataset(*basic_files, holidays=holidays)
    assert ds.n_days == 4
    assert dt.date(2023, 1, 4) not in {d.calendar_date for d in ds.days}


def test_wind_subtraction(basic_files, tmp_path):
    pf, df = basic_files
    wind_rows = [(dt.date(2023, 1, 2).isoformat(), h, 2000.0)
                 for h in range(1, 25)]
    # other days have no wind rows -> effective demand NaN there
    wf = _write(tmp_path / "wind.csv", "date,hour,wind_infeed", wind_rows)
    ds = ingest.load_dataset(pf, df, wind_file=wf)
    day1 = ds.day_by_index(1)
    assert day1.observations[0].demand == pytest.approx(50100.0 - 2000.0)
    day2 = ds.day_by_index(2)
    assert math.isnan(day2.observations[0].demand)


def test_outlier_flagged_but_retained(tmp_path):
    date = dt.date(2023, 1, 2)
    prices, demands = _full_day_rows(date, lambda h: 250.0 if h == 12 else 30.0,
                                     lambda h: 1000.0 + h)
    pf = _write(tmp_path / "p.csv", "date,hour,price", prices)
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand", demands)
    ds = ingest.load_dataset(pf, df)
    day = ds.day_by_index(1)
    flagged = [o for o in day.observations if o.is_outlier]
    assert len(flagged) == 1 and flagged[0].hour == 12
    assert flagged[0].price == 250.0  # retained
    assert not flagged[0].is_valid    # but not a valid pair
    assert day.n_valid == 23


def test_missing_values_and_domain(tmp_path):
    date = dt.date(2023, 1, 2)
    prices = [(date.isoformat(), h, "NA" if h <= 20 else 30.0 + h)
              for h in range(1, 25)]
    demands = [(date.isoformat(), h, 900.0 + 10 * h) for h in range(1, 25)]
    pf = _write(tmp_path / "p.csv", "date,hour,price", prices)
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand", demands)
    ds = ingest.load_dataset(pf, df)
    day = ds.day_by_index(1)
    assert day.n_valid == 4
    assert day.fit_eligible  # exactly at the default minimum
    assert day.domain_lo == pytest.approx(900.0 + 210.0)
    assert day.domain_hi == pytest.approx(900.0 + 240.0)
    u, y = day.valid_pairs()
    assert list(u) == sorted(u)
    assert len(u) == 4


def test_degenerate_day_warns_and_is_excluded(tmp_path):
    date = dt.date(2023, 1, 2)
    prices = [(date.isoformat(), h, "NA" if h > 2 else 30.0) for h in range(1, 25)]
    demands = [(date.isoformat(), h, 1000.0 + h) for h in range(1, 25)]
    pf = _write(tmp_path / "p.csv", "date,hour,price", prices)
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand", demands)
    with pytest.warns(UserWarning, match="valid pairs"):
        ds = ingest.load_dataset(pf, df)
    assert not ds.day_by_index(1).fit_eligible


def test_parse_error_names_file_and_line(tmp_path):
    pf = _write(tmp_path / "p.csv", "date,hour,price",
                [("2023-01-02", 1, 30.0), ("2023-01-02", "x", 30.0)])
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand",
                [("2023-01-02", 1, 1000.0)])
    with pytest.raises(ParseError, match=r"p\.csv:3"):
        ingest.load_dataset(pf, df)


def test_bad_header_rejected(tmp_path):
    pf = _write(tmp_path / "p.csv", "date,hour,cost", [("2023-01-02", 1, 30.0)])
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand",
                [("2023-01-02", 1, 1000.0)])
    with pytest.raises(ParseError, match="bad header"):
        ingest.load_dataset(pf, df)


def test_duplicate_row_rejected(tmp_path):
    pf = _write(tmp_path / "p.csv", "date,hour,price",
                [("2023-01-02", 1, 30.0), ("2023-01-02", 1, 31.0)])
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand",
                [("2023-01-02", 1, 1000.0)])
    with pytest.raises(ParseError, match="duplicate"):
        ingest.load_dataset(pf, df)


def test_non_positive_demand_rejected(tmp_path):
    pf = _write(tmp_path / "p.csv", "date,hour,price", [("2023-01-02", 1, 30.0)])
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand",
                [("2023-01-02", 1, -5.0)])
    with pytest.raises(ParseError, match="non-positive"):
        ingest.load_dataset(pf, df)


def test_split_learning_forecast(basic_files):
    ds = ingest.load_dataset(*basic_files)
    learn, fcst = ingest.split_learning_forecast(ds, dt.date(2023, 1, 5))
    assert learn.n_days == 3 and fcst.n_days == 2
    # day indices preserved from the full dataset
    assert [d.day_index for d in fcst.days] == [4, 5]
    assert learn.global_lo == ds.global_lo


def test_write_round_trip(basic_files, tmp_path):
    ds = ingest.load_dataset(*basic_files)
    ingest.write_price_csv(ds, tmp_path / "p2.csv")
    ingest.write_demand_csv(ds, tmp_path / "d2.csv")
    ds2 = ingest.load_dataset(tmp_path / "p2.csv", tmp_path / "d2.csv")
    assert ds2.n_days == ds.n_days
    for a, b in zip(ds.days, ds2.days):
        ua, ya = a.valid_pairs()
        ub, yb = b.valid_pairs()
        assert np.array_equal(ua, ub) and np.array_equal(ya, yb)


def test_workday_calendar():
    cal = ingest.workday_calendar(dt.date(2023, 1, 2), 6,
                                  holidays=[dt.date(2023, 1, 4)])
    assert len(cal) == 6
    assert dt.date(2023, 1, 4) not in cal
    assert all(d.weekday() < 5 for d in cal)
    assert cal == sorted(cal)


def test_gap_day_kept_as_missing(tmp_path):
    """A weekday present in the files with all-NA data stays as a gap day."""
    d1, d2, d3 = (dt.date(2023, 1, 2), dt.date(2023, 1, 3), dt.date(2023, 1, 4))
    prices, demands = [], []
    for d in (d1, d3):
        p, q = _full_day_rows(d, lambda h: 25.0, lambda h: 1000.0 + h)
        prices += p
        demands += q
    prices += [(d2.isoformat(), h, "NA") for h in range(1, 25)]
    demands += [(d2.isoformat(), h, 1000.0 + h) for h in range(1, 25)]
    pf = _write(tmp_path / "p.csv", "date,hour,price", prices)
    df = _write(tmp_path / "d.csv", "date,hour,gross_demand", demands)
    ds = ingest.load_dataset(pf, df)
    assert ds.n_days == 3
    gap = ds.day_by_index(2)
    assert gap.n_valid == 0 and not gap.fit_eligible
    assert math.isnan(gap.domain_lo)
