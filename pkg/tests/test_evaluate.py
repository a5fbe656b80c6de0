"""Unit tests for metrics, diagnostics, and the rolling-origin study."""

import math
import types
import warnings

import numpy as np
import pytest

from curvecast import evaluate, pipeline, simulate
from curvecast.exceptions import RankError


# ---------------------------------------------------------------------------
# metrics


def test_rmse_examples():
    assert evaluate.rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert evaluate.rmse([5.0, 0.0], [0.0, 0.0]) == pytest.approx(5 / math.sqrt(2))
    assert evaluate.rmse([2.0], [5.0]) == pytest.approx(3.0)


def test_rmse_errors():
    with pytest.raises(ValueError, match="length mismatch"):
        evaluate.rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError, match="at least one"):
        evaluate.rmse([], [])


def test_interval_score_examples():
    assert evaluate.interval_score(0.0, 2.0, 1.0, 0.05) == pytest.approx(2.0)
    assert evaluate.interval_score(0.0, 2.0, 3.0, 0.05) == pytest.approx(42.0)
    assert evaluate.interval_score(0.0, 2.0, -1.0, 0.05) == pytest.approx(42.0)


def test_interval_score_endpoints_width_only():
    # strict indicators: an actual on an endpoint scores the width alone
    for y in (0.0, 2.0):
        assert evaluate.interval_score(0.0, 2.0, y, 0.05) == pytest.approx(2.0)


def test_interval_score_errors():
    with pytest.raises(ValueError, match="alpha"):
        evaluate.interval_score(0.0, 1.0, 0.5, 0.0)
    with pytest.raises(ValueError, match="lo=1.0 > hi=0.0"):
        evaluate.interval_score(1.0, 0.0, 0.5, 0.05)


def test_trimmed_mean_examples():
    assert evaluate.trimmed_mean([1, 2, 3, 4, 100], 0.2) == pytest.approx(3.0)
    assert evaluate.trimmed_mean([1, 2, 3], 0.0) == pytest.approx(2.0)
    # floor(0.49*2) = 0: nothing dropped
    assert evaluate.trimmed_mean([0.0, 10.0], 0.49) == pytest.approx(5.0)


def test_trimmed_mean_errors():
    with pytest.raises(ValueError, match="trim"):
        evaluate.trimmed_mean([1.0], 0.5)
    with pytest.raises(ValueError, match="empty"):
        evaluate.trimmed_mean([], 0.1)


# ---------------------------------------------------------------------------
# granger_test and score diagnostics


def test_granger_detects_alternative():
    rng = np.random.default_rng(3)
    n = 600
    x = rng.normal(0.0, 1.0, n)
    y = np.zeros(n)
    for t in range(1, n):
        y[t] = 0.4 * y[t - 1] + 0.8 * x[t - 1] + rng.normal(0.0, 0.5)
    result = evaluate.granger_test(y, x, max_lag=2)
    assert [lag for lag, _ in result] == [1, 2]
    assert result[0][1] < 1e-3


def test_granger_self_is_singular():
    rng = np.random.default_rng(4)
    y = rng.normal(0.0, 1.0, 200)
    with pytest.raises(RankError, match="unrestricted"):
        evaluate.granger_test(y, y, max_lag=1)


def test_granger_argument_errors():
    ok = np.arange(30, dtype=float)
    with pytest.raises(ValueError, match="lengths differ"):
        evaluate.granger_test(ok, ok[:-1], max_lag=1)
    with pytest.raises(ValueError, match="max_lag"):
        evaluate.granger_test(ok, ok, max_lag=0)
    with pytest.raises(ValueError, match="3\\*max_lag"):
        evaluate.granger_test(ok, ok, max_lag=10)
    gap = ok.copy()
    gap[3] = np.nan
    with pytest.raises(ValueError, match="gap-free"):
        evaluate.granger_test(gap, ok, max_lag=1)


def test_score_ratio_series():
    scores = types.SimpleNamespace(scores=np.array([[4.0, 2.0], [1.0, 0.0]]))
    ratio = evaluate.score_ratio_series(scores)
    assert ratio[0] == pytest.approx(2.0)
    assert np.isnan(ratio[1])
    with pytest.raises(ValueError, match="K >= 2"):
        evaluate.score_ratio_series(
            types.SimpleNamespace(scores=np.ones((5, 1))))


def test_stationarity_hook_diagnostics(tmp_path):
    rng = np.random.default_rng(5)
    walk = np.cumsum(rng.normal(0.0, 1.0, 400))
    out = tmp_path / "walk.csv"
    diag = evaluate.stationarity_hook(walk, path=out)
    assert diag["lag1_autocorr_level"] > 0.95
    assert abs(diag["lag1_autocorr_diff1"]) < 0.1
    assert not diag["zero_variance"]
    assert diag["csv_path"] == str(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "# schema: curvecast-stationarity-v1"
    assert lines[1].split(",") == ["index", "level", "diff1", "diff5"]
    assert len(lines) == 2 + 400

    wn = rng.normal(0.0, 1.0, 400)
    diag2 = evaluate.stationarity_hook(wn)
    assert abs(diag2["lag1_autocorr_level"]) < 0.1
    assert diag2["csv_path"] is None


def test_stationarity_hook_degenerate():
    with pytest.raises(ValueError, match="length >= 50"):
        evaluate.stationarity_hook(np.ones(10))
    with pytest.warns(UserWarning, match="zero variance"):
        diag = evaluate.stationarity_hook(np.ones(60))
    assert diag["zero_variance"]


# ---------------------------------------------------------------------------
# StudyConfig validation


def test_study_config_validation():
    good = evaluate.StudyConfig(learn_days=100, horizons=(2, 1, 2))
    v = good.validated()
    assert v.horizons == (1, 2)
    cases = [
        dict(learn_days=100, horizons=(0,)),
        dict(learn_days=100, trim=0.6),
        dict(learn_days=100, level=1.1),
        dict(learn_days=100, strategies=("oracle",)),
        dict(learn_days=100, models=("arima",)),
        dict(learn_days=100, refit_every=0),
        dict(learn_days=1),
    ]
    for kw in cases:
        with pytest.raises(ValueError):
            evaluate.StudyConfig(**kw).validated()


# ---------------------------------------------------------------------------
# rolling-origin study (session fixtures from conftest)


def test_study_origin_counts(study_report, study_world, study_config):
    ds, _ = study_world
    T, t_l = ds.n_days, study_config.learn_days
    for h in study_config.horizons:
        assert study_report.n_origins[h] == T - t_l - h


def test_study_report_rows_complete(study_report, study_config):
    for h in study_config.horizons:
        for agg in ("peak", "base"):
            for strat in study_config.strategies:
                v = study_report.value("ffm", agg, strat, h)
                assert math.isfinite(v) and v >= 0.0
            assert math.isfinite(study_report.value("ar", agg, "none", h))
        for strat in study_config.strategies:
            for metric in ("mean_interval_score",
                           "trimmed_mean_interval_score"):
                v = study_report.value("ffm", "hourly", strat, h, metric)
                assert math.isfinite(v) and v >= 0.0


def test_study_value_lookup_raises(study_report):
    with pytest.raises(KeyError, match="mr"):
        study_report.value("mr", "peak", "none", 1)


def test_study_forecast_rows(study_report, study_config):
    rows = study_report.forecast_rows
    expect = sum(study_report.n_origins[h] for h in study_config.horizons)
    assert len(rows) == expect * len(study_config.strategies) * 24
    strategies = {r.strategy for r in rows}
    assert strategies == set(study_config.strategies)
    assert all(r.lo <= r.price_fc + 1e-12 and
               r.price_fc <= r.hi + 1e-12 for r in rows)
    assert all(1 <= r.hour <= 24 for r in rows)


def test_study_metric_row_counts(study_report):
    for r in study_report.rows:
        if r.metric == "rmse":
            assert r.n == study_report.n_origins[r.horizon]
        else:
            assert r.n == study_report.n_origins[r.horizon] * 24


def test_study_trimmed_mean_consistency(study_report, study_config):
    """Re-derive the pooled trimmed mean from the stored per-hour scores."""
    alpha = 1.0 - study_config.level
    ds_rows = [r for r in study_report.forecast_rows
               if r.strategy == "ideal" and r.horizon == 1]
    assert ds_rows
    # the mean interval score must be >= width-only lower bound
    widths = [r.hi - r.lo for r in ds_rows]
    reported = study_report.value("ffm", "hourly", "ideal", 1,
                                  "mean_interval_score")
    assert reported >= np.mean(widths) - 1e-9


def test_study_no_usable_origin(study_world):
    ds, _ = study_world
    cfg = evaluate.StudyConfig(learn_days=ds.n_days - 1, horizons=(1,),
                               models=("ffm",),
                               fit=pipeline.FitConfig(k=2, ratio=0.7,
                                                      bandwidth=0.2))
    with pytest.raises(ValueError, match="no usable origin"):
        evaluate.rolling_forecast_study(ds, cfg)


def test_study_single_origin(study_world):
    ds, _ = study_world
    sub = pipeline.subset_dataset(ds, 1, 73)
    cfg = evaluate.StudyConfig(learn_days=70, horizons=(1,), models=("ffm",),
                               refit_every=50,
                               fit=pipeline.FitConfig(k=2, ratio=0.7,
                                                      bandwidth=0.2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = evaluate.rolling_forecast_study(sub, cfg)
    assert rep.n_origins == {1: 1}
    assert len(rep.forecast_rows) == 2 * 24
    for r in rep.rows:
        assert r.n in (1, 24)
