"""Rolling-origin forecast study, forecast metrics, and score diagnostics.

The study mirrors the enlarging-learning-sample design: per origin o (the
last day whose data the forecaster has seen), score SARIMA models are refit
(warm-started), the basis system and spline fits are refit every
``refit_every`` origins, and every configured (horizon, strategy, model)
forecast is scored against realized prices — including outlier days, which
are excluded from learning but retained for scoring. Origins run over
o = T_L+1 .. T-l for horizon l, giving (T - T_L) - l usable origins.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import baselines, forecast as fcast
from .exceptions import ConvergenceError, RankError
from .ingest import Dataset
from .pipeline import FitConfig, fit_ffm, subset_dataset

DEFAULT_HORIZONS = tuple(range(1, 21))
DEFAULT_TRIM = 0.05
_RATIO_EPS = 1e-10

__all__ = [
    "StudyConfig",
    "MetricRow",
    "ForecastRow",
    "EvaluationReport",
    "rmse",
    "interval_score",
    "trimmed_mean",
    "granger_test",
    "score_ratio_series",
    "stationarity_hook",
    "rolling_forecast_study",
]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def rmse(forecasts, actuals) -> float:
    """Root mean squared error of aligned forecast/actual vectors."""
    f = np.asarray(forecasts, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if f.size != a.size:
        raise ValueError(f"length mismatch: {f.size} forecasts vs "
                         f"{a.size} actuals")
    if f.size == 0:
        raise ValueError("need at least one forecast/actual pair")
    return float(np.sqrt(np.mean((f - a) ** 2)))


def interval_score(lo: float, hi: float, actual: float, alpha: float) -> float:
    """S_int = (hi-lo) + (2/alpha)(lo-y) 1{y<lo} + (2/alpha)(y-hi) 1{y>hi}.

    Indicators are strict: an actual exactly on an endpoint scores width
    only.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    if lo > hi:
        raise ValueError(f"invalid interval: lo={lo} > hi={hi}")
    s = hi - lo
    if actual < lo:
        s += (2.0 / alpha) * (lo - actual)
    elif actual > hi:
        s += (2.0 / alpha) * (actual - hi)
    return float(s)


def trimmed_mean(values, trim: float) -> float:
    """Mean after dropping floor(trim*n) smallest and largest values."""
    if not 0.0 <= trim < 0.5:
        raise ValueError(f"trim must be in [0, 0.5), got {trim}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("trimmed_mean of an empty sequence")
    k = int(math.floor(trim * v.size))
    kept = v[k:v.size - k]
    return float(np.mean(kept))


# ---------------------------------------------------------------------------
# Granger causality and score diagnostics
# ---------------------------------------------------------------------------


def _ols_ssr(X: np.ndarray, y: np.ndarray, label: str) -> float:
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankError(
            f"singular {label} regression (rank {rank} of {X.shape[1]} "
            "columns)")
    r = y - X @ coef
    return float(r @ r)


def granger_test(target, exogenous, max_lag: int) -> tuple[tuple[int, float], ...]:
    """F-tests of 'exogenous Granger-causes target' for lags 1..max_lag.

    For each lag L the restricted model regresses target_t on an intercept
    and its own L lags; the unrestricted model adds L lags of the exogenous
    series. Returns ((lag, p_value), ...).
    """
    y = np.asarray(target, dtype=float).ravel()
    x = np.asarray(exogenous, dtype=float).ravel()
    if y.size != x.size:
        raise ValueError(f"series lengths differ: {y.size} vs {x.size}")
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    if y.size <= 3 * max_lag:
        raise ValueError(
            f"need length > 3*max_lag = {3 * max_lag}, got {y.size}")
    if not (np.isfinite(y).all() and np.isfinite(x).all()):
        raise ValueError("granger_test requires gap-free series")
    out = []
    for L in range(1, max_lag + 1):
        resp = y[L:]
        n = resp.size
        own = np.column_stack([y[L - j:y.size - j] for j in range(1, L + 1)])
        exo = np.column_stack([x[L - j:x.size - j] for j in range(1, L + 1)])
        Xr = np.column_stack([np.ones(n), own])
        Xu = np.column_stack([Xr, exo])
        ssr_r = _ols_ssr(Xr, resp, "restricted")
        ssr_u = _ols_ssr(Xu, resp, "unrestricted")
        dof = n - 2 * L - 1
        if dof < 1:
            raise ValueError(f"not enough observations at lag {L}")
        if ssr_u <= 0.0:
            out.append((L, 0.0))
            continue
        f_stat = ((ssr_r - ssr_u) / L) / (ssr_u / dof)
        out.append((L, float(stats.f.sf(max(f_stat, 0.0), L, dof))))
    return tuple(out)


def score_ratio_series(scores) -> np.ndarray:
    """Per-day ratio beta_t1 / beta_t2; NaN where |beta_t2| < 1e-10."""
    beta = np.asarray(scores.scores, dtype=float)
    if beta.ndim != 2 or beta.shape[1] < 2:
        raise ValueError("score matrix must have K >= 2 columns")
    b1, b2 = beta[:, 0], beta[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.abs(b2) < _RATIO_EPS, np.nan, b1 / b2)
    return ratio


def _lag1_autocorr(v: np.ndarray) -> float:
    v = v[np.isfinite(v)]
    if v.size < 3:
        return math.nan
    c = v - v.mean()
    denom = float(c @ c)
    if denom <= 0.0:
        return math.nan
    return float(c[1:] @ c[:-1] / denom)


def stationarity_hook(series, path=None) -> dict:
    """Export a series (+ differenced variants) for external KPSS/ADF tools.

    Writes CSV columns (index, level, diff1, diff5) when ``path`` is given
    and returns basic diagnostics: lag-1 autocorrelation of the level and of
    the first difference. KPSS/ADF internals are intentionally not
    implemented here.
    """
    y = np.asarray(series, dtype=float).ravel()
    if y.size < 50:
        raise ValueError(f"need length >= 50, got {y.size}")
    finite = y[np.isfinite(y)]
    zero_var = bool(finite.size) and float(np.ptp(finite)) == 0.0
    if zero_var:
        warnings.warn("stationarity_hook: series has zero variance",
                      UserWarning, stacklevel=2)
    d1 = np.r_[np.nan, np.diff(y)]
    d5 = np.r_[np.full(5, np.nan), y[5:] - y[:-5]]
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write("# schema: curvecast-stationarity-v1\n")
            w = csv.writer(fh)
            w.writerow(["index", "level", "diff1", "diff5"])
            for i in range(y.size):
                w.writerow([i + 1,
                            "" if not np.isfinite(y[i]) else repr(float(y[i])),
                            "" if not np.isfinite(d1[i]) else repr(float(d1[i])),
                            "" if not np.isfinite(d5[i]) else repr(float(d5[i]))])
    return {
        "n": int(y.size),
        "lag1_autocorr_level": _lag1_autocorr(y),
        "lag1_autocorr_diff1": _lag1_autocorr(d1),
        "zero_variance": zero_var,
        "csv_path": None if path is None else str(path),
    }


# ---------------------------------------------------------------------------
# Rolling-origin study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Configuration of the rolling-origin forecast study."""

    learn_days: int
    horizons: tuple = DEFAULT_HORIZONS
    strategies: tuple = ("persistence", "ideal")
    level: float = 0.95
    trim: float = DEFAULT_TRIM
    models: tuple = ("ffm", "ar", "mr")
    refit_every: int = 1
    fit: FitConfig = None

    def validated(self) -> "StudyConfig":
        hs = tuple(sorted({int(h) for h in self.horizons}))
        if not hs or hs[0] < 1 or hs[-1] > 365:
            raise ValueError(f"horizons must lie in 1..365, got {hs}")
        if not 0.0 <= self.trim < 0.5:
            raise ValueError(f"trim must be in [0, 0.5), got {self.trim}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0,1), got {self.level}")
        bad = set(self.strategies) - {"persistence", "ideal"}
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        badm = set(self.models) - {"ffm", "ar", "mr"}
        if badm:
            raise ValueError(f"unknown models {sorted(badm)}")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        if self.learn_days < 2:
            raise ValueError("learn_days must be >= 2")
        return replace(self, horizons=hs,
                       strategies=tuple(self.strategies),
                       models=tuple(self.models))


@dataclass(frozen=True)
class MetricRow:
    """One aggregated metric of the study report."""

    model: str
    aggregate: str   # "peak" | "base" | "hourly"
    strategy: str    # "persistence" | "ideal" | "none"
    horizon: int
    metric: str      # "rmse" | "mean_interval_score" | "trimmed_mean_interval_score"
    value: float
    n: int


@dataclass(frozen=True)
class ForecastRow:
    """One hourly FFM forecast record of the study (CSV export unit)."""

    origin_date: object
    horizon: int
    hour: int
    strategy: str
    demand_fc: float
    price_fc: float
    lo: float
    hi: float


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregated metrics plus per-forecast rows of one study run."""

    rows: tuple[MetricRow, ...]
    forecast_rows: tuple[ForecastRow, ...] = field(repr=False)
    n_origins: dict
    config: StudyConfig

    def value(self, model: str, aggregate: str, strategy: str, horizon: int,
              metric: str = "rmse") -> float:
        for r in self.rows:
            if (r.model == model and r.aggregate == aggregate
                    and r.strategy == strategy and r.horizon == horizon
                    and r.metric == metric):
                return r.value
        raise KeyError(
            f"no row ({model}, {aggregate}, {strategy}, {horizon}, {metric})")


def _realized_hourly(ds: Dataset, day_index: int):
    """(hours, prices) of all realized (non-missing) prices of one day."""
    day = ds.day_by_index(day_index)
    obs = sorted(day.observations, key=lambda o: o.hour)
    hours = np.array([o.hour for o in obs])
    prices = np.array([o.price for o in obs], dtype=float)
    keep = np.isfinite(prices)
    return hours[keep], prices[keep]


def _realized_aggregates(ds: Dataset) -> tuple[np.ndarray, np.ndarray, list]:
    """Per-day realized (peak_log, base_log) over all priced hours + dates."""
    T = ds.n_days
    peak = np.full(T, np.nan)
    base = np.full(T, np.nan)
    dates = []
    for day in ds.days:
        dates.append(day.calendar_date)
        prices = {o.hour: o.price for o in day.observations
                  if np.isfinite(o.price)}
        if not prices:
            continue
        vals = np.array(list(prices.values()))
        pk = [p for h, p in prices.items() if 9 <= h <= 20]
        b_mean = float(np.mean(vals))
        if b_mean > 0:
            base[day.day_index - 1] = math.log(b_mean)
        if pk:
            p_mean = float(np.mean(pk))
            if p_mean > 0:
                peak[day.day_index - 1] = math.log(p_mean)
    return peak, base, dates


def _fit_ffm_for_study(ds: Dataset, origin: int, cfg: StudyConfig,
                       fit_cfg: FitConfig):
    learn = subset_dataset(ds, 1, origin + 1)
    return fit_ffm(learn, fit_cfg)


def rolling_forecast_study(ds: Dataset, cfg: StudyConfig) -> EvaluationReport:
    """Run the enlarging-learning-sample forecast study on one dataset.

    Origins are o = learn_days+1 .. T-1 (1-based day indices); horizon l is
    produced when o + l <= T, so n_origins(l) = (T - learn_days) - l. The
    FFM basis and spline fits refit every ``refit_every`` origins with new
    days' scores projected on the cached basis in between; SARIMA score
    models refit at every origin, warm-started. Baselines fit on realized
    aggregated log prices. Scoring uses all realized prices, outliers
    included.
    """
    cfg = cfg.validated()
    T = ds.n_days
    t_l = int(cfg.learn_days)
    min_h = cfg.horizons[0]
    if t_l + min_h >= T:
        raise ValueError(
            f"no usable origin: learn_days={t_l}, shortest horizon={min_h}, "
            f"T={T}")
    alpha = 1.0 - cfg.level
    fit_cfg = cfg.fit or FitConfig()
    peak_agg, base_agg, dates = _realized_aggregates(ds)

    # accumulators[(model, aggregate, strategy, horizon)] -> [(fc, actual)...]
    point_acc: dict = {}
    iscore_acc: dict = {}
    mr_models: dict = {}
    n_origins: dict = {h: 0 for h in cfg.horizons}
    forecast_rows: list[ForecastRow] = []

    model_f = None
    panel = None
    sarima_models = None
    chosen_k = fit_cfg.k
    origins = range(t_l + 1, T)
    origin_pos = -1
    for o in origins:
        hs = [h for h in cfg.horizons if o + h <= T]
        if not hs:
            continue
        origin_pos += 1
        for h in hs:
            n_origins[h] += 1

        if "ffm" in cfg.models:
            if model_f is None or origin_pos % cfg.refit_every == 0:
                model_f = _fit_ffm_for_study(
                    ds, o, cfg, fit_cfg if chosen_k is None
                    else replace(fit_cfg, k=chosen_k))
                chosen_k = model_f.k
                panel = model_f.score_panel(o)
            else:
                new_day = ds.day_by_index(o)
                row = np.full(model_f.k, np.nan)
                if new_day.fit_eligible:
                    try:
                        row = model_f.project_day(new_day)
                    except Exception as exc:  # noqa: BLE001 - keep as gap
                        warnings.warn(
                            f"day {o}: score projection failed ({exc}); "
                            "treated as gap", UserWarning, stacklevel=2)
                panel = np.vstack([panel, row[None, :]])
            histories = [panel[:, j] for j in range(model_f.k)]
            prev = sarima_models
            try:
                sarima_models = [
                    fcast.fit_sarima(
                        histories[j],
                        start_params=None if prev is None
                        else prev[j].params_vector)
                    for j in range(model_f.k)]
            except ConvergenceError as exc:
                if prev is None:
                    raise
                warnings.warn(
                    f"origin {o}: SARIMA refit failed ({exc}); reusing "
                    "previous coefficients", UserWarning, stacklevel=2)
                sarima_models = prev
            sfs = {sf.horizon: sf for sf in fcast.forecast_scores(
                sarima_models, hs, cfg.level, histories=histories)}
            for h in hs:
                for strat in cfg.strategies:
                    demand = fcast.forecast_demand(ds, o, h, strat)
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", UserWarning)
                        result = fcast.forecast_prices(
                            model_f.basis, sfs[h], demand, strategy=strat,
                            origin_date=dates[o - 1])
                    hours_r, prices_r = _realized_hourly(ds, o + h)
                    by_hour = {hf.hour: hf for hf in result.hourly}
                    for hr, y_real in zip(hours_r, prices_r):
                        hf = by_hour.get(int(hr))
                        if hf is None:
                            continue
                        iscore_acc.setdefault(("ffm", strat, h), []).append(
                            interval_score(hf.lo, hf.hi, y_real, alpha))
                    if prices_r.size:
                        mean_r = float(np.mean(prices_r))
                        pk_r = prices_r[(hours_r >= 9) & (hours_r <= 20)]
                        if mean_r > 0:
                            point_acc.setdefault(
                                ("ffm", "base", strat, h), []).append(
                                (result.baseload_log, math.log(mean_r)))
                        if pk_r.size and float(np.mean(pk_r)) > 0:
                            point_acc.setdefault(
                                ("ffm", "peak", strat, h), []).append(
                                (result.peakload_log,
                                 math.log(float(np.mean(pk_r)))))
                    for hf in result.hourly:
                        forecast_rows.append(ForecastRow(
                            origin_date=dates[o - 1], horizon=h, hour=hf.hour,
                            strategy=strat, demand_fc=hf.demand_forecast,
                            price_fc=hf.price_forecast, lo=hf.lo, hi=hf.hi))

        for agg_name, series in (("peak", peak_agg), ("base", base_agg)):
            hist = series[:o]
            finite_idx = np.flatnonzero(np.isfinite(hist))
            if "ar" in cfg.models:
                ar = baselines.fit_ar(hist, dates[:o])
                last = float(hist[finite_idx[-1]])
                for h in hs:
                    fc_val = baselines.forecast_ar(
                        ar, last, dates[o:o + h], h)
                    actual = series[o + h - 1]
                    if np.isfinite(actual):
                        point_acc.setdefault(
                            ("ar", agg_name, "none", h), []).append(
                            (fc_val, float(actual)))
            if "mr" in cfg.models:
                if agg_name not in mr_models or \
                        origin_pos % cfg.refit_every == 0:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", UserWarning)
                        mr_models[agg_name] = baselines.fit_mr(hist)
                for h in hs:
                    fc_val = baselines.forecast_mr(mr_models[agg_name], hist, h)
                    actual = series[o + h - 1]
                    if np.isfinite(actual):
                        point_acc.setdefault(
                            ("mr", agg_name, "none", h), []).append(
                            (fc_val, float(actual)))

    rows: list[MetricRow] = []
    for key in sorted(point_acc):
        model, agg, strat, h = key
        pairs = point_acc[key]
        f, a = zip(*pairs)
        rows.append(MetricRow(model=model, aggregate=agg, strategy=strat,
                              horizon=h, metric="rmse",
                              value=rmse(f, a), n=len(pairs)))
    for key in sorted(iscore_acc):
        model, strat, h = key
        vals = iscore_acc[key]
        rows.append(MetricRow(model=model, aggregate="hourly", strategy=strat,
                              horizon=h, metric="mean_interval_score",
                              value=float(np.mean(vals)), n=len(vals)))
        rows.append(MetricRow(model=model, aggregate="hourly", strategy=strat,
                              horizon=h, metric="trimmed_mean_interval_score",
                              value=trimmed_mean(vals, cfg.trim),
                              n=len(vals)))
    return EvaluationReport(rows=tuple(rows),
                            forecast_rows=tuple(forecast_rows),
                            n_origins=n_origins, config=cfg)
