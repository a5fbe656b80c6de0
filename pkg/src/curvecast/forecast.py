"""Score forecasting and plug-in price forecasts.

Per-factor score series are modelled with SARIMA(0,1,6)x(0,1,1)_5 fitted by
exact Gaussian maximum likelihood in state-space form (gaps enter the Kalman
filter as missing observations, no imputation). Hourly price forecasts are
the naive plug-in y_hat_h = sum_k beta_hat_k(l) f_hat_k(u_hat_h) with
conditional (on the estimated basis) forecast intervals propagated from the
per-score SARIMA intervals by the rectangle rule.

``level`` throughout is the confidence level (default 0.95); the interval
half-width uses z_{(1+level)/2} = z_{1-alpha/2} with alpha = 1 - level.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from statsmodels.tsa.statespace.sarimax import SARIMAX

from . import fpca
from .exceptions import ConvergenceError
from .ingest import Dataset

DEFAULT_ORDER = (0, 1, 6)
DEFAULT_SEASONAL_ORDER = (0, 1, 1, 5)
DEFAULT_LEVEL = 0.95
HOURS_PER_DAY = 24
PEAK_HOURS = tuple(range(9, 21))  # hour labels 9..20, twelve members
MIN_DIFFERENCED_OBS = 60
_MAXITER = 500

__all__ = [
    "SarimaModel",
    "ScoreForecast",
    "HourlyForecast",
    "ForecastResult",
    "fit_sarima",
    "select_sarima_order",
    "forecast_scores",
    "forecast_demand",
    "forecast_prices",
    "aggregate_peak_base",
]


# ---------------------------------------------------------------------------
# SARIMA score models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SarimaModel:
    """Fitted SARIMA(0,1,q)x(0,1,1)_s model for one score series."""

    order: tuple[int, int, int]
    seasonal_order: tuple[int, int, int, int]
    ma_coeffs: tuple[float, ...]
    seasonal_ma: float
    innovation_var: float
    loglik: float
    aic: float
    n_obs: int
    converged: bool
    params_vector: tuple[float, ...]
    _results: object = field(repr=False, compare=False, default=None)

    @property
    def q(self) -> int:
        return self.order[2]


def _check_invertibility(ma_coeffs, seasonal_ma) -> None:
    """Warn when an MA polynomial root lies on or inside the unit circle."""
    polys = []
    if any(c != 0.0 for c in ma_coeffs):
        polys.append(np.r_[1.0, ma_coeffs])
    if seasonal_ma != 0.0:
        polys.append(np.r_[1.0, np.zeros(4), seasonal_ma])
    for p in polys:
        roots = np.roots(p[::-1])  # roots of 1 + c1 z + ... + cq z^q
        if roots.size and np.min(np.abs(roots)) <= 1.0 + 1e-8:
            warnings.warn(
                "MA polynomial has a root on or inside the unit circle "
                "(non-invertible fit)", UserWarning, stacklevel=3)
            return


def _wrap_results(res, order, seasonal_order, n_obs, converged) -> SarimaModel:
    names = list(res.param_names)
    params = np.asarray(res.params, dtype=float)
    by_name = dict(zip(names, params))
    q = order[2]
    ma = tuple(float(by_name.get(f"ma.L{i}", 0.0)) for i in range(1, q + 1))
    sma = float(by_name.get(f"ma.S.L{seasonal_order[3]}", 0.0))
    sigma2 = float(by_name.get("sigma2", np.nan))
    if not (sigma2 > 1e-12):
        warnings.warn(
            f"degenerate innovation variance sigma2={sigma2:.3e} "
            "(no variation after differencing?)", UserWarning, stacklevel=3)
    _check_invertibility(ma, sma)
    return SarimaModel(
        order=order,
        seasonal_order=seasonal_order,
        ma_coeffs=ma,
        seasonal_ma=sma,
        innovation_var=sigma2,
        loglik=float(res.llf),
        aic=float(res.aic),
        n_obs=n_obs,
        converged=converged,
        params_vector=tuple(float(v) for v in params),
        _results=res,
    )


def _default_starts(y, order, seasonal_order):
    """Deterministic multi-start set for the cold-start fit.

    The multiplicative MA polynomial has lag-5 terms in both factors when
    q >= s, leaving a likelihood ridge along the delta_5/Theta trade-off with
    two close local modes; starting the seasonal MA from both signs finds
    the global one (ties resolved by start order).
    """
    q = order[2]
    w = np.diff(np.asarray(y, dtype=float))
    s = seasonal_order[3]
    if seasonal_order[1]:
        w = w[s:] - w[:-s]
    w = w[np.isfinite(w)]
    s2 = float(np.var(w)) if w.size else 1.0
    if not s2 > 0:
        s2 = 1.0
    n_sma = 1 if seasonal_order[2] else 0
    starts = [None]
    for theta in (-0.5, 0.5):
        if n_sma:
            starts.append(np.r_[np.zeros(q), theta, s2])
    return starts


def fit_sarima(series, *, order: tuple = DEFAULT_ORDER,
               seasonal_order: tuple = DEFAULT_SEASONAL_ORDER,
               start_params=None, maxiter: int = _MAXITER) -> SarimaModel:
    """Fit a SARIMA model to one score series (NaN entries are gaps).

    Requires at least ``MIN_DIFFERENCED_OBS`` observations after the d + D*s
    differencing. A cold start fits from a deterministic multi-start set and
    keeps the best converged likelihood (ties by start order); an explicit
    ``start_params`` (warm start) fits once from that point. Non-convergence
    after the primary (L-BFGS) and fallback (Nelder-Mead) optimizers raises
    :class:`ConvergenceError` carrying the best-found point and gradient norm.
    """
    y = np.asarray(series, dtype=float).ravel()
    n_finite = int(np.sum(np.isfinite(y)))
    n_diff = order[1] + seasonal_order[1] * seasonal_order[3]
    if n_finite - n_diff < MIN_DIFFERENCED_OBS:
        raise ValueError(
            f"need >= {MIN_DIFFERENCED_OBS} observations after differencing, "
            f"got {n_finite - n_diff} ({n_finite} finite of {y.size})")
    model = SARIMAX(y, order=order, seasonal_order=seasonal_order,
                    enforce_invertibility=True, validate_specification=False)
    if start_params is not None:
        starts = [np.asarray(start_params, dtype=float)]
    else:
        starts = _default_starts(y, order, seasonal_order)
    best = None
    last = None
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", module=r"statsmodels\.")
        for sp in starts:
            res = model.fit(disp=0, maxiter=maxiter, method="lbfgs",
                            start_params=sp)
            if not res.mle_retvals.get("converged", True):
                res = model.fit(disp=0, maxiter=4 * maxiter, method="nm",
                                start_params=res.params)
            last = res
            if res.mle_retvals.get("converged", True):
                if best is None or res.llf > best.llf:
                    best = res
    if best is None:
        res = last
        gopt = res.mle_retvals.get("gopt")
        gnorm = float(np.max(np.abs(gopt))) if gopt is not None else math.nan
        point = np.array2string(np.asarray(res.params), precision=6)
        raise ConvergenceError(
            f"SARIMA likelihood did not converge: best point {point}, "
            f"loglik {res.llf:.6f}, gradient inf-norm {gnorm:.3e}")
    return _wrap_results(best, tuple(order), tuple(seasonal_order),
                         n_finite, True)


def select_sarima_order(series, q_values=(1, 2, 3, 4, 5, 6), *,
                        seasonal_order: tuple = DEFAULT_SEASONAL_ORDER
                        ) -> tuple[SarimaModel, tuple[tuple[int, float], ...]]:
    """Fit SARIMA(0,1,q)x(0,1,1)_s for each candidate q; pick by AIC.

    Returns (best model, table of (q, aic)). Ties break to the smaller q;
    candidates that fail to converge are skipped (recorded with aic=inf).
    """
    rows = []
    best = None
    for q in q_values:
        try:
            m = fit_sarima(series, order=(0, 1, int(q)),
                           seasonal_order=seasonal_order)
        except ConvergenceError:
            rows.append((int(q), math.inf))
            continue
        rows.append((int(q), m.aic))
        if best is None or m.aic < best.aic:
            best = m
    if best is None:
        raise ConvergenceError("no SARIMA candidate order converged")
    return best, tuple(rows)


# ---------------------------------------------------------------------------
# Score forecasts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreForecast:
    """Joint l-step forecast of the K score series."""

    horizon: int
    mean: tuple[float, ...]
    var: tuple[float, ...]
    level: float

    @property
    def k(self) -> int:
        return len(self.mean)

    def _z(self) -> float:
        return float(stats.norm.ppf(0.5 * (1.0 + self.level)))

    @property
    def lo(self) -> tuple[float, ...]:
        z = self._z()
        return tuple(m - z * math.sqrt(v) for m, v in zip(self.mean, self.var))

    @property
    def hi(self) -> tuple[float, ...]:
        z = self._z()
        return tuple(m + z * math.sqrt(v) for m, v in zip(self.mean, self.var))


def forecast_scores(models, horizons, level: float = DEFAULT_LEVEL, *,
                    histories=None) -> tuple[ScoreForecast, ...]:
    """Forecast the K score series jointly for the requested horizons.

    ``models`` is one fitted :class:`SarimaModel` per factor. ``horizons`` is
    a maximum horizon L (int) or an explicit collection of horizons >= 1.
    When ``histories`` (one NaN-gapped array per factor) is given, each
    model's coefficients are applied to that series (Kalman re-filtering
    without re-estimation), which is how rolling-origin forecasts extend the
    learning sample cheaply.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0,1), got {level}")
    models = tuple(models)
    if not models:
        raise ValueError("need at least one fitted score model")
    if isinstance(horizons, (int, np.integer)):
        hs = tuple(range(1, int(horizons) + 1))
    else:
        hs = tuple(sorted({int(h) for h in horizons}))
    if not hs or hs[0] < 1:
        raise ValueError(f"horizons must be >= 1, got {hs}")
    max_h = hs[-1]
    if histories is not None and len(histories) != len(models):
        raise ValueError("histories must align with models (one per factor)")

    means = np.empty((max_h, len(models)))
    varis = np.empty((max_h, len(models)))
    for j, m in enumerate(models):
        res = m._results
        if res is None:
            raise ValueError("SarimaModel carries no fitted results object")
        if histories is not None:
            # Re-filter the stored coefficients on the new history (no
            # re-estimation); built explicitly because results.apply() drops
            # validate_specification on the clone.
            y = np.asarray(histories[j], dtype=float).ravel()
            mod = SARIMAX(y, order=m.order, seasonal_order=m.seasonal_order,
                          enforce_invertibility=True,
                          validate_specification=False)
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", module=r"statsmodels\.")
                res = mod.filter(np.asarray(m.params_vector, dtype=float))
        fc = res.get_forecast(steps=max_h)
        means[:, j] = np.asarray(fc.predicted_mean, dtype=float)
        varis[:, j] = np.maximum(np.asarray(fc.var_pred_mean, dtype=float), 0.0)
    return tuple(
        ScoreForecast(horizon=h,
                      mean=tuple(means[h - 1]),
                      var=tuple(varis[h - 1]),
                      level=level)
        for h in hs)


# ---------------------------------------------------------------------------
# Demand forecasts
# ---------------------------------------------------------------------------


def forecast_demand(ds: Dataset, origin: int, horizon: int,
                    strategy: str) -> np.ndarray:
    """Hourly demand forecast for day origin+horizon, from day ``origin``.

    ``persistence`` carries the origin day's demands forward unchanged for
    every horizon; ``ideal`` returns the realized demands of day
    origin+horizon (which must exist in the dataset). Hours with missing
    demand are filled with the day's nearest available hour (ties to the
    earlier hour) with a warning.
    """
    if strategy not in ("persistence", "ideal"):
        raise ValueError(f"unknown demand strategy {strategy!r}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    target = origin if strategy == "persistence" else origin + horizon
    if not 1 <= target <= ds.n_days:
        raise ValueError(
            f"day {target} not in dataset (1..{ds.n_days}); "
            f"{strategy} forecast from origin {origin} at horizon {horizon}")
    day = ds.day_by_index(target)
    obs = sorted(day.observations, key=lambda o: o.hour)
    hours = np.array([o.hour for o in obs])
    demand = np.array([o.demand for o in obs], dtype=float)
    finite = np.isfinite(demand)
    if not finite.any():
        raise ValueError(f"day {target} has no observed demand in any hour")
    if not finite.all():
        have = hours[finite]
        for i in np.flatnonzero(~finite):
            j = int(np.argmin(np.abs(have - hours[i])))  # ties -> earlier hour
            demand[i] = demand[np.flatnonzero(finite)[j]]
        warnings.warn(
            f"day {target}: missing demand in hours "
            f"{hours[~finite].tolist()} filled from nearest available hour",
            UserWarning, stacklevel=2)
    return demand


# ---------------------------------------------------------------------------
# Price forecasts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HourlyForecast:
    """One hour of a price forecast with its conditional interval."""

    hour: int
    demand_forecast: float
    price_forecast: float
    lo: float
    hi: float


@dataclass(frozen=True)
class ForecastResult:
    """Hourly price forecast for one origin/horizon/strategy combination."""

    horizon: int
    demand_strategy: str
    hourly: tuple[HourlyForecast, ...]
    curve: fpca.ReconstructedCurve
    peakload_log: float
    baseload_log: float
    level: float
    origin_date: dt.date | None = None

    @property
    def prices(self) -> np.ndarray:
        return np.array([h.price_forecast for h in self.hourly])

    @property
    def demands(self) -> np.ndarray:
        return np.array([h.demand_forecast for h in self.hourly])


def aggregate_peak_base(hourly_prices) -> tuple[float, float]:
    """(peak_log, base_log): log mean over hours 9..20 and over all 24."""
    p = np.asarray(hourly_prices, dtype=float).ravel()
    if p.size != HOURS_PER_DAY:
        raise ValueError(f"need 24 hourly prices, got {p.size}")
    if not np.isfinite(p).all():
        raise ValueError("hourly prices contain non-finite values")
    peak_mean = float(np.mean(p[PEAK_HOURS[0] - 1:PEAK_HOURS[-1]]))
    base_mean = float(np.mean(p))
    if peak_mean <= 0.0 or base_mean <= 0.0:
        raise ValueError(
            f"non-positive mean price (peak {peak_mean:.6g}, "
            f"base {base_mean:.6g}): log aggregate undefined")
    return math.log(peak_mean), math.log(base_mean)


def forecast_prices(basis: fpca.BasisSystem, score_fc: ScoreForecast,
                    demand_fc, *, strategy: str = "persistence",
                    origin_date: dt.date | None = None) -> ForecastResult:
    """Plug-in hourly price forecast with rectangle-propagated intervals.

    y_hat_h = sum_k beta_hat_k(l) f_hat_k(u_hat_h); the hourly interval is
    [sum_k min(F_hk lo_k, F_hk hi_k), sum_k max(F_hk lo_k, F_hk hi_k)] over
    the per-score intervals (conservative rectangle propagation). Demand
    forecasts outside the basis span are clamped with a warning.
    """
    u = np.asarray(demand_fc, dtype=float).ravel()
    if u.size != HOURS_PER_DAY:
        raise ValueError(f"need 24 hourly demand forecasts, got {u.size}")
    if score_fc.k != basis.k:
        raise ValueError(
            f"score forecast has K={score_fc.k} but basis has K={basis.k}")
    lo_span, hi_span = basis.span
    clipped = np.clip(u, lo_span, hi_span)
    moved = np.flatnonzero(np.abs(clipped - u) > 0)
    if moved.size:
        warnings.warn(
            f"demand forecast outside basis span [{lo_span:.6g}, "
            f"{hi_span:.6g}] clamped for hours {(moved + 1).tolist()}",
            UserWarning, stacklevel=2)
    F = basis.evaluate(clipped)
    mean = np.asarray(score_fc.mean)
    point = F @ mean
    e1 = F * np.asarray(score_fc.lo)[None, :]
    e2 = F * np.asarray(score_fc.hi)[None, :]
    lo_h = np.minimum(e1, e2).sum(axis=1)
    hi_h = np.maximum(e1, e2).sum(axis=1)
    peak_log, base_log = aggregate_peak_base(point)
    hourly = tuple(
        HourlyForecast(hour=h + 1, demand_forecast=float(clipped[h]),
                       price_forecast=float(point[h]), lo=float(lo_h[h]),
                       hi=float(hi_h[h]))
        for h in range(HOURS_PER_DAY))
    curve = fpca.ReconstructedCurve(basis=basis, beta=mean,
                                    domain_lo=lo_span, domain_hi=hi_span,
                                    day_index=0)
    return ForecastResult(horizon=score_fc.horizon, demand_strategy=strategy,
                          hourly=hourly, curve=curve, peakload_log=peak_log,
                          baseload_log=base_log, level=score_fc.level,
                          origin_date=origin_date)
