"""Classical baselines on aggregated daily series.

Two competitors fitted to peakload/baseload log prices: an AR(1) with drift
and deterministic weekday/annual effects, and a two-regime Markov-switching
model (moderate AR(1) regime vs. spike regime) estimated by maximum
likelihood with the Hamilton filter.

Transition convention for the switching chain (columns sum to one):
P(M|M) = q, P(S|M) = 1-q, P(S|S) = p, P(M|S) = 1-p.
"""

from __future__ import annotations

import datetime as dt
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

from .exceptions import ConvergenceError, RankError

MIN_AR_OBS = 100
MIN_MR_OBS = 200
SPIKE_MASS_FLOOR = 0.02
_ANNUAL_PERIOD = 365.25
_DET_NAMES = ("tue", "wed", "thu", "fri", "sin_annual", "cos_annual")
_MR_STARTS = 5
_MR_SEED = 12345

__all__ = [
    "ArModel",
    "MrModel",
    "fit_ar",
    "forecast_ar",
    "fit_mr",
    "forecast_mr",
    "hamilton_filter",
]


# ---------------------------------------------------------------------------
# AR(1) with deterministic effects
# ---------------------------------------------------------------------------


def _deterministic_rows(dates) -> np.ndarray:
    """(n, 6) matrix: Tue..Fri dummies (Monday baseline) + annual Fourier."""
    rows = np.zeros((len(dates), len(_DET_NAMES)))
    for i, d in enumerate(dates):
        wd = d.weekday()  # Monday == 0
        if 1 <= wd <= 4:
            rows[i, wd - 1] = 1.0
        ang = 2.0 * math.pi * float(d.timetuple().tm_yday) / _ANNUAL_PERIOD
        rows[i, 4] = math.sin(ang)
        rows[i, 5] = math.cos(ang)
    return rows


@dataclass(frozen=True)
class ArModel:
    """AR(1) with drift and deterministic terms: y_t = d + a y_{t-1} + g_t."""

    drift: float
    alpha: float
    deterministic_coeffs: tuple[float, ...]
    innovation_var: float
    coeff_names: tuple[str, ...]
    n_obs: int

    def deterministic_value(self, date: dt.date | None) -> float:
        if not self.deterministic_coeffs:
            return 0.0
        if date is None:
            raise ValueError("model has deterministic terms; date required")
        row = _deterministic_rows([date])[0]
        return float(row @ np.asarray(self.deterministic_coeffs))


def fit_ar(series, calendar=None) -> ArModel:
    """Least-squares fit of y_t on {1, y_{t-1}, g_t terms}.

    ``calendar`` is one date per observation (weekday dummies + annual
    Fourier pair); ``None`` fits drift + AR term only. Rows where y_t or
    y_{t-1} is missing are dropped. A singular design raises
    :class:`RankError` naming the collinear columns.
    """
    y = np.asarray(series, dtype=float).ravel()
    if calendar is not None and len(calendar) != y.size:
        raise ValueError(
            f"calendar length {len(calendar)} != series length {y.size}")
    keep = np.isfinite(y[1:]) & np.isfinite(y[:-1])
    n = int(keep.sum())
    if n < MIN_AR_OBS:
        raise ValueError(f"need >= {MIN_AR_OBS} usable observations, got {n}")
    resp = y[1:][keep]
    lagged = y[:-1][keep]
    names = ["const", "ar1"]
    cols = [np.ones(n), lagged]
    if calendar is not None:
        det = _deterministic_rows(list(calendar)[1:])[keep]
        cols.extend(det.T)
        names.extend(_DET_NAMES)
    X = np.column_stack(cols)

    scale = np.sqrt(np.sum(X * X, axis=0))
    scale[scale == 0.0] = 1.0
    q_, r_, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 1.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        bad = sorted(names[j] for j in piv[rank:])
        raise RankError(
            f"singular AR design: collinear columns {bad} "
            f"(rank {rank} of {X.shape[1]})")

    coef, _, _, _ = np.linalg.lstsq(X, resp, rcond=None)
    resid = resp - X @ coef
    dof = max(n - X.shape[1], 1)
    det_coef = tuple(float(c) for c in coef[2:])
    return ArModel(drift=float(coef[0]), alpha=float(coef[1]),
                   deterministic_coeffs=det_coef,
                   innovation_var=float(resid @ resid / dof),
                   coeff_names=tuple(names[2:]), n_obs=n)


def forecast_ar(model: ArModel, last_value: float, calendar_future=None,
                horizon: int = 1) -> float:
    """l-step iterate y_hat(j) = d + g_{t+j} + alpha * y_hat(j-1)."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    dates = list(calendar_future) if calendar_future is not None else None
    if model.deterministic_coeffs and (dates is None or len(dates) < horizon):
        raise ValueError(
            f"need {horizon} future dates for the deterministic terms")
    yhat = float(last_value)
    for j in range(horizon):
        g = model.deterministic_value(dates[j]) if dates else 0.0
        yhat = model.drift + g + model.alpha * yhat
    return yhat


# ---------------------------------------------------------------------------
# Two-regime Markov switching model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MrModel:
    """Two-regime model: M: y=d+a*y_{t-1}+s_M*e, S: y=mu_S+s_S*e."""

    drift: float
    alpha: float
    spike_mean: float
    var_moderate: float
    var_spike: float
    trans_q: float
    trans_p: float
    loglik: float
    n_obs: int
    converged: bool
    filtered_probs: np.ndarray = field(repr=False, compare=False)
    smoothed_probs: np.ndarray = field(repr=False, compare=False)
    loglik_path: tuple[float, ...] = field(repr=False, compare=False,
                                           default=())

    @property
    def params(self) -> tuple[float, ...]:
        return (self.drift, self.alpha, self.spike_mean, self.var_moderate,
                self.var_spike, self.trans_q, self.trans_p)


def _mr_untransform(theta) -> tuple[float, float, float, float, float,
                                    float, float]:
    """Map the unconstrained optimizer vector to model parameters.

    (d, alpha, mu_S, log s2_M, kappa, logit q, logit p) with
    s2_S = s2_M * (1 + exp(kappa)) enforcing s2_S >= s2_M, probabilities by
    the logistic map.
    """
    d, alpha, mu_s, log_s2m, kappa, lq, lp = theta
    s2m = math.exp(min(max(log_s2m, -30.0), 30.0))
    s2s = s2m * (1.0 + math.exp(min(max(kappa, -30.0), 30.0)))
    q = float(special.expit(lq))
    p = float(special.expit(lp))
    return float(d), float(alpha), float(mu_s), s2m, s2s, q, p


def _mr_transform(d, alpha, mu_s, s2m, s2s, q, p) -> np.ndarray:
    kappa = math.log(max(s2s / s2m - 1.0, 1e-12))
    return np.array([d, alpha, mu_s, math.log(s2m), kappa,
                     special.logit(min(max(q, 1e-9), 1 - 1e-9)),
                     special.logit(min(max(p, 1e-9), 1 - 1e-9))])


def hamilton_filter(y, d, alpha, mu_s, s2m, s2s, q, p, *,
                    return_probs: bool = False):
    """Forward filter of the two-regime model on series ``y``.

    Returns the log-likelihood, and when ``return_probs`` also the filtered
    and one-step predicted regime-probability arrays (n-1, 2) over the
    transitions t=2..n (column 0 = moderate regime M). Times where y_t or
    y_{t-1} is missing contribute no likelihood term; the filter propagates
    the predicted distribution through them.
    """
    y = np.asarray(y, dtype=float).ravel()
    resid_m = y[1:] - d - alpha * y[:-1]
    ok = np.isfinite(resid_m)
    inv2m = -0.5 / s2m
    inv2s = -0.5 / s2s
    cm = 1.0 / math.sqrt(2.0 * math.pi * s2m)
    cs = 1.0 / math.sqrt(2.0 * math.pi * s2s)
    dens_m = np.where(ok, cm * np.exp(inv2m * np.square(
        np.where(ok, resid_m, 0.0))), 1.0)
    resid_s = y[1:] - mu_s
    ok_s = np.isfinite(resid_s)
    dens_s = np.where(ok & ok_s, cs * np.exp(inv2s * np.square(
        np.where(ok_s, resid_s, 0.0))), 1.0)
    update = (ok & ok_s).tolist()
    dm = dens_m.tolist()
    dsl = dens_s.tolist()

    denom = 2.0 - q - p
    pi_m = (1.0 - p) / denom if denom > 1e-12 else 0.5
    pi_s = 1.0 - pi_m
    ll = 0.0
    n1 = len(dm)
    filt = np.empty((n1, 2)) if return_probs else None
    pred = np.empty((n1, 2)) if return_probs else None
    one_m_q = 1.0 - q
    one_m_p = 1.0 - p
    for t in range(n1):
        pm = q * pi_m + one_m_p * pi_s
        ps = one_m_q * pi_m + p * pi_s
        if return_probs:
            pred[t, 0] = pm
            pred[t, 1] = ps
        if update[t]:
            jm = pm * dm[t]
            js = ps * dsl[t]
            s = jm + js
            if s <= 0.0 or not math.isfinite(s):
                return (-math.inf, filt, pred) if return_probs else -math.inf
            ll += math.log(s)
            pi_m = jm / s
            pi_s = js / s
        else:
            pi_m = pm
            pi_s = ps
        if return_probs:
            filt[t, 0] = pi_m
            filt[t, 1] = pi_s
    if return_probs:
        return ll, filt, pred
    return ll


def _kim_smoother(filt, pred, q, p) -> np.ndarray:
    """Backward pass: smoothed regime probabilities from filter output."""
    n = filt.shape[0]
    sm = np.empty_like(filt)
    sm[-1] = filt[-1]
    for t in range(n - 2, -1, -1):
        # A[j, i] = P(state_{t+1}=j | state_t=i); columns (M, S)
        rm = sm[t + 1, 0] / max(pred[t + 1, 0], 1e-300)
        rs = sm[t + 1, 1] / max(pred[t + 1, 1], 1e-300)
        sm[t, 0] = filt[t, 0] * (q * rm + (1.0 - q) * rs)
        sm[t, 1] = filt[t, 1] * ((1.0 - p) * rm + p * rs)
        tot = sm[t, 0] + sm[t, 1]
        if tot > 0:
            sm[t] /= tot
    return sm


def _mr_starts(y) -> list[np.ndarray]:
    """Deterministic multi-start set from data moments + seeded jitter."""
    yf = y[np.isfinite(y)]
    lag_ok = np.isfinite(y[1:]) & np.isfinite(y[:-1])
    resp, lagged = y[1:][lag_ok], y[:-1][lag_ok]
    X = np.column_stack([np.ones(lagged.size), lagged])
    coef, _, _, _ = np.linalg.lstsq(X, resp, rcond=None)
    resid = resp - X @ coef
    s2 = float(resid @ resid / max(resid.size - 2, 1))
    s2m0 = max(0.25 * s2, 1e-8)
    s2s0 = max(4.0 * s2, 2.0 * s2m0)
    mu_s0 = float(np.mean(yf) + 2.0 * np.std(yf))
    base = _mr_transform(float(coef[0]), float(coef[1]), mu_s0,
                         s2m0, s2s0, 0.9, 0.5)
    rng = np.random.default_rng(_MR_SEED)
    scales = np.array([0.5, 0.2, 1.0, 0.7, 0.7, 1.0, 1.0])
    starts = [base]
    for _ in range(_MR_STARTS - 1):
        starts.append(base + rng.normal(size=7) * scales)
    return starts


def fit_mr(series) -> MrModel:
    """Maximum-likelihood fit of the two-regime model (Hamilton filter).

    Multi-start (5 deterministic seeded starts) L-BFGS-B on transformed
    parameters; the best converged likelihood wins, ties by start order.
    The spike regime is identified by the constraint s2_S >= s2_M built into
    the parameterization. Warnings flag an unoccupied spike regime
    (filtered mass < 2%) and boundary transition probabilities.
    """
    y = np.asarray(series, dtype=float).ravel()
    n_ok = int((np.isfinite(y[1:]) & np.isfinite(y[:-1])).sum())
    if n_ok < MIN_MR_OBS:
        raise ValueError(f"need >= {MIN_MR_OBS} usable observations, got {n_ok}")

    def nll(theta):
        ll = hamilton_filter(y, *_mr_untransform(theta))
        return -ll if math.isfinite(ll) else 1e12

    best = None
    best_path = None
    for theta0 in _mr_starts(y):
        path = []

        def cb(xk, _path=path):
            _path.append(-nll(xk))

        res = optimize.minimize(nll, theta0, method="L-BFGS-B", callback=cb,
                                options={"maxiter": 500, "ftol": 1e-11})
        if not math.isfinite(res.fun):
            continue
        cand_ok = bool(res.success)
        if best is None or (cand_ok and not best[1]) or \
                (cand_ok == best[1] and -res.fun > -best[0].fun + 1e-9):
            best = (res, cand_ok)
            best_path = tuple(path)
    if best is None or not best[1]:
        point = "none" if best is None else np.array2string(best[0].x,
                                                            precision=5)
        raise ConvergenceError(
            f"MR likelihood did not converge from any start; best point "
            f"{point}")
    res = best[0]
    d, alpha, mu_s, s2m, s2s, q, p = _mr_untransform(res.x)
    ll, filt, pred = hamilton_filter(y, d, alpha, mu_s, s2m, s2s, q, p,
                                     return_probs=True)
    smoothed = _kim_smoother(filt, pred, q, p)
    spike_mass = float(np.mean(filt[:, 1]))
    if spike_mass < SPIKE_MASS_FLOOR:
        warnings.warn(
            f"spike regime nearly unoccupied (filtered mass "
            f"{spike_mass:.3%} < {SPIKE_MASS_FLOOR:.0%})",
            UserWarning, stacklevel=2)
    if min(q, p, 1.0 - q, 1.0 - p) < 1e-3:
        warnings.warn(
            f"transition probability at boundary (q={q:.4f}, p={p:.4f})",
            UserWarning, stacklevel=2)
    return MrModel(drift=d, alpha=alpha, spike_mean=mu_s, var_moderate=s2m,
                   var_spike=s2s, trans_q=q, trans_p=p, loglik=float(ll),
                   n_obs=n_ok, converged=True, filtered_probs=filt,
                   smoothed_probs=smoothed, loglik_path=best_path)


def forecast_mr(model: MrModel, history, horizon: int = 1) -> float:
    """l-step forecast by per-step regime-probability collapsing.

    The filtered regime distribution at the end of ``history`` is propagated
    through the transition matrix; at each step the collapsed mean mixes the
    M-regime AR recursion with the S-regime constant:
    y_hat(j) = pi_M(j) (d + alpha y_hat(j-1)) + pi_S(j) mu_S.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    y = np.asarray(history, dtype=float).ravel()
    finite = np.flatnonzero(np.isfinite(y))
    if finite.size < 2:
        raise ValueError("history must contain at least two observations")
    _, filt, _ = hamilton_filter(
        y, model.drift, model.alpha, model.spike_mean, model.var_moderate,
        model.var_spike, model.trans_q, model.trans_p, return_probs=True)
    pi_m, pi_s = float(filt[-1, 0]), float(filt[-1, 1])
    q, p = model.trans_q, model.trans_p
    yhat = float(y[finite[-1]])
    for _ in range(horizon):
        pm = q * pi_m + (1.0 - p) * pi_s
        ps = (1.0 - q) * pi_m + p * pi_s
        yhat = pm * (model.drift + model.alpha * yhat) + ps * model.spike_mean
        pi_m, pi_s = pm, ps
    return yhat
