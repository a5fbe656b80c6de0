"""Unit tests for the AR(1) and Markov regime-switching baselines."""

import datetime as dt
import math
import warnings

import numpy as np
import pytest

from curvecast import baselines, ingest, simulate
from curvecast.exceptions import RankError


# ---------------------------------------------------------------------------
# fit_ar / forecast_ar


def test_fit_ar_recovers_alpha():
    y = simulate.generate_ar1(d=1.0, alpha=0.7, sigma=0.5, T=2000, seed=1)
    m = baselines.fit_ar(y)
    assert m.alpha == pytest.approx(0.7, abs=0.05)
    assert m.drift == pytest.approx(1.0, abs=0.2)
    assert m.innovation_var == pytest.approx(0.25, rel=0.15)
    assert m.coeff_names == ()
    assert m.n_obs == 1999


def test_fit_ar_white_noise_alpha_zero():
    rng = np.random.default_rng(8)
    y = rng.normal(0.0, 1.0, 2000)
    m = baselines.fit_ar(y)
    assert abs(m.alpha) < 0.05


def test_fit_ar_constant_series_is_singular():
    with pytest.raises(RankError, match="collinear"):
        baselines.fit_ar(np.full(300, 4.0))


def test_fit_ar_too_short():
    with pytest.raises(ValueError, match="need >= 100"):
        baselines.fit_ar(np.arange(50, dtype=float))


def test_fit_ar_drops_missing_rows():
    y = simulate.generate_ar1(d=0.5, alpha=0.6, sigma=0.3, T=400, seed=3)
    y[50:60] = np.nan
    m = baselines.fit_ar(y)
    # the 10-NaN block invalidates rows t=50..60 (as response or as lag)
    assert m.n_obs == 399 - 11
    assert m.alpha == pytest.approx(0.6, abs=0.12)


def test_fit_ar_calendar_terms_recovered():
    dates = ingest.workday_calendar(dt.date(2020, 1, 6), 600)
    true = {"tue": 0.4, "wed": -0.3, "thu": 0.2, "fri": 0.1,
            "sin_annual": 0.25, "cos_annual": -0.15}
    rows = baselines._deterministic_rows(dates)
    rng = np.random.default_rng(11)
    y = np.zeros(600)
    prev = 2.0
    for t in range(600):
        g = float(rows[t] @ np.array(list(true.values())))
        prev = 1.0 + g + 0.5 * prev + rng.normal(0.0, 0.05)
        y[t] = prev
    m = baselines.fit_ar(y, calendar=dates)
    assert m.coeff_names == baselines._DET_NAMES
    got = dict(zip(m.coeff_names, m.deterministic_coeffs))
    for name, v in true.items():
        assert got[name] == pytest.approx(v, abs=0.05), name
    assert m.alpha == pytest.approx(0.5, abs=0.05)


def test_fit_ar_calendar_length_mismatch():
    with pytest.raises(ValueError, match="calendar length"):
        baselines.fit_ar(np.arange(200, dtype=float),
                         calendar=[dt.date(2020, 1, 1)] * 10)


def test_deterministic_value_contract():
    plain = baselines.ArModel(drift=1.0, alpha=0.5, deterministic_coeffs=(),
                              innovation_var=1.0, coeff_names=(), n_obs=100)
    assert plain.deterministic_value(None) == 0.0
    seasonal = baselines.ArModel(
        drift=1.0, alpha=0.5, deterministic_coeffs=(0.4, 0.0, 0.0, 0.0,
                                                    0.0, 0.0),
        innovation_var=1.0, coeff_names=baselines._DET_NAMES, n_obs=100)
    with pytest.raises(ValueError, match="date required"):
        seasonal.deterministic_value(None)
    tue = dt.date(2024, 5, 7)
    assert seasonal.deterministic_value(tue) == pytest.approx(0.4)


def _plain_ar(d, alpha):
    return baselines.ArModel(drift=d, alpha=alpha, deterministic_coeffs=(),
                             innovation_var=1.0, coeff_names=(), n_obs=100)


def test_forecast_ar_recursion():
    assert baselines.forecast_ar(_plain_ar(2.0, 0.0), 7.0) == 2.0
    assert baselines.forecast_ar(_plain_ar(0.0, 1.0), 7.0, horizon=5) == 7.0
    assert baselines.forecast_ar(_plain_ar(1.0, 0.5), 0.0,
                                 horizon=2) == pytest.approx(1.5)
    longrun = baselines.forecast_ar(_plain_ar(1.0, 0.5), 40.0, horizon=200)
    assert longrun == pytest.approx(2.0, abs=1e-6)


def test_forecast_ar_argument_errors():
    with pytest.raises(ValueError, match="horizon"):
        baselines.forecast_ar(_plain_ar(1.0, 0.5), 0.0, horizon=0)
    seasonal = baselines.ArModel(
        drift=1.0, alpha=0.5, deterministic_coeffs=(0.4, 0, 0, 0, 0, 0),
        innovation_var=1.0, coeff_names=baselines._DET_NAMES, n_obs=100)
    with pytest.raises(ValueError, match="future dates"):
        baselines.forecast_ar(seasonal, 0.0, horizon=2,
                              calendar_future=[dt.date(2024, 5, 7)])


# ---------------------------------------------------------------------------
# Hamilton filter


def _reference_filter(y, d, alpha, mu_s, s2m, s2s, q, p):
    """Straightforward textbook filter (no missing data) for cross-checking."""
    denom = 2.0 - q - p
    pi = np.array([(1.0 - p) / denom, 1.0 - (1.0 - p) / denom])
    A = np.array([[q, 1.0 - p], [1.0 - q, p]])  # A[j, i] = P(i -> j)
    ll = 0.0
    for t in range(1, len(y)):
        pred = A @ pi
        dm = math.exp(-0.5 * (y[t] - d - alpha * y[t - 1]) ** 2 / s2m) \
            / math.sqrt(2 * math.pi * s2m)
        dsp = math.exp(-0.5 * (y[t] - mu_s) ** 2 / s2s) \
            / math.sqrt(2 * math.pi * s2s)
        joint = pred * np.array([dm, dsp])
        ll += math.log(joint.sum())
        pi = joint / joint.sum()
    return ll


def test_hamilton_filter_matches_reference():
    y, _ = simulate.generate_regime_switch(simulate.RegimeParams(), 60,
                                           seed=5)
    args = (0.5, 0.6, 5.0, 0.04, 1.0, 0.95, 0.5)
    ll = baselines.hamilton_filter(y, *args)
    assert ll == pytest.approx(_reference_filter(y, *args), abs=1e-10)


def test_hamilton_filter_probs_sum_to_one():
    y, _ = simulate.generate_regime_switch(simulate.RegimeParams(), 200,
                                           seed=6)
    ll, filt, pred = baselines.hamilton_filter(
        y, 0.5, 0.6, 5.0, 0.04, 1.0, 0.95, 0.5, return_probs=True)
    assert math.isfinite(ll)
    assert np.max(np.abs(filt.sum(axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(pred.sum(axis=1) - 1.0)) < 1e-12


def test_hamilton_filter_handles_missing():
    y, _ = simulate.generate_regime_switch(simulate.RegimeParams(), 200,
                                           seed=7)
    ll_full = baselines.hamilton_filter(y, 0.5, 0.6, 5.0, 0.04, 1.0,
                                        0.95, 0.5)
    y[40:45] = np.nan
    ll, filt, _ = baselines.hamilton_filter(
        y, 0.5, 0.6, 5.0, 0.04, 1.0, 0.95, 0.5, return_probs=True)
    assert math.isfinite(ll)
    assert ll < ll_full + 1e-9  # fewer terms, each log-density < 0 here
    assert np.max(np.abs(filt.sum(axis=1) - 1.0)) < 1e-12


# ---------------------------------------------------------------------------
# fit_mr / forecast_mr


@pytest.fixture(scope="module")
def mr_fit():
    y, states = simulate.generate_regime_switch(
        simulate.RegimeParams(), 800, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = baselines.fit_mr(y)
    return y, states, model


def test_fit_mr_recovers_transitions(mr_fit):
    _, _, m = mr_fit
    assert m.converged
    assert m.trans_q == pytest.approx(0.95, abs=0.1)
    assert m.trans_p == pytest.approx(0.5, abs=0.2)
    assert m.alpha == pytest.approx(0.6, abs=0.15)
    assert m.spike_mean == pytest.approx(5.0, abs=0.5)
    assert m.var_spike >= m.var_moderate


def test_fit_mr_outputs(mr_fit):
    y, states, m = mr_fit
    assert m.filtered_probs.shape == (len(y) - 1, 2)
    assert m.smoothed_probs.shape == (len(y) - 1, 2)
    assert np.max(np.abs(m.filtered_probs.sum(axis=1) - 1.0)) < 1e-9
    assert np.max(np.abs(m.smoothed_probs.sum(axis=1) - 1.0)) < 1e-9
    # smoothed spike probability should broadly track the true regime path
    agree = np.mean((m.smoothed_probs[:, 1] > 0.5) == (states[1:] == 1))
    assert agree > 0.8
    path = np.array(m.loglik_path)
    assert np.all(np.diff(path) > -1e-6)
    assert math.isfinite(m.loglik)


def test_fit_mr_too_short():
    with pytest.raises(ValueError, match="need >= 200"):
        baselines.fit_mr(np.arange(100, dtype=float))


def test_fit_mr_single_regime_warns():
    y = simulate.generate_ar1(d=0.5, alpha=0.6, sigma=0.05, T=500, seed=9)
    with warnings.catch_warnings(record=True) as got:
        warnings.simplefilter("always")
        baselines.fit_mr(y)
    assert any("unoccupied" in str(w.message) for w in got)


def _manual_mr(d, alpha, mu_s, q, p):
    dummy = np.zeros((1, 2))
    return baselines.MrModel(
        drift=d, alpha=alpha, spike_mean=mu_s, var_moderate=0.04,
        var_spike=1.0, trans_q=q, trans_p=p, loglik=0.0, n_obs=100,
        converged=True, filtered_probs=dummy, smoothed_probs=dummy)


def test_forecast_mr_absorbing_moderate():
    m = _manual_mr(d=1.0, alpha=0.5, mu_s=50.0, q=1.0, p=0.0)
    hist = np.array([2.1, 2.0, 2.2, 2.0])
    got = baselines.forecast_mr(m, hist, horizon=1)
    assert got == pytest.approx(1.0 + 0.5 * 2.0)
    two = baselines.forecast_mr(m, hist, horizon=2)
    assert two == pytest.approx(1.0 + 0.5 * (1.0 + 0.5 * 2.0))


def test_forecast_mr_absorbing_spike():
    m = _manual_mr(d=1.0, alpha=0.5, mu_s=50.0, q=0.0, p=1.0)
    hist = np.array([49.0, 51.0, 50.5, 49.5])
    assert baselines.forecast_mr(m, hist, horizon=3) == pytest.approx(50.0)


def test_forecast_mr_errors(mr_fit):
    y, _, m = mr_fit
    with pytest.raises(ValueError, match="horizon"):
        baselines.forecast_mr(m, y, horizon=0)
    with pytest.raises(ValueError, match="two observations"):
        baselines.forecast_mr(m, np.array([1.0, np.nan]))


def test_forecast_mr_blends_regimes(mr_fit):
    y, _, m = mr_fit
    got = baselines.forecast_mr(m, y, horizon=1)
    pure_m = m.drift + m.alpha * y[-1]
    lo, hi = sorted((pure_m, m.spike_mean))
    assert lo - 1e-9 <= got <= hi + 1e-9
