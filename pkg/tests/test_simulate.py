"""Unit tests for the synthetic data generators."""

import math

import numpy as np
import pytest

from curvecast import ingest, simulate


def _flat_prices(ds):
    return np.array([o.price for d in ds.days for o in d.observations])


def _flat_demands(ds):
    return np.array([o.demand for d in ds.days for o in d.observations])


# ---------------------------------------------------------------------------
# orthonormal factors


def test_factors_are_orthonormal():
    lo, hi = 0.3, 1.7
    factors = simulate.make_orthonormal_factors(4, lo, hi)
    u = np.linspace(lo, hi, 5001)
    F = np.column_stack([f(u) for f in factors])
    gram = np.trapezoid(F[:, :, None] * F[:, None, :], u, axis=0)
    assert np.allclose(gram, np.eye(4), atol=1e-6)
    # sign convention: each factor integrates positive
    assert np.all(np.trapezoid(F, u, axis=0) > 0)


def test_constant_factor_kind():
    (f1,) = simulate.make_orthonormal_factors(1, 0.0, 4.0, kind="constant")
    assert f1(1.0) == pytest.approx(0.5)  # 1/sqrt(4)
    assert f1(3.7) == pytest.approx(0.5)


def test_factor_kind_errors():
    with pytest.raises(ValueError, match="unknown factor kind"):
        simulate.make_orthonormal_factors(2, kind="fourier")
    with pytest.raises(ValueError, match="K must be"):
        simulate.make_orthonormal_factors(5)


# ---------------------------------------------------------------------------
# FFM world generator


def test_generate_is_deterministic():
    gen = simulate.FfmGenerator.default(K=2, noise_sd=0.05, seed=42)
    ds1, tr1 = simulate.generate(gen, 30)
    ds2, tr2 = simulate.generate(gen, 30)
    assert np.array_equal(_flat_prices(ds1), _flat_prices(ds2))
    assert np.array_equal(_flat_demands(ds1), _flat_demands(ds2))
    assert np.array_equal(tr1.scores, tr2.scores)
    ds3, _ = simulate.generate(
        simulate.FfmGenerator.default(K=2, noise_sd=0.05, seed=43), 30)
    assert not np.array_equal(_flat_prices(ds1), _flat_prices(ds3))


def test_generated_dataset_structure(small_world):
    ds, truth = small_world
    assert [d.day_index for d in ds.days] == list(range(1, ds.n_days + 1))
    cal = ingest.workday_calendar(ds.days[0].calendar_date, ds.n_days)
    assert [d.calendar_date for d in ds.days] == list(cal)
    for d in ds.days:
        assert d.fit_eligible
        assert d.n_valid == len(d.observations) == 24
        assert ds.global_lo <= d.domain_lo < d.domain_hi <= ds.global_hi
        dem = np.array([o.demand for o in d.observations])
        assert d.domain_lo == pytest.approx(np.min(dem))
        assert d.domain_hi == pytest.approx(np.max(dem))
    assert truth.scores.shape == (ds.n_days, 2)
    assert truth.domains.shape == (ds.n_days, 2)


def test_domains_cover_global_envelope():
    gen = simulate.FfmGenerator.default(K=2, noise_sd=0.0, seed=7)
    ds, truth = simulate.generate(gen, 500)
    span = ds.global_hi - ds.global_lo
    assert np.min(truth.domains[:, 0]) - ds.global_lo < 0.02 * span
    assert ds.global_hi - np.max(truth.domains[:, 1]) < 0.02 * span


def test_noiseless_prices_equal_model(small_world):
    gen = simulate.FfmGenerator.default(
        K=2, noise_sd=0.0, seed=3,
        domain_process=simulate.DomainProcess(spread=0.0, max_offset=0.0))
    ds, truth = simulate.generate(gen, 25)
    worst = 0.0
    for t, day in enumerate(ds.days):
        for o in day.observations:
            model_val = sum(truth.scores[t, k] * truth.factors[k](o.demand)
                            for k in range(2))
            worst = max(worst, abs(model_val - o.price))
    scale = float(np.mean(np.abs(_flat_prices(ds))))
    assert worst < 1e-3 * scale


def test_constant_factor_world_prices():
    gen = simulate.FfmGenerator.default(
        K=1, lo=0.0, hi=4.0, noise_sd=0.0, seed=5, kind="constant")
    ds, truth = simulate.generate(gen, 20)
    for t, day in enumerate(ds.days):
        prices = np.array([o.price for o in day.observations])
        assert np.allclose(prices, truth.scores[t, 0] / 2.0, atol=1e-10)


def test_seasonal_ar_scores_are_stationary():
    proc = simulate.ScoreProcess(kind="seasonal_ar", mean=(8.0, 3.0),
                                 sea_amp=(1.0, 0.5), sea_rho=0.9,
                                 sea_theta=0.5, sea_sd=0.6)
    rng = np.random.default_rng(0)
    scores = simulate._generate_scores(proc, 2, 4000, rng, None)
    assert scores.shape == (4000, 2)
    # mean reversion around the configured level, bounded excursions
    assert abs(np.mean(scores[:, 0]) - 8.0) < 0.5
    assert abs(np.mean(scores[:, 1]) - 3.0) < 0.3
    assert np.std(scores[:, 0]) < 4.0
    # weekday chains: same-weekday lag-5 autocorrelation is strong, while
    # lag-1 carries only the MA part, theta/(1+theta^2) = 0.4
    z = scores[:, 0] - np.mean(scores[:, 0])
    r5 = float(z[5:] @ z[:-5] / (z @ z))
    r1 = float(z[1:] @ z[:-1] / (z @ z))
    assert r5 > 0.8
    assert 0.3 < r1 < 0.5


def test_generate_validates_arguments():
    gen = simulate.FfmGenerator.default(K=2)
    with pytest.raises(ValueError, match="T must be positive"):
        simulate.generate(gen, 0)
    with pytest.raises(ValueError, match="unknown score process"):
        bad = simulate.FfmGenerator.default(
            K=2, score_process=simulate.ScoreProcess(kind="brownian"))
        simulate.generate(bad, 10)


# ---------------------------------------------------------------------------
# SARIMA path generator


def test_sarima_autocovariance_matches_theory():
    params = simulate.SarimaParams()
    y = simulate.generate_sarima(params, 20000, seed=1)
    w = np.diff(y)
    w = w[5:] - w[:-5]  # doubly differenced: pure MA
    gamma_hat = np.array([
        float(np.mean((w[k:] - w.mean()) * (w[:len(w) - k] - w.mean())))
        for k in range(12)])
    gamma = simulate.sarima_diff_autocov(params, 11)
    assert gamma[0] > 0
    assert np.max(np.abs(gamma_hat - gamma)) < 0.1 * gamma[0]


def test_sarima_seed_forms():
    a = simulate.generate_sarima(simulate.SarimaParams(), 50, seed=9)
    b = simulate.generate_sarima(simulate.SarimaParams(), 50, seed=9)
    c = simulate.generate_sarima(simulate.SarimaParams(), 50,
                                 seed=np.random.SeedSequence(9))
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)
    with pytest.raises(ValueError, match="T must be positive"):
        simulate.generate_sarima(simulate.SarimaParams(), 0, seed=1)


def test_sarima_diff_autocov_truncates():
    gamma = simulate.sarima_diff_autocov(simulate.SarimaParams(), 30)
    # MA order is s + q = 11: autocovariance vanishes beyond lag 11
    assert np.all(gamma[12:] == 0.0)
    assert gamma.shape == (31,)


# ---------------------------------------------------------------------------
# regime-switch and AR(1) generators


def test_regime_occupancy_matches_stationary_distribution():
    params = simulate.RegimeParams()  # q=0.95, p=0.5
    _, states = simulate.generate_regime_switch(params, 20000, seed=11)
    pi_s = (1.0 - params.q) / (2.0 - params.q - params.p)
    assert abs(float(np.mean(states)) - pi_s) < 0.03


def test_regime_q_one_never_spikes():
    params = simulate.RegimeParams(q=1.0)
    y, states = simulate.generate_regime_switch(params, 2000, seed=2)
    assert np.all(states == 0)
    # pure AR(1) in the M regime: OLS recovers alpha
    X = np.column_stack([np.ones(1999), y[:-1]])
    coef, *_ = np.linalg.lstsq(X, y[1:], rcond=None)
    assert coef[1] == pytest.approx(params.alpha, abs=0.05)


def test_regime_switch_validation():
    with pytest.raises(ValueError, match="T must be positive"):
        simulate.generate_regime_switch(simulate.RegimeParams(), 0, seed=1)
    with pytest.raises(ValueError, match="transition probabilities"):
        simulate.generate_regime_switch(
            simulate.RegimeParams(q=1.2), 10, seed=1)


def test_generate_ar1_moments():
    y = simulate.generate_ar1(d=1.0, alpha=0.5, sigma=0.3, T=20000, seed=4)
    assert float(np.mean(y)) == pytest.approx(2.0, abs=0.05)
    var = 0.09 / (1.0 - 0.25)
    assert float(np.var(y)) == pytest.approx(var, rel=0.1)
    again = simulate.generate_ar1(d=1.0, alpha=0.5, sigma=0.3, T=20000, seed=4)
    assert np.array_equal(y, again)
