"""Shared fixtures: small synthetic worlds reused across test modules."""

import warnings

import pytest

from curvecast import evaluate, pipeline, simulate


@pytest.fixture(scope="session")
def small_world():
    """60-day 2-factor dataset with mild noise plus its ground truth."""
    gen = simulate.FfmGenerator.default(K=2, noise_sd=0.05, seed=1)
    ds, truth = simulate.generate(gen, 60)
    return ds, truth


@pytest.fixture(scope="session")
def small_model(small_world):
    ds, _ = small_world
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pipeline.fit_ffm(
            ds, pipeline.FitConfig(k=2, ratio=0.7, bandwidth=0.2))


@pytest.fixture(scope="session")
def study_world():
    """130-day dataset sized for the rolling study (AR needs 100 obs)."""
    gen = simulate.FfmGenerator.default(
        K=2, noise_sd=0.08, seed=9,
        score_process=simulate.ScoreProcess(
            kind="seasonal_ar", mean=(8.0, 3.0), sea_amp=(1.0, 0.5)),
        domain_process=simulate.DomainProcess(spread=0.04, max_offset=0.12),
        demand_path=simulate.DemandPath(ar_coef=0.9, offset_sd=0.15,
                                        warp_strength=0.25))
    ds, truth = simulate.generate(gen, 130)
    return ds, truth


@pytest.fixture(scope="session")
def study_config():
    return evaluate.StudyConfig(
        learn_days=110, horizons=(1, 2), models=("ffm", "ar"),
        refit_every=10,
        fit=pipeline.FitConfig(k=2, ratio=0.7, bandwidth=0.2))


@pytest.fixture(scope="session")
def study_report(study_world, study_config):
    ds, _ = study_world
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return evaluate.rolling_forecast_study(ds, study_config)
