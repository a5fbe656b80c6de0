"""Batch command-line front end.

Subcommands: ``simulate``, ``fit``, ``forecast``, ``evaluate``,
``validate-span``, ``granger``. Global flags: ``--config``, ``--seed``,
``--out``, ``--workers``, ``--verbose``. Exit codes: 0 ok, 1 computation
failure, 2 usage/input error.

Configuration comes from an optional config file (``key=value`` lines or a
JSON object) merged with command-line flags; flags win. Unknown keys are
rejected. Every command writes a ``<command>_config.json`` snapshot of the
effective configuration next to its outputs, so a run can be reproduced
bit-identically from the snapshot alone.
"""

from __future__ import annotations

import datetime as dt
import functools
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import artifacts, evaluate as evaluate_mod, forecast as forecast_mod
from . import ingest, pipeline, simulate as simulate_mod
from .exceptions import CurvecastError, ParseError, SchemaError

_FIT_KEYS = {
    "k", "k_max", "grid_n", "kernel", "cov_bandwidth", "ratio",
    "ratio_grid", "quad_points", "gcv_grid_size", "score_mode", "varimax",
    "outlier_threshold", "min_valid_pairs",
}

_KNOWN_KEYS = {
    "simulate": {"days", "k", "noise_sd", "score_kind", "seed"},
    "fit": _FIT_KEYS,
    "forecast": _FIT_KEYS | {"sarima_orders", "level", "max_horizon",
                             "strategies", "origin"},
    "evaluate": _FIT_KEYS | {"learn_days", "horizons", "strategies",
                             "level", "trim", "models", "refit_every"},
    "validate-span": _FIT_KEYS | {"subsets"},
    "granger": {"max_lag"},
}


# ---------------------------------------------------------------------------
# config plumbing


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_file(path) -> dict:
    """Parse a config file: a JSON object, or key=value lines with # comments."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ParseError(f"{path}: config JSON must be an object")
        return data
    data = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ParseError(f"{path}:{line_no}: expected key=value, got {s!r}")
        key, value = s.split("=", 1)
        data[key.strip()] = _parse_scalar(value.strip())
    return data


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _require_file(path, what: str) -> str:
    if path is None:
        _fail(2, f"missing required {what} file")
    if not Path(path).is_file():
        _fail(2, f"{what} file not found: {path}")
    return str(path)


def _merged_config(ctx, command: str, flag_values: dict) -> dict:
    """File config + flag overrides, with unknown-key rejection."""
    file_cfg = dict(ctx.obj.get("config", {}))
    unknown = sorted(set(file_cfg) - _KNOWN_KEYS[command])
    if unknown:
        _fail(2, f"unknown config key(s) for {command}: {', '.join(unknown)}")
    merged = dict(file_cfg)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged


def _fit_config(cfg: dict) -> pipeline.FitConfig:
    kernel = cfg.get("kernel", "epanechnikov")
    if kernel != "epanechnikov":
        raise ValueError(f"only the epanechnikov kernel is implemented, "
                         f"got {kernel!r}")
    kwargs = {}
    for key, field in (("k", "k"), ("k_max", "k_max"), ("grid_n", "grid_n"),
                       ("cov_bandwidth", "bandwidth"), ("ratio", "ratio"),
                       ("quad_points", "quad_points"),
                       ("gcv_grid_size", "gcv_grid_size"),
                       ("score_mode", "score_mode"), ("varimax", "varimax")):
        if key in cfg and cfg[key] is not None:
            kwargs[field] = cfg[key]
    if cfg.get("ratio_grid") is not None:
        kwargs["ratio_grid"] = tuple(float(r) for r in cfg["ratio_grid"])
    if kwargs.get("ratio") == "cv":
        kwargs["ratio"] = None
    return pipeline.FitConfig(**kwargs)


def _load_dataset(cfg: dict, prices, demand, wind, holidays):
    holiday_dates = ()
    if holidays is not None:
        holiday_dates = ingest.load_holidays(_require_file(holidays, "holidays"))
    kwargs = {}
    if cfg.get("outlier_threshold") is not None:
        kwargs["outlier_threshold"] = float(cfg["outlier_threshold"])
    if cfg.get("min_valid_pairs") is not None:
        kwargs["min_valid_pairs"] = int(cfg["min_valid_pairs"])
    return ingest.load_dataset(
        _require_file(prices, "prices"), _require_file(demand, "demand"),
        wind_file=_require_file(wind, "wind") if wind is not None else None,
        holidays=holiday_dates, **kwargs)


def _out_dir(ctx) -> Path:
    out = Path(ctx.obj.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot(ctx, command: str, cfg: dict, paths: dict) -> None:
    payload = {"command": command}
    payload.update({k: cfg[k] for k in sorted(cfg)})
    payload.update({k: (str(v) if v is not None else None)
                    for k, v in sorted(paths.items())})
    if ctx.obj.get("seed") is not None:
        payload.setdefault("seed", ctx.obj["seed"])
    if ctx.obj.get("workers") is not None:
        payload["workers"] = ctx.obj["workers"]
    artifacts.write_config_snapshot(
        _out_dir(ctx) / f"{command.replace('-', '_')}_config.json", payload)


def _echo(ctx, message: str) -> None:
    if ctx.obj.get("verbose"):
        click.echo(message)


def _command_errors(fn):
    """Map package exceptions to the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ParseError, SchemaError) as exc:
            _fail(2, str(exc))
        except FileNotFoundError as exc:
            _fail(2, f"file not found: {exc.filename}")
        except CurvecastError as exc:
            _fail(1, str(exc))
        except ValueError as exc:
            _fail(2, str(exc))
    return wrapper


# ---------------------------------------------------------------------------
# group


@click.group()
@click.option("--config", "config_path", type=str, default=None,
              help="Config file (key=value lines or a JSON object).")
@click.option("--seed", type=int, default=None, help="Random seed.")
@click.option("--out", type=str, default=None,
              help="Output directory (created if missing; default: cwd).")
@click.option("--workers", type=int, default=None,
              help="Worker count for parallel sections (advisory; the "
                   "current implementation computes sequentially).")
@click.option("--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, config_path, seed, out, workers, verbose):
    """Functional factor model toolkit for electricity price curves."""
    ctx.ensure_object(dict)
    if workers is not None and workers < 1:
        _fail(2, f"--workers must be >= 1, got {workers}")
    config = {}
    if config_path is not None:
        try:
            config = parse_config_file(_require_file(config_path, "config"))
        except ParseError as exc:
            _fail(2, str(exc))
    ctx.obj.update(config=config, seed=seed, out=out, workers=workers,
                   verbose=verbose)


# ---------------------------------------------------------------------------
# simulate


@main.command("simulate")
@click.option("--days", type=int, default=None, help="Number of workdays.")
@click.option("--k", type=int, default=None, help="Number of factors (2).")
@click.option("--noise-sd", type=float, default=None,
              help="Observation noise sd (0).")
@click.option("--score-kind", type=str, default=None,
              help="random_walk | iid | sarima | seasonal_ar.")
@click.pass_context
@_command_errors
def cmd_simulate(ctx, days, k, noise_sd, score_kind):
    """Write a synthetic dataset (prices.csv, demand.csv, truth.json)."""
    cfg = _merged_config(ctx, "simulate", {
        "days": days, "k": k, "noise_sd": noise_sd,
        "score_kind": score_kind, "seed": ctx.obj.get("seed")})
    if cfg.get("days") is None:
        _fail(2, "simulate needs --days (or config key 'days')")
    cfg.setdefault("k", 2)
    cfg.setdefault("noise_sd", 0.0)
    cfg.setdefault("score_kind", "random_walk")
    cfg.setdefault("seed", 0)
    gen = simulate_mod.FfmGenerator.default(
        K=int(cfg["k"]), noise_sd=float(cfg["noise_sd"]),
        seed=int(cfg["seed"]),
        score_process=simulate_mod.ScoreProcess(kind=cfg["score_kind"]))
    ds, truth = simulate_mod.generate(gen, int(cfg["days"]))
    out = _out_dir(ctx)
    ingest.write_price_csv(ds, out / "prices.csv")
    ingest.write_demand_csv(ds, out / "demand.csv")
    artifacts.write_ground_truth_json(out / "truth.json", truth)
    _snapshot(ctx, "simulate", cfg, {"out": out})
    _echo(ctx, f"wrote {ds.n_days} days to {out}")


# ---------------------------------------------------------------------------
# fit


@main.command("fit")
@click.option("--prices", type=str, default=None)
@click.option("--demand", type=str, default=None)
@click.option("--wind", type=str, default=None)
@click.option("--holidays", type=str, default=None)
@click.option("--k", type=int, default=None,
              help="Factor count; omit to select by AIC.")
@click.option("--ratio", type=str, default=None,
              help="Undersmoothing ratio, or 'cv'.")
@click.option("--cov-bandwidth", type=str, default=None,
              help="Covariance bandwidth, or 'cv'.")
@click.pass_context
@_command_errors
def cmd_fit(ctx, prices, demand, wind, holidays, k, ratio, cov_bandwidth):
    """Fit curves, basis and scores; write fit artifacts."""
    flag_cfg = {"k": k}
    if ratio is not None:
        flag_cfg["ratio"] = "cv" if ratio == "cv" else float(ratio)
    if cov_bandwidth is not None:
        flag_cfg["cov_bandwidth"] = ("cv" if cov_bandwidth == "cv"
                                     else float(cov_bandwidth))
    cfg = _merged_config(ctx, "fit", flag_cfg)
    ds = _load_dataset(cfg, prices, demand, wind, holidays)
    fit_cfg = _fit_config(cfg)
    model = pipeline.fit_ffm(ds, fit_cfg)
    out = _out_dir(ctx)
    artifacts.write_curves_json(out / "curves.json", model.curves)
    artifacts.write_basis_json(out / "basis.json", model.basis)
    artifacts.write_scores_json(out / "scores.json", model.scores)
    if model.selection is not None:
        artifacts.write_selection_csv(out / "selection.csv", model.selection)
    _snapshot(ctx, "fit", cfg, {"prices": prices, "demand": demand,
                                "wind": wind, "holidays": holidays})
    _echo(ctx, f"fitted K={model.k} ratio={model.ratio:.3g} "
               f"bandwidth={model.bandwidth:.3g} "
               f"cum_variance={model.cum_variance:.4f}")


# ---------------------------------------------------------------------------
# forecast


@main.command("forecast")
@click.option("--artifacts", "artifacts_dir", type=str, required=True,
              help="Directory with basis.json and scores.json from fit.")
@click.option("--prices", type=str, default=None)
@click.option("--demand", type=str, default=None)
@click.option("--wind", type=str, default=None)
@click.option("--holidays", type=str, default=None)
@click.option("--origin", type=int, default=None,
              help="1-based day index of the last learning day.")
@click.option("--max-horizon", type=int, default=None)
@click.option("--strategies", type=str, default=None,
              help="Comma-separated subset of persistence,ideal.")
@click.option("--level", type=float, default=None)
@click.pass_context
@_command_errors
def cmd_forecast(ctx, artifacts_dir, prices, demand, wind, holidays, origin,
                 max_horizon, strategies, level):
    """Forecast scores and hourly prices from fitted artifacts."""
    cfg = _merged_config(ctx, "forecast", {
        "origin": origin, "max_horizon": max_horizon, "level": level,
        "strategies": (strategies.split(",") if strategies else None)})
    cfg.setdefault("max_horizon", 20)
    cfg.setdefault("level", forecast_mod.DEFAULT_LEVEL)
    cfg.setdefault("strategies", ["persistence"])
    art = Path(artifacts_dir)
    basis = artifacts.read_basis_json(_require_file(art / "basis.json", "basis"))
    scores = artifacts.read_scores_json(
        _require_file(art / "scores.json", "scores"))
    ds = _load_dataset(cfg, prices, demand, wind, holidays)

    n_days = ds.n_days
    horizons = list(range(1, int(cfg["max_horizon"]) + 1))
    strategy_list = list(cfg["strategies"])
    for s in strategy_list:
        if s not in ("persistence", "ideal"):
            raise ValueError(f"unknown demand strategy {s!r}")
    origin = cfg.get("origin")
    if origin is None:
        origin = (n_days - horizons[-1] if "ideal" in strategy_list
                  else n_days)
    origin = int(origin)
    if not 1 <= origin <= n_days:
        raise ValueError(f"origin {origin} outside 1..{n_days}")

    n_panel = int(scores.day_index.max())
    panel = np.full((n_panel, scores.scores.shape[1]), np.nan)
    panel[scores.day_index - 1] = scores.scores
    if n_panel < origin:
        raise ValueError(
            f"scores artifact covers days 1..{n_panel} but origin is "
            f"{origin}; refit on the full learning sample first")
    panel = panel[:origin]

    models = [forecast_mod.fit_sarima(panel[:, j])
              for j in range(panel.shape[1])]
    score_fcs = forecast_mod.forecast_scores(models, horizons,
                                             level=float(cfg["level"]))
    origin_date = ds.day_by_index(origin).calendar_date
    rows = []
    for sf in score_fcs:
        for strategy in strategy_list:
            demand_fc = forecast_mod.forecast_demand(ds, origin, sf.horizon,
                                                     strategy)
            result = forecast_mod.forecast_prices(
                basis, sf, demand_fc, strategy=strategy,
                origin_date=origin_date)
            rows.extend(artifacts.forecast_result_rows(result))
    out = _out_dir(ctx)
    artifacts.write_forecast_csv(out / "forecast.csv", rows)
    artifacts.write_sarima_json(out / "sarima.json", models)
    _snapshot(ctx, "forecast", cfg, {
        "artifacts": artifacts_dir, "prices": prices, "demand": demand,
        "wind": wind, "holidays": holidays})
    _echo(ctx, f"wrote {len(rows)} forecast rows "
               f"({len(horizons)} horizons x {len(strategy_list)} "
               f"strategies x 24 hours)")


# ---------------------------------------------------------------------------
# evaluate


def _self_check(report) -> list:
    """Fast embedded invariant suite; returns failure messages."""
    failures = []

    def check(name, cond):
        if not cond:
            failures.append(name)

    ev = evaluate_mod
    check("interval_score inside", abs(ev.interval_score(0, 2, 1, 0.05) - 2) < 1e-12)
    check("interval_score above", abs(ev.interval_score(0, 2, 3, 0.05) - 42) < 1e-12)
    check("interval_score boundary", abs(ev.interval_score(0, 2, 2, 0.05) - 2) < 1e-12)
    check("rmse identical", ev.rmse([1.0, 2.0], [1.0, 2.0]) == 0.0)
    check("rmse offset", abs(ev.rmse([3.0, 4.0], [1.0, 2.0]) - 2.0) < 1e-12)
    check("rmse 3-4-5", abs(ev.rmse([0.0, 0.0], [3.0, 4.0]) - 5 / math.sqrt(2)) < 1e-12)
    check("trimmed_mean", abs(ev.trimmed_mean([1, 2, 3, 4, 100], 0.2) - 3.0) < 1e-12)
    rng = np.random.default_rng(0)
    f = rng.normal(size=64)
    a = rng.normal(size=64)
    check("rmse scale equivariance",
          abs(ev.rmse(3.0 * f, 3.0 * a) - 3.0 * ev.rmse(f, a)) < 1e-12)
    for actual in np.linspace(-1.0, 3.0, 21):
        width_only = abs(ev.interval_score(0.0, 2.0, actual, 0.05) - 2.0) < 1e-12
        inside = 0.0 <= actual <= 2.0
        check(f"interval_score grid actual={actual:.2f}",
              width_only == inside or (not inside and not width_only))
    check("report metrics finite",
          all(math.isfinite(r.value) for r in report.rows))
    check("n_origins positive",
          all(n > 0 for n in report.n_origins.values()))
    return failures


@main.command("evaluate")
@click.option("--prices", type=str, default=None)
@click.option("--demand", type=str, default=None)
@click.option("--wind", type=str, default=None)
@click.option("--holidays", type=str, default=None)
@click.option("--learn-days", type=int, default=None)
@click.option("--horizons", type=str, default=None,
              help="Max horizon, or comma-separated list.")
@click.option("--models", type=str, default=None,
              help="Comma-separated subset of ffm,ar,mr.")
@click.option("--baseline", type=click.Choice(["ar", "mr"]), default=None,
              help="Shorthand: evaluate the FFM against this baseline only.")
@click.option("--refit-every", type=int, default=None)
@click.option("--self-check", is_flag=True, default=False,
              help="Run the embedded invariant suite after the study.")
@click.pass_context
@_command_errors
def cmd_evaluate(ctx, prices, demand, wind, holidays, learn_days, horizons,
                 models, baseline, refit_every, self_check):
    """Rolling-origin forecast study; writes report.csv."""
    if horizons is not None:
        parts = [int(p) for p in horizons.split(",")]
        horizons = parts[0] if len(parts) == 1 else parts
    if baseline is not None and models is not None:
        raise ValueError("--baseline and --models are mutually exclusive")
    if baseline is not None:
        models = ["ffm", baseline]
    elif models is not None:
        models = models.split(",")
    cfg = _merged_config(ctx, "evaluate", {
        "learn_days": learn_days, "horizons": horizons, "models": models,
        "refit_every": refit_every})
    if cfg.get("learn_days") is None:
        _fail(2, "evaluate needs --learn-days (or config key 'learn_days')")
    ds = _load_dataset(cfg, prices, demand, wind, holidays)
    hz = cfg.get("horizons", 20)
    hz = tuple(range(1, hz + 1)) if isinstance(hz, int) else tuple(hz)
    study = evaluate_mod.StudyConfig(
        learn_days=int(cfg["learn_days"]),
        horizons=hz,
        strategies=tuple(cfg.get("strategies", ("persistence", "ideal"))),
        level=float(cfg.get("level", 0.95)),
        trim=float(cfg.get("trim", 0.05)),
        models=tuple(cfg.get("models", ("ffm", "ar", "mr"))),
        refit_every=int(cfg.get("refit_every", 1)),
        fit=_fit_config(cfg))
    report = evaluate_mod.rolling_forecast_study(ds, study)
    out = _out_dir(ctx)
    artifacts.write_report_csv(out / "report.csv", report)
    artifacts.write_forecast_csv(out / "forecast_rows.csv",
                                 report.forecast_rows)
    _snapshot(ctx, "evaluate", cfg, {"prices": prices, "demand": demand,
                                     "wind": wind, "holidays": holidays})
    _echo(ctx, f"evaluated {len(report.rows)} metric rows over horizons "
               f"{hz[0]}..{hz[-1]}")
    if self_check:
        failures = _self_check(report)
        if failures:
            _fail(1, "self-check failed: " + "; ".join(failures))
        click.echo("self-check ok")


# ---------------------------------------------------------------------------
# validate-span


@main.command("validate-span")
@click.option("--prices", type=str, default=None)
@click.option("--demand", type=str, default=None)
@click.option("--wind", type=str, default=None)
@click.option("--holidays", type=str, default=None)
@click.option("--subsets", type=str, default=None,
              help="Comma-separated day ranges 'start:stop' (stop exclusive).")
@click.option("--k", type=int, default=None)
@click.pass_context
@_command_errors
def cmd_validate_span(ctx, prices, demand, wind, holidays, subsets, k):
    """Fit per-subset bases and cross-regress them; writes span.json."""
    flag_cfg = {"k": k}
    if subsets is not None:
        flag_cfg["subsets"] = subsets
    cfg = _merged_config(ctx, "validate-span", flag_cfg)
    if cfg.get("subsets") is None:
        _fail(2, "validate-span needs --subsets (or config key 'subsets')")
    spec = cfg["subsets"]
    if isinstance(spec, str):
        subs = []
        for part in spec.split(","):
            a, _, b = part.partition(":")
            if not b:
                _fail(2, f"bad subset {part!r}: expected start:stop")
            subs.append((int(a), int(b)))
    else:
        subs = [(int(a), int(b)) for a, b in spec]
    ds = _load_dataset(cfg, prices, demand, wind, holidays)
    validation = pipeline.validate_subset_span(
        ds, subs, K=cfg.get("k"), config=_fit_config(cfg))
    out = _out_dir(ctx)
    artifacts.write_span_json(out / "span.json", validation)
    _snapshot(ctx, "validate-span", cfg, {"prices": prices, "demand": demand,
                                          "wind": wind, "holidays": holidays})
    r2 = validation.r_squared
    off = [r2[p, q].min() for p in range(len(subs)) for q in range(len(subs))
           if p != q]
    _echo(ctx, f"min cross-subset R^2 = {min(off):.6f}" if off
               else "single subset: self-R^2 only")


# ---------------------------------------------------------------------------
# granger


def _read_series(path) -> np.ndarray:
    """One float per line; '#' comments and an optional header line allowed."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            token = s.split(",")[-1].strip()
            try:
                values.append(float(token))
            except ValueError:
                if line_no == 1 or (line_no == 2 and not values):
                    continue  # header line
                raise ParseError(f"{path}:{line_no}: not a number: {s!r}")
    if not values:
        raise ParseError(f"{path}: no numeric values found")
    return np.asarray(values, dtype=float)


@main.command("granger")
@click.option("--target", "target_path", type=str, required=True,
              help="Series file, one value per line.")
@click.option("--exog", "exog_path", type=str, required=True)
@click.option("--max-lag", type=int, default=None)
@click.pass_context
@_command_errors
def cmd_granger(ctx, target_path, exog_path, max_lag):
    """Granger-causality F-tests of target on exogenous lags."""
    cfg = _merged_config(ctx, "granger", {"max_lag": max_lag})
    cfg.setdefault("max_lag", 5)
    target = _read_series(_require_file(target_path, "target"))
    exog = _read_series(_require_file(exog_path, "exog"))
    results = evaluate_mod.granger_test(target, exog,
                                        max_lag=int(cfg["max_lag"]))
    out = _out_dir(ctx)
    artifacts.write_granger_csv(out / "granger.csv", results)
    _snapshot(ctx, "granger", cfg, {"target": target_path,
                                    "exog": exog_path})
    for lag, p in results:
        click.echo(f"lag {lag}: p = {p:.6g}")


if __name__ == "__main__":  # pragma: no cover
    main()
