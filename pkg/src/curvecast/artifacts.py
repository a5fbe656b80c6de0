"""Deterministic on-disk artifact formats.

JSON artifacts carry a top-level ``schema_version`` field; CSV artifacts
carry a leading ``# schema: curvecast-<kind>-v<n>`` comment line. Readers
reject any version they do not understand with a SchemaError. Writers are
pure functions of their inputs (no timestamps, no environment state), so a
rerun with identical inputs produces bit-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .exceptions import SchemaError
from . import smoothing, fpca

SCHEMA_VERSION = 1

_CSV_SCHEMAS = {
    "selection": "curvecast-selection-v1",
    "report": "curvecast-report-v1",
    "forecast": "curvecast-forecast-v1",
    "granger": "curvecast-granger-v1",
}


# ---------------------------------------------------------------------------
# helpers


def _floats(arr) -> list:
    """A JSON-safe list of Python floats (NaN allowed: json emits NaN)."""
    return [float(v) for v in np.asarray(arr, dtype=float).ravel()]


def _nested(arr) -> list:
    a = np.asarray(arr, dtype=float)
    return [[float(v) for v in row] for row in a]


def _dump_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_json(path, kind: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"{kind} artifact {path}: schema_version {version!r} "
            f"not supported (expected {SCHEMA_VERSION})")
    return payload


def _write_csv(path, kind: str, header: list, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# schema: {_CSV_SCHEMAS[kind]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _fmt(value: float) -> str:
    """Shortest round-trip decimal for CSV cells."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# curves


def curve_payload(curve) -> dict:
    l2 = curve.l2_norm
    if not math.isfinite(l2):
        l2 = smoothing.curve_l2_norm(curve)
    return {
        "day_index": int(curve.day_index),
        "knots": _floats(curve.knots),
        "coefficients": _floats(curve.coefficients),
        "b": float(curve.smoothing_param),
        "domain": [float(curve.domain_lo), float(curve.domain_hi)],
        "l2_norm": float(l2),
    }


def write_curves_json(path, curves) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "curves": [curve_payload(c) for c in curves],
    })


def read_curves_json(path) -> list:
    payload = _load_json(path, "curves")
    curves = []
    for rec in payload["curves"]:
        knots = np.asarray(rec["knots"], dtype=float)
        coef = np.asarray(rec["coefficients"], dtype=float)
        n = len(knots)
        if len(coef) != 2 * n:
            raise SchemaError(
                f"curves artifact {path}: day {rec['day_index']} has "
                f"{len(coef)} coefficients for {n} knots (expected {2 * n})")
        curves.append(smoothing.PriceDemandCurve(
            day_index=int(rec["day_index"]),
            knots=knots,
            values=coef[:n],
            second_derivs=coef[n:],
            smoothing_param=float(rec["b"]),
            domain_lo=float(rec["domain"][0]),
            domain_hi=float(rec["domain"][1]),
            l2_norm=float(rec["l2_norm"]),
        ))
    return curves


# ---------------------------------------------------------------------------
# basis / scores


def write_basis_json(path, basis) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "grid": _floats(basis.grid),
        "functions": _nested(basis.functions),
        "eigenvalues": _floats(basis.eigenvalues),
        "variance_shares": _floats(basis.variance_shares),
        "rotation": _nested(basis.rotation),
        "trace_total": float(basis.trace_total),
    })


def read_basis_json(path):
    payload = _load_json(path, "basis")
    return fpca.BasisSystem(
        grid=np.asarray(payload["grid"], dtype=float),
        functions=np.asarray(payload["functions"], dtype=float),
        eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
        variance_shares=np.asarray(payload["variance_shares"], dtype=float),
        rotation=np.asarray(payload["rotation"], dtype=float),
        trace_total=float(payload["trace_total"]),
    )


def write_scores_json(path, scores) -> None:
    records = []
    for i in range(len(scores.day_index)):
        records.append({
            "day_index": int(scores.day_index[i]),
            "beta": _floats(scores.scores[i]),
            "curve_norm": float(scores.curve_norms[i]),
        })
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "mode": scores.mode,
        "records": records,
    })


def read_scores_json(path):
    payload = _load_json(path, "scores")
    recs = payload["records"]
    return fpca.ScoreMatrix(
        day_index=np.asarray([r["day_index"] for r in recs], dtype=np.int64),
        scores=np.asarray([r["beta"] for r in recs], dtype=float),
        curve_norms=np.asarray([r["curve_norm"] for r in recs], dtype=float),
        mode=payload["mode"],
    )


# ---------------------------------------------------------------------------
# tables


def write_selection_csv(path, report) -> None:
    header = ["k", "ratio", "aic", "delta_aic", "cum_variance", "sse",
              "n_pairs"]
    rows = [[row.k, _fmt(row.ratio), _fmt(row.aic), _fmt(row.delta_aic),
             _fmt(row.cum_variance), _fmt(row.sse), row.n_pairs]
            for row in report.rows]
    _write_csv(path, "selection", header, rows)


def write_report_csv(path, report) -> None:
    header = ["model", "aggregate", "strategy", "horizon", "metric",
              "value", "n"]
    rows = [[r.model, r.aggregate, r.strategy, r.horizon, r.metric,
             _fmt(r.value), r.n] for r in report.rows]
    _write_csv(path, "report", header, rows)


FORECAST_HEADER = ["origin_date", "horizon", "hour", "strategy",
                   "demand_fc", "price_fc", "lo", "hi"]


def forecast_result_rows(result) -> list:
    """Flatten one ForecastResult into forecast-CSV row lists."""
    origin = "" if result.origin_date is None else result.origin_date.isoformat()
    return [[origin, result.horizon, h.hour, result.demand_strategy,
             _fmt(h.demand_forecast), _fmt(h.price_forecast),
             _fmt(h.lo), _fmt(h.hi)] for h in result.hourly]


def write_forecast_csv(path, rows) -> None:
    """Write forecast rows (study ForecastRow records or pre-built lists)."""
    out = []
    for row in rows:
        if isinstance(row, (list, tuple)):
            out.append(list(row))
        else:
            origin = "" if row.origin_date is None else row.origin_date.isoformat()
            out.append([origin, row.horizon, row.hour, row.strategy,
                        _fmt(row.demand_fc), _fmt(row.price_fc),
                        _fmt(row.lo), _fmt(row.hi)])
    _write_csv(path, "forecast", FORECAST_HEADER, out)


# ---------------------------------------------------------------------------
# fitted baseline / score models


def write_ar_json(path, model) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "model": "ar",
        "drift": float(model.drift),
        "alpha": float(model.alpha),
        "deterministic_coeffs": {
            name: float(v) for name, v in
            zip(model.coeff_names, model.deterministic_coeffs)},
        "innovation_var": float(model.innovation_var),
        "n_obs": int(model.n_obs),
    })


def write_mr_json(path, model) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "model": "mr",
        "drift": float(model.drift),
        "alpha": float(model.alpha),
        "spike_mean": float(model.spike_mean),
        "var_moderate": float(model.var_moderate),
        "var_spike": float(model.var_spike),
        "trans_q": float(model.trans_q),
        "trans_p": float(model.trans_p),
        "loglik": float(model.loglik),
        "n_obs": int(model.n_obs),
        "converged": bool(model.converged),
    })


def write_sarima_json(path, models) -> None:
    """Serialize one fitted SARIMA model per score factor."""
    payload = {"schema_version": SCHEMA_VERSION, "model": "sarima",
               "factors": []}
    for m in models:
        payload["factors"].append({
            "order": list(m.order),
            "seasonal_order": list(m.seasonal_order),
            "ma_coeffs": _floats(m.ma_coeffs),
            "seasonal_ma": float(m.seasonal_ma),
            "innovation_var": float(m.innovation_var),
            "loglik": float(m.loglik),
            "aic": float(m.aic),
            "n_obs": int(m.n_obs),
            "converged": bool(m.converged),
            "params_vector": _floats(m.params_vector),
        })
    _dump_json(path, payload)


def write_granger_csv(path, results) -> None:
    """Write (lag, p_value) pairs from granger_test."""
    rows = [[int(lag), _fmt(p)] for lag, p in results]
    _write_csv(path, "granger", ["lag", "p_value"], rows)


def write_span_json(path, validation) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "k": int(validation.k),
        "subsets": [[int(a), int(b)] for a, b in validation.subsets],
        "r_squared": [_nested(validation.r_squared[p])
                      for p in range(validation.r_squared.shape[0])],
    })


# ---------------------------------------------------------------------------
# simulation ground truth & config snapshots


def write_ground_truth_json(path, truth) -> None:
    _dump_json(path, {
        "schema_version": SCHEMA_VERSION,
        "grid": _floats(truth.grid),
        "factor_values": _nested(truth.factor_values),
        "scores": _nested(truth.scores),
        "domains": _nested(truth.domains),
        "noise_sd": float(truth.noise_sd),
        "seed": int(truth.seed),
        "lo": float(truth.lo),
        "hi": float(truth.hi),
    })


def write_config_snapshot(path, config: dict) -> None:
    """Snapshot the effective run configuration next to the outputs."""
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update({k: config[k] for k in sorted(config)})
    _dump_json(path, payload)
