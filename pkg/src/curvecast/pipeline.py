"""Fitting pipeline: splines -> undersmoothing CV -> basis -> scores.

Orchestrates the per-day GCV spline fits, the global undersmoothing ratio
chosen by leave-one-day-out cross-validation, covariance-surface estimation,
eigendecomposition (optionally VARIMAX-rotated), per-day scores, dimension
selection by AIC plus cumulative variance, and subset-span validation.

Leave-one-day-out surfaces are formed from per-day moment tensors. Exact mode
(the default and the reference for tests) sums the remaining days' tensors
via prefix/suffix partial sums (pure additions); downdate mode subtracts the
held-out day's tensor from the total, which is faster to reason about but
subject to cancellation, and is opt-in.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import fpca, smoothing
from .exceptions import BandwidthError, RankError
from .ingest import Dataset

DEFAULT_K_MAX = 4


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the fitting pipeline (defaults follow the module specs)."""

    k: int = None                 # None -> select by AIC up to k_max
    k_max: int = DEFAULT_K_MAX
    grid_n: int = fpca.DEFAULT_GRID_N
    bandwidth: object = "cv"      # covariance bandwidth, number or "cv"
    ratio: float = None           # undersmoothing ratio, None -> LOO CV
    ratio_grid: tuple = smoothing.DEFAULT_RATIO_GRID
    quad_points: int = smoothing.DEFAULT_QUAD_POINTS
    gcv_grid_size: int = smoothing.DEFAULT_GCV_GRID_SIZE
    score_mode: str = "integral"
    varimax: bool = True
    standardize: bool = True      # False only as a diagnostic negative control
    loo_mode: str = "exact"       # "exact" | "downdate"
    cov_estimator: str = "auto"   # "auto" | "local-linear" | "classical"


@dataclass(frozen=True)
class CurveFits:
    """Per-day GCV spline fits for the fit-eligible days of a dataset."""

    records: tuple
    curves: tuple
    reports: tuple

    def __len__(self):
        return len(self.records)


def fit_curves(ds: Dataset, config: FitConfig = None) -> CurveFits:
    """GCV-optimal spline fit for every fit-eligible day."""
    cfg = config or FitConfig()
    records, curves, reports = [], [], []
    for day in ds.fit_days():
        curve, report = smoothing.fit_day(day, quad_points=cfg.quad_points,
                                          gcv_grid_size=cfg.gcv_grid_size)
        records.append(day)
        curves.append(curve)
        reports.append(report)
    if not records:
        raise ValueError("dataset has no fit-eligible days")
    return CurveFits(tuple(records), tuple(curves), tuple(reports))


def _tilde_curves(fits: CurveFits, ratio: float, quad_points: int) -> tuple:
    out = []
    for rec, rep in zip(fits.records, fits.reports):
        u, y = rec.valid_pairs()
        out.append(smoothing.fit_spline(u, y, ratio * rep.b_opt,
                                        day_index=rec.day_index,
                                        quad_points=quad_points))
    return tuple(out)


def _standardized(fits: CurveFits, tilde: tuple, standardize: bool):
    """(views, records, hats) aligned after norm-based exclusions."""
    if standardize:
        views = fpca.standardize_curves(fits.curves, tilde)
    else:
        views = [fpca.StandardizedCurve(c.day_index, c, 1.0) for c in tilde]
    kept = {v.day_index for v in views}
    recs = tuple(r for r in fits.records if r.day_index in kept)
    hats = tuple(c for c in fits.curves if c.day_index in kept)
    return views, recs, hats


def _resolve_bandwidth(cfg: FitConfig, fits: CurveFits, grid: np.ndarray):
    if not isinstance(cfg.bandwidth, str):
        bw = float(cfg.bandwidth)
        if bw <= 0:
            raise ValueError("covariance bandwidth must be positive")
        return bw
    if cfg.bandwidth != "cv":
        raise ValueError(f"bandwidth must be a number or 'cv', got {cfg.bandwidth!r}")
    views, recs, _ = _standardized(fits, fits.curves, cfg.standardize)
    return fpca.select_cov_bandwidth(views, recs, grid)


def _use_classical(cfg: FitConfig, curves, grid: np.ndarray) -> bool:
    """Whether the full-domain empirical covariance applies.

    'auto' picks the classical estimator exactly when every curve's domain
    covers the grid span (the full-domain world where it is the natural,
    bias-free choice); any random-domain day forces the kernel smoother.
    """
    if cfg.cov_estimator == "local-linear":
        return False
    if cfg.cov_estimator not in ("auto", "classical"):
        raise ValueError(f"unknown cov_estimator {cfg.cov_estimator!r}")
    tol = 1e-9 * max(abs(grid[0]), abs(grid[-1]), 1.0)
    covered = all(c.domain_lo <= grid[0] + tol and c.domain_hi >= grid[-1] - tol
                  for c in curves)
    if cfg.cov_estimator == "classical" and not covered:
        raise ValueError(
            "cov_estimator='classical' requires every day's domain to cover "
            "the full grid span; use 'auto' or 'local-linear'")
    return covered


@dataclass(frozen=True)
class CvTable:
    """Leave-one-day-out CV criterion over (K, ratio) pairs."""

    k_list: tuple
    ratios: tuple
    criterion: np.ndarray       # (len(k_list), len(ratios))
    best_ratio: dict            # K -> ratio (first argmin on ascending grid)
    bandwidth: float
    failures: dict = field(default_factory=dict)  # ratio -> reason


def _loo_cv(ds: Dataset, k_list, cfg: FitConfig, fits: CurveFits = None,
            bandwidth: float = None) -> tuple[CvTable, CurveFits]:
    k_list = tuple(sorted(set(int(k) for k in k_list)))
    if k_list[0] < 1:
        raise ValueError("K must be >= 1")
    ratios = tuple(sorted(float(r) for r in cfg.ratio_grid))
    if not ratios or ratios[0] <= 0 or ratios[-1] > 1:
        raise ValueError("ratio grid must lie in (0, 1]")
    fits = fits or fit_curves(ds, cfg)
    if len(fits) < k_list[-1] + 1:
        raise ValueError(
            f"need at least K+1={k_list[-1] + 1} fit-eligible days, "
            f"have {len(fits)}")
    grid = fpca.make_grid(ds.global_lo, ds.global_hi, cfg.grid_n)
    du = grid[1] - grid[0]
    classical = _use_classical(cfg, fits.curves, grid)
    if classical:
        bw = math.nan
    else:
        bw = bandwidth if bandwidth is not None \
            else _resolve_bandwidth(cfg, fits, grid)
    if cfg.loo_mode not in ("exact", "downdate"):
        raise ValueError(f"unknown loo_mode {cfg.loo_mode!r}")
    max_k = k_list[-1]
    crit = np.zeros((len(k_list), len(ratios)))
    failures = {}
    for ri, ratio in enumerate(ratios):
        tilde = _tilde_curves(fits, ratio, cfg.quad_points)
        views, recs, _ = _standardized(fits, tilde, cfg.standardize)
        pairs = [rec.valid_pairs() for rec in recs]
        n_days = len(views)
        if classical:
            X = np.stack([np.asarray(v.evaluate(grid)) for v in views])
            per = X[:, :, None] * X[:, None, :]
        else:
            u1, u2, z, day_pos = fpca.collect_products(views, recs)
            _, per = fpca.local_linear_moments(u1, u2, z, day_pos, grid, bw,
                                               n_days=n_days, per_day=True)
        try:
            if cfg.loo_mode == "exact":
                suffix = np.flip(np.cumsum(np.flip(per, 0), 0), 0)
                prefix = np.zeros_like(per[0])
            else:
                total = per.sum(axis=0)
            for t in range(n_days):
                if cfg.loo_mode == "exact":
                    loo = prefix + suffix[t + 1] if t + 1 < n_days else prefix.copy()
                    prefix = prefix + per[t]
                else:
                    loo = total - per[t]
                if classical:
                    surf = loo / (n_days - 1)
                else:
                    surf = fpca.solve_surface(loo, grid)
                eigvals, eigvecs = scipy.linalg.eigh(surf * du)
                F = eigvecs[:, ::-1][:, :max_k] / math.sqrt(du)
                u_t, y_t = pairs[t]
                Ft = np.column_stack(
                    [np.interp(u_t, grid, F[:, j]) for j in range(max_k)])
                for ki, K in enumerate(k_list):
                    beta, *_ = np.linalg.lstsq(Ft[:, :K], y_t, rcond=None)
                    resid = y_t - Ft[:, :K] @ beta
                    crit[ki, ri] += float(resid @ resid)
        except (BandwidthError, RankError) as exc:
            crit[:, ri] = math.inf
            failures[ratio] = str(exc)
    best = {}
    for ki, K in enumerate(k_list):
        row = crit[ki]
        if not np.any(np.isfinite(row)):
            raise BandwidthError(
                "leave-one-day-out CV failed for every ratio; "
                f"first failure: {next(iter(failures.values()))}")
        best[K] = ratios[int(np.argmin(row))]
    table = CvTable(k_list, ratios, crit, best, bw, failures)
    return table, fits


def undersmoothing_cv(ds: Dataset, K: int, ratio_grid=None,
                      config: FitConfig = None) -> float:
    """Undersmoothing ratio minimizing the leave-one-day-out CV criterion."""
    cfg = config or FitConfig()
    if ratio_grid is not None:
        cfg = replace(cfg, ratio_grid=tuple(ratio_grid))
    table, _ = _loo_cv(ds, [K], cfg)
    return table.best_ratio[K]


def undersmoothing_cv_table(ds: Dataset, k_list, config: FitConfig = None,
                            fits: CurveFits = None) -> CvTable:
    """Full CV table over (K, ratio); exposes criterion values and failures."""
    cfg = config or FitConfig()
    table, _ = _loo_cv(ds, k_list, cfg, fits=fits)
    return table


# ---------------------------------------------------------------------------
# fitted model


@dataclass(frozen=True)
class FittedModel:
    """Everything the forecasting side needs from a fitted FFM."""

    config: FitConfig
    day_index: np.ndarray         # included days, ascending
    curves: tuple                 # GCV-optimal curves (included days)
    tilde_curves: tuple           # undersmoothed curves (included days)
    reports: tuple                # smoothing reports (included days)
    surface: fpca.CovarianceSurface
    basis: fpca.BasisSystem       # final basis (rotated when varimax on)
    basis_pre: fpca.BasisSystem   # pre-rotation eigenbasis
    scores: fpca.ScoreMatrix      # scores in the final basis
    ratio: float
    bandwidth: float
    cum_variance: float           # pre-rotation cumulative share at K
    sse: float                    # in-sample SSE over all valid pairs
    n_pairs: int
    selection: object = None      # SelectionReport when K was selected

    @property
    def k(self) -> int:
        return self.basis.k

    def score_panel(self, n_days: int = None) -> np.ndarray:
        """(n_days, K) score array on the contiguous day axis, NaN at gaps.

        Row i holds day_index i+1 (day indices are 1..T per ingest).
        """
        n = int(n_days) if n_days is not None else int(self.day_index.max())
        panel = np.full((n, self.k), np.nan)
        mask = self.day_index <= n
        panel[self.day_index[mask] - 1] = self.scores.scores[mask]
        return panel

    def reconstruct(self, day_index: int) -> fpca.ReconstructedCurve:
        """Fitted-curve view X-hat-f for one included day, on its domain."""
        hits = np.flatnonzero(self.day_index == day_index)
        if len(hits) == 0:
            raise KeyError(f"day {day_index} not among the fitted days")
        pos = int(hits[0])
        curve = self.curves[pos]
        return fpca.reconstruct_curve(self.basis, self.scores.scores[pos],
                                      domain=curve.domain,
                                      day_index=day_index)

    def project_day(self, day_record) -> np.ndarray:
        """Scores of an unseen day on the cached basis (refit-free update)."""
        curve, _ = smoothing.fit_day(day_record,
                                     quad_points=self.config.quad_points,
                                     gcv_grid_size=self.config.gcv_grid_size)
        sm = fpca.compute_scores(self.basis, [curve], [day_record],
                                 mode=self.config.score_mode)
        return sm.scores[0]


def _insample_sse(basis: fpca.BasisSystem, scores: np.ndarray, recs) -> tuple:
    sse = 0.0
    n = 0
    for pos, rec in enumerate(recs):
        u, y = rec.valid_pairs()
        F = basis.evaluate(u)
        resid = y - F @ scores[pos]
        sse += float(resid @ resid)
        n += len(y)
    return sse, n


def fit_ffm(ds: Dataset, config: FitConfig = None, *, fits: CurveFits = None,
            cv_table: CvTable = None) -> FittedModel:
    """Fit the functional factor model end to end.

    With ``config.k`` unset, the dimension is selected by AIC over
    1..k_max (see select_dimension) and the chosen model is returned with
    its selection report attached.
    """
    cfg = config or FitConfig()
    if cfg.k is None:
        _, report = select_dimension(ds, cfg.k_max, cfg, fits=fits)
        return report.best_model
    K = int(cfg.k)
    fits = fits or fit_curves(ds, cfg)
    grid = fpca.make_grid(ds.global_lo, ds.global_hi, cfg.grid_n)
    classical = _use_classical(cfg, fits.curves, grid)
    if cv_table is not None and K in cv_table.best_ratio:
        bw = cv_table.bandwidth
        ratio = cfg.ratio if cfg.ratio is not None else cv_table.best_ratio[K]
    else:
        bw = None
        ratio = cfg.ratio
        if ratio is None:
            table, fits = _loo_cv(ds, [K], cfg, fits=fits)
            ratio = table.best_ratio[K]
            bw = table.bandwidth
    if bw is None:
        bw = math.nan if classical else _resolve_bandwidth(cfg, fits, grid)
    ratio = float(ratio)
    if not 0 < ratio <= 1:
        raise ValueError(f"undersmoothing ratio must be in (0, 1], got {ratio}")

    tilde = _tilde_curves(fits, ratio, cfg.quad_points)
    views, recs, hats = _standardized(fits, tilde, cfg.standardize)
    if classical:
        surface = fpca.classical_covariance_surface(views, grid)
    else:
        surface = fpca.estimate_covariance_surface(
            views, recs, n=cfg.grid_n, bandwidth=bw,
            grid_lo=ds.global_lo, grid_hi=ds.global_hi)
    basis_pre = fpca.eigendecompose(surface, K)
    scores_pre = fpca.compute_scores(basis_pre, hats, recs, mode=cfg.score_mode)
    cum_var = float(np.sum(basis_pre.variance_shares))
    if cfg.varimax and K > 1:
        # rotate on standardized-curve loadings (raw scores / curve norm) so
        # no single day's price scale can swing the rotation; report shares
        # on the raw-scale scores
        if cfg.standardize:
            norms = np.where(scores_pre.curve_norms > 0,
                             scores_pre.curve_norms, 1.0)
            rot_loadings = scores_pre.scores / norms[:, None]
        else:
            rot_loadings = scores_pre.scores
        basis = fpca.varimax_rotate(basis_pre, loadings=rot_loadings,
                                    share_loadings=scores_pre.scores)
        rotated = scores_pre.scores @ basis.rotation
        scores = fpca.ScoreMatrix(scores_pre.day_index, rotated,
                                  scores_pre.curve_norms, scores_pre.mode)
    else:
        basis, scores = basis_pre, scores_pre
    sse, n_pairs = _insample_sse(basis, scores.scores, recs)
    kept = {r.day_index for r in recs}
    keep_mask = [c.day_index in kept for c in fits.curves]
    return FittedModel(
        config=replace(cfg, k=K, ratio=ratio, bandwidth=bw),
        day_index=np.array([r.day_index for r in recs], dtype=int),
        curves=tuple(c for c, m in zip(fits.curves, keep_mask) if m),
        tilde_curves=tuple(c for c, m in zip(tilde, keep_mask) if m),
        reports=tuple(r for r, m in zip(fits.reports, keep_mask) if m),
        surface=surface, basis=basis, basis_pre=basis_pre, scores=scores,
        ratio=ratio, bandwidth=float(bw), cum_variance=cum_var,
        sse=sse, n_pairs=n_pairs)


# ---------------------------------------------------------------------------
# dimension selection


@dataclass(frozen=True)
class SelectionRow:
    k: int
    ratio: float
    aic: float
    delta_aic: float
    cum_variance: float
    sse: float
    n_pairs: int


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple
    chosen_k: int
    best_model: FittedModel = None


def select_dimension(ds: Dataset, k_max: int = DEFAULT_K_MAX,
                     config: FitConfig = None, *,
                     fits: CurveFits = None) -> tuple[int, SelectionReport]:
    """Choose K by AIC(K) = N_tot log(SSE_K/N_tot) + 2 K T_days.

    Each candidate K gets its own undersmoothing ratio from the shared CV
    table, then a full fit; the report also carries the pre-rotation
    cumulative variance share per K.
    """
    cfg = config or FitConfig()
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    k_list = list(range(1, int(k_max) + 1))
    if cfg.ratio is None:
        table, fits = _loo_cv(ds, k_list, cfg, fits=fits)
    else:
        fits = fits or fit_curves(ds, cfg)
        table = None
    rows = []
    models = []
    for K in k_list:
        model = fit_ffm(ds, replace(cfg, k=K), fits=fits, cv_table=table)
        T_days = len(model.day_index)
        n_tot = model.n_pairs
        aic = n_tot * math.log(model.sse / n_tot) + 2.0 * K * T_days
        rows.append((K, model.ratio, aic, model.cum_variance,
                     model.sse, model.n_pairs))
        models.append(model)
    aics = np.array([r[2] for r in rows])
    chosen = int(np.argmin(aics))
    best_aic = float(aics[chosen])
    report_rows = tuple(
        SelectionRow(k=r[0], ratio=r[1], aic=r[2], delta_aic=r[2] - best_aic,
                     cum_variance=r[3], sse=r[4], n_pairs=r[5])
        for r in rows)
    report = SelectionReport(rows=report_rows, chosen_k=k_list[chosen])
    best_model = replace(models[chosen], selection=report)
    report = SelectionReport(rows=report_rows, chosen_k=k_list[chosen],
                             best_model=best_model)
    return k_list[chosen], report


# ---------------------------------------------------------------------------
# subset-span validation


@dataclass(frozen=True)
class SpanValidation:
    """R-squared of each subset basis function on every other subset's span."""

    subsets: tuple                # ((start, stop), ...) day_index ranges
    r_squared: np.ndarray         # (S, S, K): [p, q, k] = f_k^P on span{F^Q}
    k: int


def _normalize_subset(s) -> tuple[int, int]:
    if isinstance(s, range):
        if s.step != 1:
            raise ValueError("subset ranges must have step 1")
        return (s.start, s.stop)
    start, stop = s
    return (int(start), int(stop))


def subset_dataset(ds: Dataset, start: int, stop: int) -> Dataset:
    """Restriction of a dataset to day_index in [start, stop)."""
    days = tuple(d for d in ds.days if start <= d.day_index < stop)
    if not days:
        raise ValueError(f"subset [{start}, {stop}) contains no days")
    with_pairs = [d for d in days if d.n_valid >= 1]
    if not with_pairs:
        raise ValueError(f"subset [{start}, {stop}) has no observed pairs")
    return Dataset(days=days,
                   global_lo=float(min(d.domain_lo for d in with_pairs)),
                   global_hi=float(max(d.domain_hi for d in with_pairs)),
                   holiday_dates=ds.holiday_dates,
                   outlier_threshold=ds.outlier_threshold,
                   min_valid_pairs=ds.min_valid_pairs)


def validate_subset_span(ds: Dataset, subsets, K: int = None,
                         config: FitConfig = None,
                         eval_points: int = 201) -> SpanValidation:
    """Fit a basis per subset; regress each basis function across subsets.

    r_squared[p, q, k] is the R-squared of subset p's k-th basis function
    regressed on the span of subset q's basis, over an equidistant grid on
    the intersection of the two basis spans.
    """
    cfg = config or FitConfig()
    if K is None:
        K = cfg.k if cfg.k is not None else 2
    subs = tuple(_normalize_subset(s) for s in subsets)
    if len(subs) < 1:
        raise ValueError("need at least one subset")
    models = [fit_ffm(subset_dataset(ds, a, b), replace(cfg, k=int(K)))
              for a, b in subs]
    S = len(subs)
    r2 = np.full((S, S, int(K)), np.nan)
    for p in range(S):
        for q in range(S):
            lo = max(models[p].basis.span[0], models[q].basis.span[0])
            hi = min(models[p].basis.span[1], models[q].basis.span[1])
            if hi <= lo:
                raise ValueError(
                    f"subsets {subs[p]} and {subs[q]} have disjoint spans")
            g = np.linspace(lo, hi, eval_points)
            Fp = models[p].basis.evaluate(g)
            Fq = models[q].basis.evaluate(g)
            coef, *_ = np.linalg.lstsq(Fq, Fp, rcond=None)
            resid = Fp - Fq @ coef
            denom = np.sum(Fp * Fp, axis=0)
            r2[p, q] = 1.0 - np.sum(resid * resid, axis=0) / denom
    return SpanValidation(subsets=subs, r_squared=r2, k=int(K))


__all__ = [
    "FitConfig", "CurveFits", "CvTable", "FittedModel", "SelectionRow",
    "SelectionReport", "SpanValidation",
    "fit_curves", "undersmoothing_cv", "undersmoothing_cv_table", "fit_ffm",
    "select_dimension", "validate_subset_span", "subset_dataset",
]
