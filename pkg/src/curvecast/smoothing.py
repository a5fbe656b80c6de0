"""Natural cubic smoothing splines for daily price-demand curves.

Each day's curve X_t is the minimizer of

    sum_h w_h (y_th - X(u_th))^2  +  b * int (X'')^2,

over twice-differentiable functions, which is a natural cubic spline with
knots at the distinct observed demands (ties merged to their mean price with
weight equal to the tie count). The solver uses the Reinsch / Green-Silverman
formulation: with Q (n x (n-2)) the second-difference map and R ((n-2) x
(n-2)) the tridiagonal roughness Gram matrix, the interior second derivatives
gamma solve

    (R + b * Q' W^-1 Q) gamma = Q' y,      g = y - b * W^-1 Q gamma,

which is numerically stable for b anywhere in [0, inf): b = 0 interpolates,
b -> inf converges to the weighted least-squares line (the penalty null
space). The per-day smoothing parameter is chosen on a grid by GCV,

    GCV(b) = n * SSE(b) / (n - trace(H(b)))^2,

with n the number of raw pairs, SSE the raw-pair residual sum of squares and
H the smoother ("hat") matrix on raw pairs (its trace equals the trace of the
merged-knot smoother).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DomainError, RankError

DEFAULT_QUAD_POINTS = 201
DEFAULT_GCV_GRID_SIZE = 50
DEFAULT_RATIO_GRID = tuple(np.round(np.arange(0.1, 1.01, 0.1), 10))


def _spline_system(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Build Q (n x (n-2)) and tridiagonal R ((n-2) x (n-2)) for knots x.

    Q'g gives the divided second differences of values g; gamma'R gamma is
    the roughness integral of the natural spline with interior second
    derivatives gamma (Green & Silverman 1994, ch. 2).
    """
    n = len(x)
    h = np.diff(x)
    Q = np.zeros((n, n - 2))
    idx = np.arange(1, n - 1)
    Q[idx - 1, idx - 1] = 1.0 / h[:-1]
    Q[idx, idx - 1] = -1.0 / h[:-1] - 1.0 / h[1:]
    Q[idx + 1, idx - 1] = 1.0 / h[1:]
    R = np.zeros((n - 2, n - 2))
    R[np.arange(n - 2), np.arange(n - 2)] = (h[:-1] + h[1:]) / 3.0
    off = h[1:-1] / 6.0
    R[np.arange(n - 3), np.arange(1, n - 2)] = off
    R[np.arange(1, n - 2), np.arange(n - 3)] = off
    return Q, R


def _merge_ties(u: np.ndarray, y: np.ndarray):
    """Merge tied demands to (demand, mean price, weight).

    Demands within 1e-12 of the demand range are treated as one knot (exact
    float equality would leave 1-ulp gaps that blow up the 1/h spline
    system). Returns (knots, ybar, weights, inverse_index, within_tie_ss).
    """
    order = np.argsort(u, kind="stable")
    us = u[order]
    tol = 1e-12 * max(us[-1] - us[0], abs(us[-1]), 1e-300)
    group_of_sorted = np.concatenate([[0], np.cumsum(np.diff(us) > tol)])
    inverse = np.empty(len(u), dtype=np.int64)
    inverse[order] = group_of_sorted
    w = np.bincount(inverse).astype(float)
    knots = np.bincount(inverse, weights=u) / w
    ybar = np.bincount(inverse, weights=y) / w
    within_ss = float(np.sum((y - ybar[inverse]) ** 2))
    return knots, ybar, w, inverse, within_ss


@dataclass(frozen=True)
class PriceDemandCurve:
    """A fitted natural cubic spline with its domain and cached L2 norm.

    ``coefficients`` stacks the knot values followed by the knot second
    derivatives (the natural-spline representation used for evaluation).
    """

    day_index: int
    knots: np.ndarray
    values: np.ndarray
    second_derivs: np.ndarray
    smoothing_param: float
    domain_lo: float
    domain_hi: float
    l2_norm: float = field(default=math.nan)

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([self.values, self.second_derivs])

    @property
    def domain(self) -> tuple[float, float]:
        return (self.domain_lo, self.domain_hi)

    def evaluate(self, u) -> np.ndarray:
        """Natural-cubic-spline values at u (scalar or array), domain-checked."""
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        scale = max(abs(self.domain_lo), abs(self.domain_hi), 1.0)
        tol = 1e-9 * scale
        if np.any(u_arr < self.domain_lo - tol) or np.any(u_arr > self.domain_hi + tol):
            bad = u_arr[(u_arr < self.domain_lo - tol) | (u_arr > self.domain_hi + tol)][0]
            raise DomainError(
                f"evaluation at u={bad} outside curve domain "
                f"[{self.domain_lo}, {self.domain_hi}] (day {self.day_index})")
        u_arr = np.clip(u_arr, self.knots[0], self.knots[-1])
        x, g, m = self.knots, self.values, self.second_derivs
        i = np.clip(np.searchsorted(x, u_arr, side="right") - 1, 0, len(x) - 2)
        h = x[i + 1] - x[i]
        a = (x[i + 1] - u_arr) / h
        b = (u_arr - x[i]) / h
        vals = (a * g[i] + b * g[i + 1]
                + ((a ** 3 - a) * m[i] + (b ** 3 - b) * m[i + 1]) * h ** 2 / 6.0)
        return vals if np.ndim(u) else float(vals[0])


def curve_l2_norm(curve: PriceDemandCurve, quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """L2 norm of the curve over its domain by composite trapezoid."""
    grid = np.linspace(curve.domain_lo, curve.domain_hi, quad_points)
    vals = curve.evaluate(grid)
    return float(np.sqrt(np.trapezoid(vals ** 2, grid)))


def _equilibrated_solve(M, rhs):
    """Solve SPD-in-exact-arithmetic M x = rhs with Jacobi scaling.

    Extremely uneven knot gaps (near-duplicate demands) can make M
    numerically indefinite; diagonal equilibration plus symmetric/lstsq
    fallbacks keeps the solve usable over the whole smoothing grid.
    """
    d = 1.0 / np.sqrt(np.diag(M))
    Ms = M * d[:, None] * d[None, :]
    rs = rhs * d
    try:
        xs = scipy.linalg.solve(Ms, rs, assume_a="pos")
    except np.linalg.LinAlgError:
        try:
            xs = scipy.linalg.solve(Ms, rs, assume_a="sym")
        except np.linalg.LinAlgError:
            xs, *_ = np.linalg.lstsq(Ms, rs, rcond=None)
    return xs * d


def _solve_spline(knots, ybar, w, b):
    """Return (g, gamma) minimizing the weighted penalized criterion."""
    Q, R = _spline_system(knots)
    winv = 1.0 / w
    if b == 0.0:
        gamma = _equilibrated_solve(R, Q.T @ ybar)
        return ybar.copy(), gamma
    A = Q.T @ (winv[:, None] * Q)
    M = R + b * A
    gamma = _equilibrated_solve(M, Q.T @ ybar)
    g = ybar - b * winv * (Q @ gamma)
    return g, gamma


def fit_spline(
    demands,
    prices,
    b: float,
    day_index: int = 0,
    quad_points: int = DEFAULT_QUAD_POINTS,
) -> PriceDemandCurve:
    """Fit the natural cubic smoothing spline at smoothing parameter b.

    Fitted values at the inputs are recoverable exactly via
    ``curve.evaluate(demands)`` (knots sit at the distinct demands).
    """
    u = np.asarray(demands, dtype=float)
    y = np.asarray(prices, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("demands and prices must be equal-length 1-d sequences")
    if b < 0:
        raise ValueError(f"smoothing parameter must be >= 0, got {b}")
    if not (np.isfinite(u).all() and np.isfinite(y).all()):
        raise ValueError("demands and prices must be finite")
    knots, ybar, w, _, _ = _merge_ties(u, y)
    if len(knots) < 4:
        raise RankError(
            f"need >= 4 distinct demand values to fit a spline, got {len(knots)} "
            f"(day {day_index})")
    g, gamma = _solve_spline(knots, ybar, w, float(b))
    m = np.zeros(len(knots))
    m[1:-1] = gamma
    curve = PriceDemandCurve(day_index, knots, g, m, float(b),
                             float(knots[0]), float(knots[-1]))
    norm = curve_l2_norm(curve, quad_points)
    object.__setattr__(curve, "l2_norm", norm)
    return curve


def evaluate_curve(curve: PriceDemandCurve, u) -> np.ndarray:
    """Module-level alias for curve evaluation (domain-checked)."""
    return curve.evaluate(u)


@dataclass(frozen=True)
class SmoothingReport:
    """GCV selection result for one day."""

    day_index: int
    b_opt: float
    gcv_score: float
    residual_sse: float
    edof: float  # trace of the hat matrix at b_opt
    b_grid: np.ndarray = field(repr=False, default=None)
    gcv_values: np.ndarray = field(repr=False, default=None)


def default_b_grid(demands, size: int = DEFAULT_GCV_GRID_SIZE) -> np.ndarray:
    """Scale-aware log grid spanning [1e-4, 1e4] x range(u)^3 / N."""
    u = np.asarray(demands, dtype=float)
    scale = (u.max() - u.min()) ** 3 / len(u)
    return np.logspace(-4.0, 4.0, size) * scale


def _gcv_stats(knots, ybar, w, within_ss, b):
    """Return (sse_pairs, trace_hat_pairs) at smoothing parameter b."""
    if b == 0.0:
        # Interpolation of the merged means: raw-pair SSE is the within-tie
        # scatter and the raw-pair hat trace equals the knot count.
        return within_ss, float(len(knots))
    Q, R = _spline_system(knots)
    winv = 1.0 / w
    A = Q.T @ (winv[:, None] * Q)
    M = R + b * A
    d = 1.0 / np.sqrt(np.diag(M))
    Ms = M * d[:, None] * d[None, :]
    try:
        cho = scipy.linalg.cho_factor(Ms)
    except np.linalg.LinAlgError:
        # numerically non-PD at this b (pathological knot spacing): skip it
        return math.inf, math.nan
    gamma = d * scipy.linalg.cho_solve(cho, d * (Q.T @ ybar))
    g = ybar - b * winv * (Q @ gamma)
    sse = float(np.sum(w * (ybar - g) ** 2)) + within_ss
    # trace(H) = n_knots - b*trace(M^-1 A); with D = diag(d) and Ms = D M D,
    # trace(M^-1 A) = trace(Ms^-1 D A D) by cyclicity.
    As = A * d[:, None] * d[None, :]
    trace = len(knots) - b * float(np.trace(scipy.linalg.cho_solve(cho, As)))
    n_knots = len(knots)
    if not np.isfinite(trace) or trace < 2.0 - 1e-6 or trace > n_knots + 1e-6:
        return math.inf, math.nan
    return sse, trace


def gcv_select(
    demands,
    prices,
    b_grid=None,
    day_index: int = 0,
    gcv_grid_size: int = DEFAULT_GCV_GRID_SIZE,
) -> SmoothingReport:
    """Pick the GCV-minimizing b from the grid (ties toward smaller b)."""
    u = np.asarray(demands, dtype=float)
    y = np.asarray(prices, dtype=float)
    if b_grid is None:
        b_grid = default_b_grid(u, gcv_grid_size)
    b_grid = np.asarray(sorted(float(b) for b in np.atleast_1d(b_grid)))
    if len(b_grid) == 0:
        raise ValueError("b_grid must be nonempty")
    if np.any(b_grid < 0):
        raise ValueError("all grid values must be >= 0")
    knots, ybar, w, inverse, within_ss = _merge_ties(u, y)
    if len(knots) < 4:
        raise RankError(
            f"need >= 4 distinct demand values, got {len(knots)} (day {day_index})")
    n = float(len(y))
    gcv = np.full(len(b_grid), np.inf)
    sses = np.full(len(b_grid), np.nan)
    traces = np.full(len(b_grid), np.nan)
    for j, b in enumerate(b_grid):
        sse, trace = _gcv_stats(knots, ybar, w, within_ss, b)
        sses[j], traces[j] = sse, trace
        denom = n - trace
        if denom > 1e-8 and np.isfinite(sse):
            gcv[j] = n * sse / denom ** 2
    if not np.any(np.isfinite(gcv)):
        raise RankError(f"all GCV values non-finite on the grid (day {day_index})")
    j_opt = int(np.argmin(gcv))  # first minimum = smallest b on the sorted grid
    return SmoothingReport(day_index, float(b_grid[j_opt]), float(gcv[j_opt]),
                           float(sses[j_opt]), float(traces[j_opt]),
                           b_grid=b_grid, gcv_values=gcv)


def fit_day(
    day,
    b_grid=None,
    quad_points: int = DEFAULT_QUAD_POINTS,
    gcv_grid_size: int = DEFAULT_GCV_GRID_SIZE,
) -> tuple[PriceDemandCurve, SmoothingReport]:
    """GCV-select b for one DayRecord and fit its curve."""
    u, y = day.valid_pairs()
    report = gcv_select(u, y, b_grid, day_index=day.day_index,
                        gcv_grid_size=gcv_grid_size)
    curve = fit_spline(u, y, report.b_opt, day_index=day.day_index,
                       quad_points=quad_points)
    return curve, report


def undersmoothing_cv(ds, K: int, ratio_grid=None, config=None) -> float:
    """Global undersmoothing ratio by leave-one-day-out CV (Eq. CVEq).

    Thin delegate to the pipeline module, which owns the cross-module fold
    machinery (basis refits per held-out day).
    """
    from .pipeline import undersmoothing_cv as _impl
    return _impl(ds, K, ratio_grid=ratio_grid, config=config)


__all__ = [
    "PriceDemandCurve", "SmoothingReport",
    "fit_spline", "evaluate_curve", "curve_l2_norm", "gcv_select",
    "fit_day", "default_b_grid", "undersmoothing_cv",
    "DEFAULT_QUAD_POINTS", "DEFAULT_GCV_GRID_SIZE", "DEFAULT_RATIO_GRID",
]
