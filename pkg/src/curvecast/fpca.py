"""Functional PCA on random domains.

Pipeline pieces: standardize daily curves, smooth the empirical covariance
surface of the standardized curves by local-linear kernel regression on raw
cross-products (off-diagonal pairs only), eigendecompose the discretized
operator on an equidistant grid over [A, B], optionally VARIMAX-rotate the
basis, and compute per-day scores from the random-domain Gram system

    G beta = c,   G_kl = int_{a_t}^{b_t} f_k f_l,   c_k = int_{a_t}^{b_t} f_k X_t.

Grid conventions: inner products on the grid use uniform weights Delta-u, so
eigenvector orthonormality converts to quadrature orthonormality exactly and
the Gram system on a sub-domain coincides with the normal equations of dense
least squares on the same grid nodes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .exceptions import BandwidthError, DomainError, RankError

DEFAULT_GRID_N = 50
GRAM_COND_LIMIT = 1e10
KERNEL_MASS_FLOOR = 1e-8

# moment layout for the local-linear normal equations at one grid cell
# [S00, S10, S01, S20, S11, S02, T0, T1, T2]
_N_MOMENTS = 9


def make_grid(lo: float, hi: float, n: int = DEFAULT_GRID_N) -> np.ndarray:
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"bad grid span [{lo}, {hi}]")
    if n < 10:
        raise ValueError(f"grid must have n >= 10 points, got {n}")
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StandardizedCurve:
    """View of an undersmoothed curve scaled by the hat curve's L2 norm."""

    day_index: int
    tilde: object  # PriceDemandCurve
    hat_norm: float

    @property
    def domain_lo(self) -> float:
        return self.tilde.domain_lo

    @property
    def domain_hi(self) -> float:
        return self.tilde.domain_hi

    @property
    def domain(self) -> tuple[float, float]:
        return self.tilde.domain

    def evaluate(self, u):
        return np.asarray(self.tilde.evaluate(u)) / self.hat_norm


def standardize_curves(curves, tilde_curves) -> list[StandardizedCurve]:
    """Scale each undersmoothed curve by its GCV-optimal fit's L2 norm.

    Days whose hat-curve norm is below 1e-12 are excluded with a warning.
    """
    if len(curves) != len(tilde_curves):
        raise ValueError("curves and tilde_curves must align")
    views = []
    for hat, tilde in zip(curves, tilde_curves):
        if hat.day_index != tilde.day_index:
            raise ValueError(
                f"day_index mismatch: {hat.day_index} vs {tilde.day_index}")
        if not hat.l2_norm > 1e-12:
            warnings.warn(f"day {hat.day_index} excluded from standardization: "
                          f"hat-curve norm {hat.l2_norm} below 1e-12")
            continue
        views.append(StandardizedCurve(hat.day_index, tilde, hat.l2_norm))
    return views


# ---------------------------------------------------------------------------
# covariance surface


@dataclass(frozen=True)
class CovarianceSurface:
    grid: np.ndarray
    values: np.ndarray  # (n, n), symmetric
    bandwidth: float
    n_products: int = 0


def _observed_demands(rec) -> np.ndarray:
    """Demand locations from a DayRecord (valid pairs) or a raw array."""
    if hasattr(rec, "valid_pairs"):
        return rec.valid_pairs()[0]
    return np.asarray(rec, dtype=float)


def collect_products(std_curves, day_records) -> tuple[np.ndarray, ...]:
    """Flatten all within-day off-diagonal cross-products.

    Returns (u1, u2, z, day_pos) where day_pos indexes into std_curves and
    z = X*_t(u_ti) * X*_t(u_tj) over ordered pairs i != j.
    """
    if len(std_curves) != len(day_records):
        raise ValueError("std_curves and day_records must align")
    u1_parts, u2_parts, z_parts, d_parts = [], [], [], []
    for pos, (view, rec) in enumerate(zip(std_curves, day_records)):
        u_obs = _observed_demands(rec)
        m = len(u_obs)
        if m < 2:
            continue
        x = np.asarray(view.evaluate(u_obs), dtype=float)
        off = ~np.eye(m, dtype=bool)
        u1_parts.append(np.broadcast_to(u_obs[:, None], (m, m))[off])
        u2_parts.append(np.broadcast_to(u_obs[None, :], (m, m))[off])
        z_parts.append(np.outer(x, x)[off])
        d_parts.append(np.full(m * (m - 1), pos, dtype=np.int64))
    if not u1_parts:
        raise ValueError("no cross-products: need days with >= 2 valid pairs")
    return (np.concatenate(u1_parts), np.concatenate(u2_parts),
            np.concatenate(z_parts), np.concatenate(d_parts))


def _epanechnikov(t: np.ndarray) -> np.ndarray:
    out = 1.0 - t * t
    np.maximum(out, 0.0, out=out)
    out *= 0.75
    return out


def local_linear_moments(u1, u2, z, day_pos, grid, bandwidth,
                         n_days=None, per_day=False):
    """Accumulate the 9 local-linear moment fields over the grid.

    Returns (total, per) with total of shape (n, n, 9) and per of shape
    (n_days, n, n, 9) when requested (the exact per-day decomposition that
    leave-one-day-out estimation sums or downdates over).
    """
    grid = np.asarray(grid, dtype=float)
    n = len(grid)
    bw = float(bandwidth)
    order = np.argsort(u1, kind="stable")
    u1s, u2s, zs, ds = u1[order], u2[order], z[order], day_pos[order]
    total = np.zeros((n, n, _N_MOMENTS))
    per = np.zeros((n_days, n, n, _N_MOMENTS)) if per_day else None
    for a, ga in enumerate(grid):
        lo = np.searchsorted(u1s, ga - bw, side="left")
        hi = np.searchsorted(u1s, ga + bw, side="right")
        if lo >= hi:
            continue
        u1r, u2r, zr, dr = u1s[lo:hi], u2s[lo:hi], zs[lo:hi], ds[lo:hi]
        sub = np.argsort(u2r, kind="stable")
        u1r, u2r, zr, dr = u1r[sub], u2r[sub], zr[sub], dr[sub]
        d1 = ga - u1r
        k1 = _epanechnikov(d1 / bw)
        for b, gb in enumerate(grid):
            blo = np.searchsorted(u2r, gb - bw, side="left")
            bhi = np.searchsorted(u2r, gb + bw, side="right")
            if blo >= bhi:
                continue
            d1c = d1[blo:bhi]
            d2c = gb - u2r[blo:bhi]
            w = k1[blo:bhi] * _epanechnikov(d2c / bw)
            zc = zr[blo:bhi]
            wd1 = w * d1c
            wd2 = w * d2c
            wz = w * zc
            rows = np.stack([w, wd1, wd2, wd1 * d1c, wd1 * d2c, wd2 * d2c,
                             wz, wz * d1c, wz * d2c])
            total[a, b] = rows.sum(axis=1)
            if per_day:
                dc = dr[blo:bhi]
                for m_idx in range(_N_MOMENTS):
                    per[:, a, b, m_idx] += np.bincount(
                        dc, weights=rows[m_idx], minlength=n_days)
    return total, per


def solve_surface(moments: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Solve the batched 3x3 local-linear systems; return symmetrized beta0."""
    n = len(grid)
    mass = moments[..., 0]
    if np.any(mass < KERNEL_MASS_FLOOR):
        a, b = np.argwhere(mass < KERNEL_MASS_FLOOR)[0]
        raise BandwidthError(
            f"no effective kernel mass at grid point "
            f"(u={grid[a]:.6g}, v={grid[b]:.6g}); increase the bandwidth")
    M = np.empty((n, n, 3, 3))
    M[..., 0, 0] = moments[..., 0]
    M[..., 0, 1] = M[..., 1, 0] = moments[..., 1]
    M[..., 0, 2] = M[..., 2, 0] = moments[..., 2]
    M[..., 1, 1] = moments[..., 3]
    M[..., 1, 2] = M[..., 2, 1] = moments[..., 4]
    M[..., 2, 2] = moments[..., 5]
    rhs = moments[..., 6:9]
    try:
        beta = np.linalg.solve(M, rhs[..., None])[..., 0]
        surface = beta[..., 0]
    except np.linalg.LinAlgError:
        surface = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                sol, *_ = np.linalg.lstsq(M[a, b], rhs[a, b], rcond=None)
                surface[a, b] = sol[0]
    bad = ~np.isfinite(surface)
    if bad.any():
        for a, b in np.argwhere(bad):
            sol, *_ = np.linalg.lstsq(M[a, b], rhs[a, b], rcond=None)
            surface[a, b] = sol[0]
    return 0.5 * (surface + surface.T)


def classical_covariance_surface(std_curves, grid) -> CovarianceSurface:
    """Empirical covariance operator at grid nodes (full-domain estimator).

    gamma(u, v) = mean_t X*_t(u) X*_t(v), requiring every curve's domain to
    cover the grid span; this is the full-curve covariance the kernel-smoothed
    estimator generalizes to random domains, and is exact (up to the curve
    estimates themselves) when all domains are full.
    """
    grid = np.asarray(grid, dtype=float)
    tol = 1e-9 * max(abs(grid[0]), abs(grid[-1]), 1.0)
    values = np.zeros((len(grid), len(grid)))
    for view in std_curves:
        if view.domain_lo > grid[0] + tol or view.domain_hi < grid[-1] - tol:
            raise DomainError(
                f"day {view.day_index}: domain [{view.domain_lo}, "
                f"{view.domain_hi}] does not cover the grid span "
                f"[{grid[0]}, {grid[-1]}] required by the classical estimator")
        x = np.asarray(view.evaluate(grid), dtype=float)
        values += np.outer(x, x)
    values /= len(std_curves)
    return CovarianceSurface(grid, values, math.nan, n_products=len(std_curves))


def default_bandwidth_grid(span: float, size: int = 10) -> np.ndarray:
    return np.logspace(math.log10(0.02), math.log10(0.5), size) * span


def select_cov_bandwidth(std_curves, day_records, grid, candidates=None,
                         cv_points_per_day: int = 6) -> float:
    """Leave-one-curve-out CV for the covariance bandwidth.

    For each candidate, each day's held-out cross-products (a deterministic
    strided subsample) are predicted by bilinear interpolation of the surface
    estimated from all other days (moment downdating makes the leave-out
    surface exact); the bandwidth minimizing the summed squared prediction
    error wins. Candidates that leave any grid cell unsupported score inf.
    """
    grid = np.asarray(grid, dtype=float)
    span = grid[-1] - grid[0]
    if candidates is None:
        candidates = default_bandwidth_grid(span)
    u1, u2, z, day_pos = collect_products(std_curves, day_records)
    n_days = int(day_pos.max()) + 1
    errors = []
    for bw in candidates:
        try:
            total, per = local_linear_moments(u1, u2, z, day_pos, grid, bw,
                                              n_days=n_days, per_day=True)
            err = 0.0
            for t in range(n_days):
                sel = np.flatnonzero(day_pos == t)
                if len(sel) == 0:
                    continue
                stride = max(1, len(sel) // cv_points_per_day)
                sel = sel[::stride][:cv_points_per_day]
                surf = solve_surface(total - per[t], grid)
                pred = _bilinear(grid, surf, u1[sel], u2[sel])
                err += float(np.sum((z[sel] - pred) ** 2))
            errors.append(err)
        except BandwidthError:
            errors.append(math.inf)
    errors = np.asarray(errors)
    if not np.any(np.isfinite(errors)):
        raise BandwidthError(
            "no candidate bandwidth supports the full grid; supply a larger one")
    return float(np.asarray(candidates)[int(np.argmin(errors))])


def _bilinear(grid, surface, u, v):
    """Bilinear interpolation of a (n, n) field at points (u, v)."""
    n = len(grid)
    du = grid[1] - grid[0]
    fu = np.clip((u - grid[0]) / du, 0, n - 1 - 1e-12)
    fv = np.clip((v - grid[0]) / du, 0, n - 1 - 1e-12)
    i = fu.astype(int)
    j = fv.astype(int)
    su = fu - i
    sv = fv - j
    return ((1 - su) * (1 - sv) * surface[i, j]
            + su * (1 - sv) * surface[i + 1, j]
            + (1 - su) * sv * surface[i, j + 1]
            + su * sv * surface[i + 1, j + 1])


def estimate_covariance_surface(
    std_curves,
    day_records,
    n: int = DEFAULT_GRID_N,
    bandwidth="cv",
    grid_lo: float = None,
    grid_hi: float = None,
    kernel: str = "epanechnikov",
) -> CovarianceSurface:
    """Local-linear smoothed covariance surface of the standardized curves.

    ``day_records`` (DayRecord objects or raw demand arrays) holds each
    day's observed demand locations, aligned with ``std_curves``. The grid
    spans [grid_lo, grid_hi] (defaults to the envelope of the curve domains).
    """
    if kernel != "epanechnikov":
        raise ValueError(f"unsupported kernel {kernel!r}")
    if grid_lo is None:
        grid_lo = min(c.domain_lo for c in std_curves)
    if grid_hi is None:
        grid_hi = max(c.domain_hi for c in std_curves)
    grid = make_grid(grid_lo, grid_hi, n)
    if isinstance(bandwidth, str):
        if bandwidth != "cv":
            raise ValueError(f"bandwidth must be a number or 'cv', got {bandwidth!r}")
        bw = select_cov_bandwidth(std_curves, day_records, grid)
    else:
        bw = float(bandwidth)
        if bw <= 0:
            raise ValueError("bandwidth must be positive")
    u1, u2, z, day_pos = collect_products(std_curves, day_records)
    total, _ = local_linear_moments(u1, u2, z, day_pos, grid, bw)
    values = solve_surface(total, grid)
    return CovarianceSurface(grid, values, bw, n_products=len(z))


# ---------------------------------------------------------------------------
# eigendecomposition and rotation


@dataclass(frozen=True)
class BasisSystem:
    """K orthonormal basis functions sampled on the grid."""

    grid: np.ndarray
    functions: np.ndarray  # (n, K)
    eigenvalues: np.ndarray  # (K,), descending, pre-rotation
    variance_shares: np.ndarray  # (K,)
    rotation: np.ndarray  # (K, K), identity if unrotated
    trace_total: float = math.nan  # trace of the discretized operator

    @property
    def k(self) -> int:
        return self.functions.shape[1]

    @property
    def delta_u(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def span(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def evaluate(self, u) -> np.ndarray:
        """Basis values at u by linear interpolation; (len(u), K)."""
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = self.span
        tol = 1e-9 * max(abs(lo), abs(hi), 1.0)
        if np.any(u_arr < lo - tol) or np.any(u_arr > hi + tol):
            bad = u_arr[(u_arr < lo - tol) | (u_arr > hi + tol)][0]
            raise DomainError(f"basis evaluation at u={bad} outside [{lo}, {hi}]")
        u_arr = np.clip(u_arr, lo, hi)
        return np.column_stack(
            [np.interp(u_arr, self.grid, self.functions[:, k_])
             for k_ in range(self.k)])


def _fix_signs(functions: np.ndarray, du: float) -> np.ndarray:
    """Return per-column signs making the quadrature integral positive."""
    integrals = functions.sum(axis=0) * du
    signs = np.where(integrals > 0, 1.0, -1.0)
    near_zero = np.abs(integrals) < 1e-8
    if near_zero.any():
        for k_ in np.flatnonzero(near_zero):
            col = functions[:, k_]
            signs[k_] = 1.0 if col[int(np.argmax(np.abs(col)))] > 0 else -1.0
    return signs


def eigendecompose(surface: CovarianceSurface, K: int) -> BasisSystem:
    """Top-K eigenpairs of the discretized covariance operator."""
    grid = surface.grid
    n = len(grid)
    if not 1 <= K <= n:
        raise ValueError(f"K must be in 1..{n}, got {K}")
    du = float(grid[1] - grid[0])
    M = surface.values * du
    eigvals, eigvecs = scipy.linalg.eigh(M)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    lam1 = eigvals[0]
    if lam1 <= 0:
        raise RankError("covariance surface has no positive eigenvalue")
    usable = int(np.sum(eigvals > 1e-12 * lam1))
    if K > usable:
        raise RankError(
            f"requested K={K} exceeds usable rank {usable} "
            f"(eigenvalue {K} below 1e-12 of the largest)")
    lam = eigvals[:K].copy()
    funcs = eigvecs[:, :K] / math.sqrt(du)
    funcs = funcs * _fix_signs(funcs, du)
    trace = float(np.trace(M))
    shares = lam / trace
    return BasisSystem(grid, funcs, lam, shares, np.eye(K), trace_total=trace)


def _varimax_rotation(loadings: np.ndarray, tol: float = 1e-10,
                      max_sweeps: int = 1000) -> np.ndarray:
    """Normal (non-Kaiser-normalized) varimax by pairwise Jacobi sweeps."""
    L = np.array(loadings, dtype=float)
    m, K = L.shape
    R = np.eye(K)
    if K < 2:
        return R

    def criterion(A):
        s = A * A
        return float(np.sum(s * s) / m - np.sum((s.sum(axis=0) / m) ** 2))

    last = criterion(L)
    for _ in range(max_sweeps):
        for i in range(K - 1):
            for j in range(i + 1, K):
                x, y = L[:, i], L[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                usum, vsum = u.sum(), v.sum()
                numer = 2.0 * (u @ v) - 2.0 * usum * vsum / m
                denom = (u @ u - v @ v) - (usum ** 2 - vsum ** 2) / m
                phi = 0.25 * math.atan2(numer, denom)
                if abs(phi) < 1e-15:
                    continue
                c, s = math.cos(phi), math.sin(phi)
                rot = np.array([[c, -s], [s, c]])
                L[:, [i, j]] = L[:, [i, j]] @ rot
                R[:, [i, j]] = R[:, [i, j]] @ rot
        now = criterion(L)
        if abs(now - last) < tol:
            break
        last = now
    return R


def varimax_rotate(basis: BasisSystem, loadings: np.ndarray = None,
                   share_loadings: np.ndarray = None) -> BasisSystem:
    """VARIMAX-rotate the basis (span- and orthonormality-preserving).

    ``loadings`` defaults to the grid-sampled functions; the fit pipeline
    passes the standardized-curve score matrix instead, rotating for
    simple structure in the scores while staying invariant to any single
    curve's scale. Rotated variance shares are score-variance (or
    eigen-variance) fractions normalized across the retained factors,
    computed from ``share_loadings`` (the norm-scaled scores) when given;
    columns are reordered by descending share and sign-fixed.
    """
    if basis.k == 1:
        return basis
    if loadings is None:
        loadings = basis.functions
        use_scores = False
    else:
        loadings = np.asarray(loadings, dtype=float)
        if loadings.shape[1] != basis.k:
            raise ValueError("loadings second dimension must equal K")
        use_scores = True
    R = _varimax_rotation(loadings)
    if use_scores:
        base = loadings if share_loadings is None else np.asarray(
            share_loadings, dtype=float)
        rotated = base @ R
        var = rotated.var(axis=0)
    else:
        var = np.diag(R.T @ np.diag(basis.eigenvalues) @ R)
    shares = var / var.sum()
    order = np.argsort(-shares, kind="stable")
    R = R[:, order]
    shares = shares[order]
    funcs = basis.functions @ R
    signs = _fix_signs(funcs, basis.delta_u)
    funcs = funcs * signs
    R = R * signs
    return BasisSystem(basis.grid, funcs, basis.eigenvalues, shares,
                       basis.rotation @ R, trace_total=basis.trace_total)


# ---------------------------------------------------------------------------
# scores and reconstruction


@dataclass(frozen=True)
class ScoreMatrix:
    day_index: np.ndarray  # (T,)
    scores: np.ndarray  # (T, K)
    curve_norms: np.ndarray  # (T,)
    mode: str = "integral"

    @property
    def k(self) -> int:
        return self.scores.shape[1]


def _domain_nodes(basis: BasisSystem, lo: float, hi: float) -> np.ndarray:
    grid = basis.grid
    tol = 1e-9 * max(abs(grid[0]), abs(grid[-1]), 1.0)
    mask = (grid >= lo - tol) & (grid <= hi + tol)
    return np.flatnonzero(mask)


def _score_one(basis: BasisSystem, curve, mode: str, day_record=None) -> np.ndarray:
    if mode == "integral":
        nodes = _domain_nodes(basis, curve.domain_lo, curve.domain_hi)
        if len(nodes) < basis.k:
            raise RankError(
                f"day {curve.day_index}: domain [{curve.domain_lo}, "
                f"{curve.domain_hi}] covers {len(nodes)} grid nodes < K={basis.k}")
        F = basis.functions[nodes]
        x = np.asarray(curve.evaluate(basis.grid[nodes]), dtype=float)
        du = basis.delta_u
        G = (F.T @ F) * du
        c = (F.T @ x) * du
    elif mode == "discrete":
        if day_record is None:
            raise ValueError("discrete mode needs the day's observed demands")
        u_obs = _observed_demands(day_record)
        F = basis.evaluate(u_obs)
        x = np.asarray(curve.evaluate(u_obs), dtype=float)
        G = F.T @ F
        c = F.T @ x
    else:
        raise ValueError(f"unknown score mode {mode!r}")
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        raise RankError(
            f"day {curve.day_index}: Gram matrix condition {cond:.3g} exceeds "
            f"{GRAM_COND_LIMIT:.0e} (domain too narrow to separate factors)")
    return scipy.linalg.solve(G, c, assume_a="pos")


def compute_scores(basis: BasisSystem, curves, day_records=None,
                   mode: str = "integral") -> ScoreMatrix:
    """Per-day scores of the curves in the basis (Gram system or OLS).

    Integral mode solves the K x K Gram system on the grid nodes inside each
    curve's domain; discrete mode regresses curve values at the observed
    demands on the basis there. ``day_records`` (aligned with curves) is
    required for discrete mode only.
    """
    day_idx = np.array([c.day_index for c in curves], dtype=int)
    T = len(curves)
    scores = np.empty((T, basis.k))
    norms = np.full(T, np.nan)
    for pos, curve in enumerate(curves):
        d = day_records[pos] if day_records is not None else None
        scores[pos] = _score_one(basis, curve, mode, d)
        norms[pos] = getattr(curve, "l2_norm", np.nan)
    return ScoreMatrix(day_idx, scores, norms, mode=mode)


@dataclass(frozen=True)
class ReconstructedCurve:
    """Linear-combination view X(u) = sum_k beta_k f_k(u) on a domain."""

    basis: BasisSystem
    beta: np.ndarray
    domain_lo: float
    domain_hi: float
    day_index: int = 0

    @property
    def domain(self) -> tuple[float, float]:
        return (self.domain_lo, self.domain_hi)

    def evaluate(self, u):
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        scale = max(abs(self.domain_lo), abs(self.domain_hi), 1.0)
        tol = 1e-9 * scale
        if np.any(u_arr < self.domain_lo - tol) or np.any(u_arr > self.domain_hi + tol):
            bad = u_arr[(u_arr < self.domain_lo - tol)
                        | (u_arr > self.domain_hi + tol)][0]
            raise DomainError(
                f"evaluation at u={bad} outside reconstruction domain "
                f"[{self.domain_lo}, {self.domain_hi}]")
        vals = self.basis.evaluate(u_arr) @ self.beta
        return vals if np.ndim(u) else float(vals[0])

    @property
    def l2_norm(self) -> float:
        grid = np.linspace(self.domain_lo, self.domain_hi, 201)
        vals = self.evaluate(grid)
        return float(np.sqrt(np.trapezoid(vals ** 2, grid)))


def reconstruct_curve(basis: BasisSystem, scores, domain=None,
                      day_index: int = 0) -> ReconstructedCurve:
    beta = np.asarray(scores, dtype=float)
    if beta.shape != (basis.k,):
        raise ValueError(f"scores must have shape ({basis.k},), got {beta.shape}")
    lo, hi = basis.span if domain is None else (float(domain[0]), float(domain[1]))
    g_lo, g_hi = basis.span
    tol = 1e-9 * max(abs(g_lo), abs(g_hi), 1.0)
    if lo < g_lo - tol or hi > g_hi + tol:
        raise DomainError(f"domain [{lo}, {hi}] outside grid span [{g_lo}, {g_hi}]")
    return ReconstructedCurve(basis, beta, lo, hi, day_index)


__all__ = [
    "StandardizedCurve", "CovarianceSurface", "BasisSystem", "ScoreMatrix",
    "ReconstructedCurve",
    "make_grid", "standardize_curves", "collect_products",
    "local_linear_moments", "solve_surface", "select_cov_bandwidth",
    "default_bandwidth_grid", "estimate_covariance_surface",
    "classical_covariance_surface",
    "eigendecompose", "varimax_rotate", "compute_scores", "reconstruct_curve",
    "DEFAULT_GRID_N",
]
