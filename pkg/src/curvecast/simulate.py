"""Synthetic data generation with known ground truth.

Provides an FFM-consistent world generator (orthonormal closed-form factors,
random score dynamics, random domains, sinusoidal intra-day demand) plus
standalone SARIMA and two-regime Markov-switching series generators. All
generators are pure functions of their seed; per-day randomness is drawn from
spawned child sequences so days are independent streams.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import Dataset, DayRecord, HourlyObservation, workday_calendar

DEFAULT_START_DATE = dt.date(2006, 1, 2)  # a Monday


# ---------------------------------------------------------------------------
# orthonormal factor systems


def _parent_softplus(s):
    return np.log1p(np.exp(3.0 * (s - 0.5))) / 3.0


def _parent_expgrow(s):
    return np.exp(1.2 * s)


def _parent_sine(s):
    return np.sin(2.0 * math.pi * s)

def _parent_cosine(s):
    return np.cos(math.pi * s)


def _parent_const(s):
    return np.ones_like(s)


def _parent_linear(s):
    return s - 0.5


def _parent_quad(s):
    return (s - 0.5) ** 2


def _parent_cubic(s):
    return (s - 0.5) ** 3


_PARENTS = {
    "default": (_parent_softplus, _parent_expgrow, _parent_sine, _parent_cosine),
    "constant": (_parent_const, _parent_linear, _parent_quad, _parent_cubic),
}


@dataclass(frozen=True)
class FactorFunction:
    """Closed-form factor: a fixed linear combination of parent shapes."""

    parents: tuple
    coeffs: np.ndarray
    lo: float
    hi: float

    def __call__(self, u):
        u_arr = np.asarray(u, dtype=float)
        s = (u_arr - self.lo) / (self.hi - self.lo)
        out = np.zeros_like(s, dtype=float)
        for c, phi in zip(self.coeffs, self.parents):
            if c != 0.0:
                out = out + c * phi(s)
        return out if np.ndim(u) else float(out)


def make_orthonormal_factors(K: int, lo: float = 0.0, hi: float = 1.0,
                             kind: str = "default",
                             grid_n: int = 4001) -> list[FactorFunction]:
    """K L2-orthonormal factors on [lo, hi], Gram-Schmidt over closed forms.

    Coefficients are computed once by modified Gram-Schmidt with dense
    trapezoid quadrature and then applied to the closed-form parents, so the
    returned functions evaluate anywhere in [lo, hi]. Signs are fixed so each
    factor integrates positive. ``kind='constant'`` makes the first factor
    exactly 1/sqrt(hi - lo).
    """
    if kind not in _PARENTS:
        raise ValueError(f"unknown factor kind {kind!r}")
    parents = _PARENTS[kind]
    if not 1 <= K <= len(parents):
        raise ValueError(f"K must be in 1..{len(parents)} for kind {kind!r}")
    u = np.linspace(lo, hi, grid_n)
    s = (u - lo) / (hi - lo)
    P = np.column_stack([phi(s) for phi in parents[:K]])

    def inner(a, b):
        return float(np.trapezoid(a * b, u))

    coeffs = np.zeros((K, K))
    basis_vals = np.zeros((grid_n, K))
    for k in range(K):
        c = np.zeros(K)
        c[k] = 1.0
        vec = P[:, k].copy()
        for j in range(k):
            proj = inner(vec, basis_vals[:, j])
            vec = vec - proj * basis_vals[:, j]
            c = c - proj * coeffs[j]
        nrm = math.sqrt(inner(vec, vec))
        if nrm < 1e-10:
            raise ValueError(f"parent {k} is linearly dependent on earlier ones")
        vec /= nrm
        c /= nrm
        if inner(vec, np.ones(grid_n)) < 0:
            vec, c = -vec, -c
        basis_vals[:, k] = vec
        coeffs[k] = c
    return [FactorFunction(parents[:K], coeffs[k], float(lo), float(hi))
            for k in range(K)]


# ---------------------------------------------------------------------------
# SARIMA generator


@dataclass(frozen=True)
class SarimaParams:
    """(0,1,q) x (0,1,1)_s moving-average parameters, + sign convention."""

    delta: tuple = (0.4, 0.2, 0.1, 0.05, 0.02, 0.01)
    delta_seasonal: float = -0.5
    sigma2: float = 1.0
    season: int = 5


def _ma_coefficients(params: SarimaParams) -> np.ndarray:
    """Coefficients c of (1 + sum delta_l B^l)(1 + Theta B^s)."""
    q = len(params.delta)
    s = params.season
    c = np.zeros(s + q + 1)
    c[0] = 1.0
    for l, d in enumerate(params.delta, start=1):
        c[l] += d
    c[s] += params.delta_seasonal
    for l, d in enumerate(params.delta, start=1):
        c[s + l] += params.delta_seasonal * d
    return c


def sarima_diff_autocov(params: SarimaParams, max_lag: int) -> np.ndarray:
    """Closed-form autocovariance of the doubly differenced series."""
    c = _ma_coefficients(params)
    gamma = np.zeros(max_lag + 1)
    for k in range(max_lag + 1):
        if k < len(c):
            gamma[k] = params.sigma2 * float(c[:len(c) - k] @ c[k:])
    return gamma


def generate_sarima(params: SarimaParams, T: int, seed,
                    burn: int = 200) -> np.ndarray:
    """Simulate a SARIMA(0,1,q)x(0,1,1)_s path of length T (burn-in dropped).

    ``seed`` is an int or a ``numpy.random.SeedSequence`` (used by the FFM
    generator's per-factor seed splitting).
    """
    if T < 1:
        raise ValueError("T must be positive")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed)
    c = _ma_coefficients(params)
    s = params.season
    n = T + burn
    omega = rng.normal(0.0, math.sqrt(params.sigma2), n + len(c))
    x = np.convolve(omega, c, mode="full")[len(c) - 1:len(c) - 1 + n]
    v = np.cumsum(x)
    y = np.zeros(n)
    for t in range(n):
        y[t] = (y[t - s] if t >= s else 0.0) + v[t]
    return y[burn:]


# ---------------------------------------------------------------------------
# regime-switch generator


@dataclass(frozen=True)
class RegimeParams:
    """Two-regime parameters: AR(1) mean regime M, iid spike regime S."""

    d: float = 0.5
    alpha: float = 0.6
    mu_s: float = 5.0
    sigma_m: float = 0.2
    sigma_s: float = 1.0
    q: float = 0.95  # P(M -> M)
    p: float = 0.5   # P(S -> S)


def generate_regime_switch(params: RegimeParams, T: int, seed: int,
                           burn: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the two-regime series; returns (series, regime path).

    Regimes are coded 0 = mean regime M, 1 = spike regime S. The chain starts
    from its stationary distribution (all-M when q = 1).
    """
    if T < 1:
        raise ValueError("T must be positive")
    q, p = params.q, params.p
    if not (0.0 <= q <= 1.0 and 0.0 <= p <= 1.0):
        raise ValueError("transition probabilities must lie in [0, 1]")
    denom = 2.0 - p - q
    pi_m = 0.5 if denom <= 0 else (1.0 - p) / denom
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = T + burn
    stay = rng.random(n)
    eps = rng.normal(0.0, 1.0, n)
    states = np.zeros(n, dtype=np.int64)
    y = np.zeros(n)
    state = 0 if rng.random() < pi_m else 1
    prev = params.d / (1.0 - params.alpha) if abs(params.alpha) < 1 else 0.0
    for t in range(n):
        if t > 0:
            keep = q if state == 0 else p
            if stay[t] >= keep:
                state = 1 - state
        if state == 0:
            val = params.d + params.alpha * prev + params.sigma_m * eps[t]
        else:
            val = params.mu_s + params.sigma_s * eps[t]
        states[t] = state
        y[t] = val
        prev = val
    return y[burn:], states[burn:]


def generate_ar1(d: float, alpha: float, sigma: float, T: int, seed: int,
                 burn: int = 100) -> np.ndarray:
    """Simulate a stationary AR(1) path y_t = d + alpha*y_{t-1} + sigma*eps."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    eps = rng.normal(0.0, sigma, T + burn)
    y = np.zeros(T + burn)
    prev = d / (1.0 - alpha) if abs(alpha) < 1 else 0.0
    for t in range(T + burn):
        prev = d + alpha * prev + eps[t]
        y[t] = prev
    return y[burn:]


# ---------------------------------------------------------------------------
# FFM world generator


@dataclass(frozen=True)
class ScoreProcess:
    """Day-to-day dynamics of the factor scores.

    kinds: 'random_walk' (positive starts, Gaussian steps), 'iid'
    (Gaussian around per-factor means), 'sarima' (one independent SARIMA
    path per factor, scaled and shifted).
    """

    kind: str = "random_walk"
    start: tuple = (8.0, 3.0, 1.5, 0.8)
    step_sd: float = 0.15
    mean: tuple = (8.0, 3.0, 1.5, 0.8)
    sd: float = 1.0
    sarima: SarimaParams = field(default_factory=SarimaParams)
    sarima_scale: tuple = (1.0, 0.5, 0.25, 0.125)
    sarima_shift: tuple = (8.0, 3.0, 1.5, 0.8)
    # Standardize each factor's raw SARIMA path to mean 0 / sd 1 before
    # scale/shift: the doubly integrated level otherwise drifts to scales
    # that break price positivity, while the affine map keeps the
    # SARIMA-forecastable dynamics intact.
    sarima_normalize: bool = True
    # 'seasonal_ar': beta_tk = mean_k + amp_k * z_t with
    # z_t = rho z_{t-5} + eta_t + theta eta_{t-1}: five slowly wandering
    # weekday chains (stationary, strong period-5 stochastic seasonality).
    sea_rho: float = 0.9
    sea_theta: float = 0.5
    sea_sd: float = 0.6
    sea_amp: tuple = (1.0, 0.5, 0.25, 0.125)


@dataclass(frozen=True)
class DomainProcess:
    """Truncated half-normal offsets from the global endpoints."""

    spread: float = 0.1      # sd of the latent normal, as a fraction of B - A
    max_offset: float = 0.35  # truncation, as a fraction of B - A


@dataclass(frozen=True)
class DemandPath:
    """Sinusoidal intra-day shape warped by a day-level AR(1) offset.

    phi_h = (1 - cos(2*pi*(h-1)/H))/2 spans [0, 1] exactly (h = 1 and
    h = H/2 + 1 for even H); the day-level offset o_t follows an AR(1) and
    warps the shape to phi_h**exp(clip(o_t)*warp_strength), which preserves
    the exact endpoint attainment, so observed demands cover [a_t, b_t].
    """

    ar_coef: float = 0.7
    offset_sd: float = 0.3
    warp_strength: float = 0.4
    jitter_sd: float = 0.0   # optional demand jitter, fraction of (b_t - a_t)


@dataclass(frozen=True)
class FfmGenerator:
    lo: float
    hi: float
    true_factors: tuple
    score_process: ScoreProcess = field(default_factory=ScoreProcess)
    domain_process: DomainProcess = field(default_factory=DomainProcess)
    noise_sd: float = 0.0
    hours_per_day: int = 24
    demand_path: DemandPath = field(default_factory=DemandPath)
    seed: int = 0
    start_date: dt.date = DEFAULT_START_DATE

    @property
    def k(self) -> int:
        return len(self.true_factors)

    @classmethod
    def default(cls, K: int = 2, lo: float = 0.0, hi: float = 1.0,
                noise_sd: float = 0.0, seed: int = 0, kind: str = "default",
                **kwargs) -> "FfmGenerator":
        factors = tuple(make_orthonormal_factors(K, lo, hi, kind=kind))
        return cls(lo=lo, hi=hi, true_factors=factors, noise_sd=noise_sd,
                   seed=seed, **kwargs)


@dataclass(frozen=True)
class GroundTruth:
    """True quantities behind a generated dataset."""

    grid: np.ndarray          # dense sampling grid on [lo, hi]
    factor_values: np.ndarray  # (len(grid), K)
    scores: np.ndarray        # (T, K)
    domains: np.ndarray       # (T, 2)
    noise_sd: float
    seed: int
    lo: float
    hi: float
    factors: tuple = ()       # the closed-form FactorFunction objects

    @property
    def k(self) -> int:
        return self.factor_values.shape[1]


def _generate_scores(proc: ScoreProcess, K: int, T: int,
                     rng: np.random.Generator, seed_root) -> np.ndarray:
    if proc.kind == "random_walk":
        start = np.asarray(proc.start[:K], dtype=float)
        steps = rng.normal(0.0, proc.step_sd, (T, K))
        steps[0] = 0.0
        return start[None, :] + np.cumsum(steps, axis=0)
    if proc.kind == "iid":
        mean = np.asarray(proc.mean[:K], dtype=float)
        return mean[None, :] + rng.normal(0.0, proc.sd, (T, K))
    if proc.kind == "sarima":
        children = seed_root.spawn(K)
        cols = []
        for k in range(K):
            path = generate_sarima(proc.sarima, T, children[k])
            if proc.sarima_normalize:
                path = (path - path.mean()) / max(float(path.std()), 1e-12)
            cols.append(proc.sarima_shift[k] + proc.sarima_scale[k] * path)
        return np.column_stack(cols)
    if proc.kind == "seasonal_ar":
        burn = 100
        total = T + burn
        cols = []
        for k in range(K):
            eta = rng.normal(0.0, proc.sea_sd, total)
            z = np.zeros(total)
            for t in range(total):
                prev = z[t - 5] if t >= 5 else 0.0
                ma = proc.sea_theta * eta[t - 1] if t >= 1 else 0.0
                z[t] = proc.sea_rho * prev + eta[t] + ma
            cols.append(proc.mean[k] + proc.sea_amp[k] * z[burn:])
        return np.column_stack(cols)
    raise ValueError(f"unknown score process kind {proc.kind!r}")


def generate(gen: FfmGenerator, T: int) -> tuple[Dataset, GroundTruth]:
    """Generate T workdays of hourly (demand, price) pairs plus ground truth.

    Deterministic under the generator seed; the dataset passes ingest
    validation (24 rows per workday, positive demands mapped onto [lo, hi]).
    """
    if T < 1:
        raise ValueError("T must be positive")
    span = gen.hi - gen.lo
    if span <= 0:
        raise ValueError("generator needs lo < hi")
    root = np.random.SeedSequence(gen.seed)
    ss_scores, ss_domains, ss_demand, ss_days = root.spawn(4)
    rng_scores = np.random.default_rng(ss_scores)
    rng_domains = np.random.default_rng(ss_domains)
    rng_demand = np.random.default_rng(ss_demand)

    scores = _generate_scores(gen.score_process, gen.k, T, rng_scores, ss_scores)

    dp = gen.domain_process
    off_a = np.minimum(np.abs(rng_domains.normal(0.0, dp.spread * span, T)),
                       dp.max_offset * span)
    off_b = np.minimum(np.abs(rng_domains.normal(0.0, dp.spread * span, T)),
                       dp.max_offset * span)
    a = gen.lo + off_a
    b = gen.hi - off_b

    dem = gen.demand_path
    offsets = np.zeros(T)
    innov = rng_demand.normal(0.0, dem.offset_sd, T)
    for t in range(1, T):
        offsets[t] = dem.ar_coef * offsets[t - 1] + innov[t]

    H = gen.hours_per_day
    hours = np.arange(1, H + 1)
    phi = 0.5 - 0.5 * np.cos(2.0 * math.pi * (hours - 1) / H)
    if H % 2 == 0:
        # make the sinusoid's mirror ties exact in floating point
        phi[H // 2 + 1:] = phi[1:H // 2][::-1]
        phi[0], phi[H // 2] = 0.0, 1.0

    dates = workday_calendar(gen.start_date, T)
    day_seeds = ss_days.spawn(T)
    days = []
    for t in range(T):
        rng_day = np.random.default_rng(day_seeds[t])
        expo = math.exp(max(-2.0, min(2.0, offsets[t])) * dem.warp_strength)
        shape = phi ** expo
        if dem.jitter_sd > 0:
            # jitter interior hours only so a_t and b_t stay attained exactly
            noise = rng_day.normal(0.0, dem.jitter_sd, H)
            noise[int(np.argmin(phi))] = 0.0
            noise[int(np.argmax(phi))] = 0.0
            shape = np.clip(shape + noise, 0.0, 1.0)
        u = a[t] + (b[t] - a[t]) * shape
        x = np.zeros(H)
        for k, f in enumerate(gen.true_factors):
            x += scores[t, k] * np.asarray(f(u))
        y = x + (rng_day.normal(0.0, gen.noise_sd, H) if gen.noise_sd > 0
                 else 0.0)
        obs = tuple(
            HourlyObservation(day_index=t + 1, calendar_date=dates[t],
                              hour=int(h), price=float(y[i]),
                              demand=float(u[i]), is_outlier=False,
                              is_missing=False)
            for i, h in enumerate(hours))
        days.append(DayRecord(day_index=t + 1, calendar_date=dates[t],
                              observations=obs, n_valid=H,
                              domain_lo=float(u.min()),
                              domain_hi=float(u.max()), fit_eligible=True))

    dataset = Dataset(days=tuple(days), global_lo=float(min(d.domain_lo for d in days)),
                      global_hi=float(max(d.domain_hi for d in days)),
                      outlier_threshold=math.inf)
    grid = np.linspace(gen.lo, gen.hi, 201)
    fvals = np.column_stack([np.asarray(f(grid)) for f in gen.true_factors])
    truth = GroundTruth(grid=grid, factor_values=fvals, scores=scores,
                        domains=np.column_stack([a, b]), noise_sd=gen.noise_sd,
                        seed=gen.seed, lo=gen.lo, hi=gen.hi,
                        factors=gen.true_factors)
    return dataset, truth


__all__ = [
    "FactorFunction", "SarimaParams", "RegimeParams", "ScoreProcess",
    "DomainProcess", "DemandPath", "FfmGenerator", "GroundTruth",
    "make_orthonormal_factors", "sarima_diff_autocov", "generate_sarima",
    "generate_regime_switch", "generate_ar1", "generate",
    "DEFAULT_START_DATE",
]
