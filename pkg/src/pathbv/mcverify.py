"""Monte-Carlo estimators and pass/fail verdicts for hitting-probability bounds.

Every estimator conditions on the sampled grid values of ``q`` along a path
and integrates out the Brownian bridges between grid points (see
:func:`pathbv.brownian.stay_above_prob`), which removes most of the bias
of grid infima.  The same paths are re-evaluated on the grid with twice the
step; the difference gives the discretisation allowance and the refinement
check that can withhold a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import brownian as bm
from .geometry import (Domain, SingularSetApprox, exterior_ball_radius, in_tube,
                       nearest_boundary_point, singular_set)

DEFAULT_LEVEL = 0.99
DEFAULT_N_PATHS = 100_000
DEFAULT_N_STEPS = 256
RICHARDSON = 1.0 / (math.sqrt(2.0) - 1.0)   # bias / (coarse - fine) for a sqrt(dt) rate


def z_value(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2.0))


@dataclass(frozen=True)
class McEstimate:
    n: int
    mean: float
    half_width: float
    seed: int
    level: float = DEFAULT_LEVEL

    @property
    def ci(self) -> tuple[float, float]:
        return (self.mean - self.half_width, self.mean + self.half_width)


def bernoulli_estimate(successes: int, n: int, seed: int, level: float = DEFAULT_LEVEL,
                       small: int = 10) -> McEstimate:
    """Wald half-width, or the Wilson interval when either count is small."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    z = z_value(level)
    if min(successes, n - successes) >= small:
        return McEstimate(n, p, z * math.sqrt(p * (1 - p) / n), seed, level)
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    rad = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    hw = max(centre + rad - p, p - (centre - rad))
    return McEstimate(n, p, hw, seed, level)


def sample_estimate(values, seed: int, level: float = DEFAULT_LEVEL) -> McEstimate:
    """Mean with a normal-approximation half-width from the sample deviation."""
    v = np.asarray(values, dtype=float)
    n = v.size
    sd = float(v.std(ddof=1)) if n > 1 else 0.0
    return McEstimate(n, float(v.mean()), z_value(level) * sd / math.sqrt(n), seed, level)


def _moments_estimate(s1, s2, n, seed, level):
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return McEstimate(int(n), float(mean), z_value(level) * math.sqrt(var / n), seed, level)


@dataclass
class BoundVerdict:
    check: str
    estimate: McEstimate
    bound: float
    allowance: float
    refinement_shift: float
    withheld: bool
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.bound - (self.estimate.mean + self.estimate.half_width)

    @property
    def passed(self) -> bool:
        return (not self.withheld) and self.slack >= -self.allowance

    def record(self, domain: str) -> dict:
        est = self.estimate
        return _plain({
            "check": self.check, "domain": domain, "params": _plain(self.params),
            "estimate": est.mean, "ci": [est.ci[0], est.ci[1]], "bound": self.bound,
            "slack": self.slack, "pass": self.passed,
            "detail": _plain({"n": est.n, "level": est.level, "allowance": self.allowance,
                              "refinement_shift": self.refinement_shift,
                              "withheld": self.withheld, **self.extra}),
        })


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return None
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# conditional path functionals


def log_step_stay(qvals: np.ndarray, level: float, dt: float) -> np.ndarray:
    """Per-step log-probability that the bridge of ``q`` stays above ``level``.

    ``-inf`` where an end point is already below the level.  With
    ``dt = 0`` the bridges are ignored (pure grid test).
    """
    g = qvals - level
    a, b = g[..., :-1], g[..., 1:]
    bad = (a < 0) | (b < 0)
    if dt == 0:
        out = np.zeros(a.shape)
    else:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            out = np.log1p(-np.exp(-2.0 * np.maximum(a, 0) * np.maximum(b, 0) / dt))
    out[bad] = -np.inf
    return out


def stay_prefix(qvals: np.ndarray, level: float, dt: float) -> np.ndarray:
    """P(q stays above level on [0, t_k] | grid) for every grid index k."""
    ls = log_step_stay(qvals, level, dt)
    out = np.empty(qvals.shape)
    out[..., 0] = (qvals[..., 0] >= level).astype(float)
    with np.errstate(invalid="ignore"):
        out[..., 1:] = out[..., :1] * np.exp(np.cumsum(ls, axis=-1))
    return np.nan_to_num(out, nan=0.0)


def segment_stay(qvals, level, dt, lo, hi):
    """P(q stays above level on [t_lo, t_hi] | grid)."""
    seg = qvals[..., lo:hi + 1]
    ls = log_step_stay(seg, level, dt)
    ok = np.all(seg >= level, axis=-1)
    return np.where(ok, np.exp(ls.sum(axis=-1)), 0.0)


class _Accumulator:
    """Running sums of fine, coarse and fine-minus-coarse per-path values."""

    def __init__(self, shape=()):
        z = np.zeros(shape)
        self.n = 0
        self.f1, self.f2 = z.copy(), z.copy()
        self.c1, self.c2 = z.copy(), z.copy()
        self.d1, self.d2 = z.copy(), z.copy()

    def add(self, fine, coarse):
        fine = np.asarray(fine, dtype=float)
        coarse = np.asarray(coarse, dtype=float)
        self.n += fine.shape[0]
        diff = fine - coarse
        self.f1 += fine.sum(0)
        self.f2 += (fine ** 2).sum(0)
        self.c1 += coarse.sum(0)
        self.c2 += (coarse ** 2).sum(0)
        self.d1 += diff.sum(0)
        self.d2 += (diff ** 2).sum(0)

    def estimates(self, seed, level, which="f", bernoulli=False):
        """Per-component estimates.  With ``bernoulli`` the half-width is the
        Bernoulli one at the estimated mean, an upper bound for any
        [0, 1]-valued functional with that mean."""
        s1, s2 = getattr(self, which + "1"), getattr(self, which + "2")
        s1, s2 = np.atleast_1d(s1), np.atleast_1d(s2)
        if bernoulli:
            return [bernoulli_estimate(min(max(a, 0.0), self.n), self.n, seed, level)
                    for a in s1]
        return [_moments_estimate(a, b, self.n, seed, level) for a, b in zip(s1, s2)]


def _simulate(domain: Domain, x, T, n_steps, n_paths, seed, functional, shape=(),
              chunk=4096):
    """Run ``functional(qvals, dt, paths)`` on fine and coarse grids of the same paths."""
    if n_steps % 2:
        raise ValueError("n_steps must be even for the refinement study")
    acc = _Accumulator(shape)
    dt = T / n_steps
    for _, paths in bm.iter_path_chunks(domain.dim, T, n_steps, x, seed, n_paths, chunk):
        qv = domain.q(paths)
        fine = functional(qv, dt, paths)
        coarse = functional(qv[:, ::2], 2 * dt, paths[:, ::2])
        acc.add(fine, coarse)
    return acc


def _tube_free(tube: SingularSetApprox | None, paths: np.ndarray) -> np.ndarray:
    if tube is None or tube.empty:
        return np.ones(paths.shape[0])
    hit = np.asarray(in_tube(tube, paths), dtype=bool)
    return (~hit.any(axis=-1)).astype(float)


def _verdict(check, acc, seed, level, bound, params, extra=None, idx=0):
    est = acc.estimates(seed, level, "f", bernoulli=True)[idx]
    shift_est = acc.estimates(seed, level, "d")[idx]
    shift = abs(shift_est.mean)
    allowance = RICHARDSON * shift
    withheld = shift >= est.half_width and shift > 0
    return BoundVerdict(check, est, float(bound), allowance, shift, bool(withheld),
                        dict(params), dict(extra or {}))


def _start(domain: Domain, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"start point must have dimension {domain.dim}")
    return x


# ---------------------------------------------------------------------------
# verifiers


class PreconditionError(ValueError):
    """A hypothesis of the inequality being checked is not met."""


def verify_stay_bound(domain: Domain, x, u: float, n_paths: int = DEFAULT_N_PATHS,
                    n_steps: int = DEFAULT_N_STEPS, seed: int = 0,
                    level: float = DEFAULT_LEVEL, bridge: bool = True) -> BoundVerdict:
    """P_x[inf_{[0,u]} q >= 0] against ``((d-1)/delta(y) + u^-1/2) q(x)``,
    ``y`` the boundary point nearest to ``x``."""
    x = _start(domain, x)
    qx = float(domain.q(x))
    if qx < 0:
        raise PreconditionError("start point lies outside the closure")
    y = nearest_boundary_point(domain, x)
    delta = exterior_ball_radius(domain, y).radius
    if delta == 0:
        raise PreconditionError("exterior-ball radius vanishes at the nearest boundary point")
    d = domain.dim
    curv = 0.0 if math.isinf(delta) else (d - 1) / delta
    bound = (curv + u ** -0.5) * qx

    def functional(qv, dt, paths):
        return stay_prefix(qv, 0.0, dt if bridge else 0.0)[:, -1]

    acc = _simulate(domain, x, u, n_steps, n_paths, seed, functional)
    params = {"x": x, "u": u, "n_paths": n_paths, "n_steps": n_steps, "bridge": bridge}
    return _verdict("stay_bound", acc, seed, level, bound, params,
                    {"q_x": qx, "delta": delta, "nearest": y})


@dataclass
class ExitDensityReport:
    t_grid: list
    cdf: list
    cdf_half_width: list
    increments: list
    increment_half_width: list
    c1: float
    monotone: bool
    params: dict

    def record(self, domain: str) -> dict:
        return _plain({"check": "exit_density", "domain": domain, "params": self.params,
                       "estimate": self.c1, "ci": [self.c1, self.c1], "bound": None,
                       "slack": None, "pass": bool(self.monotone and math.isfinite(self.c1)),
                       "detail": {k: getattr(self, k) for k in
                                  ("t_grid", "cdf", "cdf_half_width", "increments",
                                   "increment_half_width", "c1", "monotone")}})


def verify_exit_density(domain: Domain, x, r: float, t_grid, n_paths: int = DEFAULT_N_PATHS,
                        n_steps: int = DEFAULT_N_STEPS, seed: int = 0,
                        level: float = DEFAULT_LEVEL) -> ExitDensityReport:
    """Exit-time CDF of ``O_r = {q > r}`` on ``t_grid`` and the smallest ``C1``
    with ``F(t') - F(t) <= C1 log(t'/t)`` on every grid interval, after adding
    the CI half-width of each increment."""
    x = _start(domain, x)
    t = np.asarray(sorted(t_grid), dtype=float)
    if t.size < 2 or t[0] <= 0 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid needs at least two distinct positive times")
    if not float(domain.q(x)) > r:
        raise PreconditionError("start point is not inside O_r")
    T = float(t[-1])
    dt = T / n_steps
    # even indices, so the coarse grid sees the same times
    idx = 2 * np.rint(t / (2 * dt)).astype(int)
    if np.any(idx < 1) or len(set(idx)) < len(idx):
        raise ValueError("t_grid is finer than the path grid")
    t_used = idx * dt

    def functional(qv, step, paths):
        factor = int(round(step / dt))
        pref = stay_prefix(qv, r, step)
        cdf = 1.0 - pref[:, idx // factor]
        return np.c_[cdf, np.diff(cdf, axis=1)]

    acc = _simulate(domain, x, T, n_steps, n_paths, seed, functional, shape=(2 * len(t) - 1,))
    ests = acc.estimates(seed, level, "f")
    k = len(t)
    cdf = [e.mean for e in ests[:k]]
    cdf_hw = [e.half_width for e in ests[:k]]
    inc = [e.mean for e in ests[k:]]
    inc_hw = [e.half_width for e in ests[k:]]
    logs = np.log(t_used[1:] / t_used[:-1])
    c1 = float(np.max((np.asarray(inc) + np.asarray(inc_hw)) / logs))
    monotone = bool(np.all(np.asarray(inc) >= -np.asarray(inc_hw)))
    params = {"x": x, "r": r, "n_paths": n_paths, "n_steps": n_steps}
    return ExitDensityReport(list(t_used), cdf, cdf_hw, inc, inc_hw, c1, monotone, params)


def calibrate_c1(domain: Domain, distances=(0.05, 0.1, 0.2, 0.4), r: float = 0.0,
                 n_paths: int = 20_000, n_steps: int = 1024, n_times: int = 12,
                 seed: int = 0, level: float = DEFAULT_LEVEL) -> dict:
    """Largest ``C1`` over starts at several distances from ``{q = r}``.

    For a start at distance ``a`` the time grid is log-spaced over
    ``[a^2/16, 16 a^2]``, where the exit-time density of a flat boundary lives.
    Starts are placed along a ray from the origin towards a boundary point.
    """
    direction = _ray_to_boundary(domain)
    runs = []
    for k, a in enumerate(distances):
        x = _point_at_depth(domain, direction, r + a)
        T = 16.0 * a * a
        t_grid = np.geomspace(a * a / 16.0, T, n_times)
        rep = verify_exit_density(domain, x, r, t_grid, n_paths, n_steps, seed + k, level)
        runs.append({"distance": a, "x": x, "c1": rep.c1, "monotone": rep.monotone})
    c1 = max(run["c1"] for run in runs)
    return {"c1": c1, "c2": 4.0 * c1 + 2.0, "r": r, "runs": _plain(runs),
            "n_paths": n_paths, "n_steps": n_steps, "seed": seed}


def _ray_to_boundary(domain: Domain) -> np.ndarray:
    v = np.zeros(domain.dim)
    v[0] = 1.0
    return v


def _point_at_depth(domain: Domain, direction: np.ndarray, depth: float) -> np.ndarray:
    """Point on the ray from 0 with ``q = depth``, by bisection."""
    lo, hi = 0.0, 1.0
    if domain.q(np.zeros(domain.dim)) < depth:
        raise PreconditionError("the origin is closer to the boundary than the requested depth")
    while domain.q(hi * direction) > depth:
        hi *= 2.0
        if hi > 1e6:
            raise PreconditionError("ray does not reach the boundary")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if domain.q(mid * direction) > depth:
            lo = mid
        else:
            hi = mid
    return lo * direction


def verify_band_bound(domain: Domain, x, gamma: float, r: float, u: float, c1: float,
                    n_paths: int = DEFAULT_N_PATHS, n_steps: int = DEFAULT_N_STEPS,
                    seed: int = 0, level: float = DEFAULT_LEVEL, n_boundary: int = 20_000,
                    bridge: bool = True) -> BoundVerdict:
    """P_x[0 <= inf_{[0,u]} q <= r, no visit to A_gamma] against
    ``((d-1)/gamma + C2 u^-1/2) r`` with ``C2 = 4 C1 + 2``."""
    if not 0 < r <= gamma:
        raise PreconditionError("need 0 < r <= gamma")
    x = _start(domain, x)
    if float(domain.q(x)) < 0:
        raise PreconditionError("start point lies outside the closure")
    tube = singular_set(domain, gamma, n_boundary, seed) if domain.sampler else None
    c2 = 4.0 * c1 + 2.0
    d = domain.dim
    bound = ((d - 1) / gamma + c2 * u ** -0.5) * r

    def functional(qv, dt, paths):
        h = dt if bridge else 0.0
        band = stay_prefix(qv, 0.0, h)[:, -1] - stay_prefix(qv, r, h)[:, -1]
        return band * _tube_free(tube, paths)

    acc = _simulate(domain, x, u, n_steps, n_paths, seed, functional)
    params = {"x": x, "gamma": gamma, "r": r, "u": u, "n_paths": n_paths,
              "n_steps": n_steps, "bridge": bridge}
    return _verdict("band_bound", acc, seed, level, bound, params,
                    {"c1": c1, "c2": c2, "tube_points": 0 if tube is None else len(tube.points)})


def band_probabilities(domain: Domain, x, levels, T: float, n_paths: int, n_steps: int,
                       seed: int, level: float = DEFAULT_LEVEL,
                       tube: SingularSetApprox | None = None):
    """Estimates of P_x[0 <= inf q <= e, no tube visit] for each ``e`` in ``levels``.

    Returns ``(estimates, refinement_shifts)``.
    """
    x = _start(domain, x)
    levels = np.asarray(levels, dtype=float)

    def functional(qv, dt, paths):
        s0 = stay_prefix(qv, 0.0, dt)[:, -1]
        out = np.stack([s0 - stay_prefix(qv, e, dt)[:, -1] for e in levels], axis=1)
        return out * _tube_free(tube, paths)[:, None]

    acc = _simulate(domain, x, T, n_steps, n_paths, seed, functional, shape=(len(levels),))
    ests = acc.estimates(seed, level, "f", bernoulli=True)
    shifts = [abs(e.mean) for e in acc.estimates(seed, level, "d")]
    return ests, shifts


def mann_kendall_increasing(values) -> float:
    """One-sided p-value for an increasing trend (Kendall's tau against the index)."""
    v = np.asarray(values, dtype=float)
    res = stats.kendalltau(np.arange(v.size), v, alternative="greater")
    return float(res.pvalue)


@dataclass
class SequenceReport:
    check: str
    schedule: list
    values: list
    half_widths: list
    bound: float | None
    statistic: float | None
    passed: bool
    params: dict
    extra: dict = field(default_factory=dict)

    def record(self, domain: str) -> dict:
        top = int(np.argmax(self.values)) if self.values else 0
        est = self.values[top] if self.values else 0.0
        hw = self.half_widths[top] if self.values else 0.0
        slack = None if self.bound is None else self.bound - (est + hw)
        return _plain({"check": self.check, "domain": domain, "params": self.params,
                       "estimate": est, "ci": [est - hw, est + hw], "bound": self.bound,
                       "slack": slack, "pass": bool(self.passed),
                       "detail": {"schedule": self.schedule, "values": self.values,
                                  "half_widths": self.half_widths, "statistic": self.statistic,
                                  **self.extra}})


def verify_gradient_mass(domain: Domain, k: int, m_schedule, c1: float, T: float = 1.0,
                         n_paths: int = DEFAULT_N_PATHS, n_steps: int = DEFAULT_N_STEPS,
                         seed: int = 0, level: float = DEFAULT_LEVEL, alpha: float = 0.05,
                         n_boundary: int = 20_000) -> SequenceReport:
    """``m mu(0 <= h <= 1/m, no visit to A_{1/(k+1)})`` along ``m_schedule``.

    Passes when Kendall's test finds no increasing trend at level ``alpha``
    and every value plus its half-width is at most
    ``(k+1)(d-1) + C2 T^-1/2``.
    """
    ms = [int(m) for m in m_schedule]
    if any(m < k + 1 for m in ms):
        raise PreconditionError("every m must be at least k + 1")
    gamma = 1.0 / (k + 1)
    tube = singular_set(domain, gamma, n_boundary, seed) if domain.sampler else None
    levels = [1.0 / m for m in ms]
    ests, shifts = band_probabilities(domain, np.zeros(domain.dim), levels, T, n_paths,
                                      n_steps, seed, level, tube)
    vals = [m * e.mean for m, e in zip(ms, ests)]
    hws = [m * (e.half_width + RICHARDSON * s) for m, e, s in zip(ms, ests, shifts)]
    c2 = 4.0 * c1 + 2.0
    bound = (k + 1) * (domain.dim - 1) + c2 * T ** -0.5
    p = mann_kendall_increasing(vals) if len(vals) >= 3 else 1.0
    bounded = all(v + h <= bound for v, h in zip(vals, hws))
    no_trend = p >= alpha
    params = {"k": k, "T": T, "n_paths": n_paths, "n_steps": n_steps, "alpha": alpha}
    return SequenceReport("gradient_mass", ms, vals, hws, bound, p, bounded and no_trend, params,
                          {"bounded": bounded, "no_increasing_trend": no_trend, "c1": c1,
                           "c2": c2, "refinement_shifts": [m * s for m, s in zip(ms, shifts)]})


def _loglog_slope(xs, ys):
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def verify_psi_quadratic(domain: Domain, s: float, r_schedule, l: int, T: float = 1.0,
                         n_paths: int = DEFAULT_N_PATHS, n_steps: int = DEFAULT_N_STEPS,
                         seed: int = 0, level: float = DEFAULT_LEVEL, min_slope: float = 1.7,
                         n_boundary: int = 20_000) -> SequenceReport:
    """Psi(r): paths staying in the closure away from ``A_{1/(l+1)}`` that come
    within ``r`` of the boundary both before and after time ``s``.  The slope
    of log Psi against log r must be at least ``min_slope``.  Levels with a
    zero estimate are censored and the fit uses the leading uncensored ones.
    """
    if not 0 < s < T:
        raise PreconditionError("need 0 < s < T")
    rs = sorted(float(r) for r in r_schedule)[::-1]
    if rs[0] > 1.0 / (l + 1):
        raise PreconditionError("every r must be at most 1/(l+1)")
    gamma = 1.0 / (l + 1)
    tube = singular_set(domain, gamma, n_boundary, seed) if domain.sampler else None
    x = np.zeros(domain.dim)
    k_s = int(round(s / T * n_steps))
    if k_s % 2:
        raise ValueError("s must fall on the coarse grid")

    def functional(qv, dt, paths):
        n = qv.shape[1] - 1
        ks = k_s * n // n_steps
        a0 = segment_stay(qv, 0.0, dt, 0, ks)
        b0 = segment_stay(qv, 0.0, dt, ks, n)
        cols = []
        for r in rs:
            a = a0 - segment_stay(qv, r, dt, 0, ks)
            b = b0 - segment_stay(qv, r, dt, ks, n)
            cols.append(a * b)
        return np.stack(cols, axis=1) * _tube_free(tube, paths)[:, None]

    acc = _simulate(domain, x, T, n_steps, n_paths, seed, functional, shape=(len(rs),))
    ests = acc.estimates(seed, level, "f", bernoulli=True)
    shifts = [abs(e.mean) for e in acc.estimates(seed, level, "d")]
    vals = [e.mean for e in ests]
    hws = [e.half_width for e in ests]
    keep = []
    for r, v in zip(rs, vals):
        if v <= 0:
            break
        keep.append((r, v))
    slope = _loglog_slope(*zip(*keep)) if len(keep) >= 2 else float("nan")
    passed = bool(np.isfinite(slope) and slope >= min_slope)
    params = {"s": s, "T": T, "l": l, "n_paths": n_paths, "n_steps": n_steps}
    return SequenceReport("psi_quadratic", rs, vals, hws, None, slope, passed, params,
                          {"slope": slope, "min_slope": min_slope, "censored": len(rs) - len(keep),
                           "refinement_shifts": shifts})


def verify_null_boundary(domain: Domain, eps_schedule, T: float = 1.0,
                         n_paths: int = DEFAULT_N_PATHS, n_steps: int = DEFAULT_N_STEPS,
                         seed: int = 0, level: float = DEFAULT_LEVEL,
                         slope_tol: float = 0.15) -> SequenceReport:
    """``mu(0 <= h <= eps)`` along ``eps_schedule`` decays linearly to 0.

    A quadratic in ``eps`` is fitted by weighted least squares; its intercept
    must lie within the largest CI half-width of the schedule, and the
    log-log slope must be within ``slope_tol`` of 1.
    """
    eps = sorted(float(e) for e in eps_schedule)
    ests, shifts = band_probabilities(domain, np.zeros(domain.dim), eps, T, n_paths, n_steps,
                                      seed, level)
    vals = np.array([e.mean for e in ests])
    hws = np.array([e.half_width + RICHARDSON * s for e, s in zip(ests, shifts)])
    e = np.asarray(eps)
    A = np.c_[np.ones_like(e), e, e * e]
    w = 1.0 / np.maximum(hws, 1e-12)
    coef, *_ = np.linalg.lstsq(A * w[:, None], vals * w, rcond=None)
    intercept = float(coef[0])
    positive = bool(np.all(vals > 0))
    slope = _loglog_slope(e, vals) if positive else float("nan")
    width = float(hws.max())
    passed = positive and abs(intercept) <= width and abs(slope - 1.0) <= slope_tol
    params = {"T": T, "n_paths": n_paths, "n_steps": n_steps}
    return SequenceReport("null_boundary", eps, list(vals), list(hws), None, slope, passed,
                          params, {"intercept": intercept, "ci_width": width, "slope": slope,
                                   "fit": list(coef)})


def band_slope(domain: Domain, x, r_schedule, u: float, n_paths: int = DEFAULT_N_PATHS,
                   n_steps: int = DEFAULT_N_STEPS, seed: int = 0,
                   level: float = DEFAULT_LEVEL, min_slope: float = 0.85) -> SequenceReport:
    """Log-log slope in ``r`` of the band probability P_x[0 <= inf_{[0,u]} q <= r]."""
    rs = sorted(float(r) for r in r_schedule)
    ests, shifts = band_probabilities(domain, x, rs, u, n_paths, n_steps, seed, level)
    vals = [e.mean for e in ests]
    ok = all(v > 0 for v in vals)
    slope = _loglog_slope(rs, vals) if ok else float("nan")
    passed = bool(ok and slope >= min_slope)
    params = {"x": np.asarray(x), "u": u, "n_paths": n_paths, "n_steps": n_steps}
    return SequenceReport("band_slope", rs, vals, [e.half_width for e in ests], None,
                          slope, passed, params, {"slope": slope, "min_slope": min_slope,
                                                  "refinement_shifts": shifts})


def hw_scaling(domain: Domain, x, u: float, n_paths: int, seed: int = 0,
               n_steps: int = 64) -> float:
    """Ratio of half-widths at ``n_paths`` and ``4 n_paths`` (about 2)."""
    a = verify_stay_bound(domain, x, u, n_paths, n_steps, seed).estimate.half_width
    b = verify_stay_bound(domain, x, u, 4 * n_paths, n_steps, seed).estimate.half_width
    return a / b

