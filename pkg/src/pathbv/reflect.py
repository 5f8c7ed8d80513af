"""Reflected Ornstein-Uhlenbeck dynamics on discretised path space.

A path is represented by its values ``y_1, ..., y_n`` in R^d at the grid
times ``t_i = i T / n`` (``y_0 = 0`` is implicit).  The Cameron-Martin inner
product ``<h, k>_H = sum_i <h_i - h_{i-1}, k_i - k_{i-1}> / dt`` has matrix
``G`` and covariance ``G^-1 = (min(t_i, t_j))``, the covariance of Brownian
motion sampled on the grid.

One Euler step is

    X' = X + sqrt(dt) xi - X dt / 2,    xi ~ N(0, G^-1)  (per coordinate),

followed, when some ``X'_i`` leaves the closure of ``O``, by the nearest point
of the constraint set ``{y : all y_i in closure(O)}`` in the metric of ``G``.
The correction ``c`` is booked as ``sigma dA / 2`` with ``dA = 2 |c|_H`` and
``sigma = c / |c|_H``, so the increments of ``X`` split exactly into the
driving noise, the drift and the reflection term.

The metric projection is computed with Dykstra's algorithm over the
single-time constraints.  Projecting onto ``{y_i in closure(O)}`` alone moves
``y_i`` to its nearest point in the closure and drags the rest of the path
along the ramp ``min(t_j, t_i) / t_i``, the covariance column of ``t_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng as _rng
from .geometry import Domain, nearest_boundary_point


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscretePathSpace:
    d: int
    T: float
    n_grid: int
    domain: Domain | None = None

    def __post_init__(self):
        if self.n_grid < 1 or self.d < 1 or not self.T > 0:
            raise ValueError("need d >= 1, n_grid >= 1 and T > 0")
        if self.domain is not None and self.domain.dim != self.d:
            raise ValueError("domain dimension differs from d")

    @property
    def dt_grid(self) -> float:
        return self.T / self.n_grid

    @property
    def times(self) -> np.ndarray:
        return self.dt_grid * np.arange(1, self.n_grid + 1)

    @property
    def cov(self) -> np.ndarray:
        t = self.times
        return np.minimum.outer(t, t)

    @property
    def metric(self) -> np.ndarray:
        return np.linalg.inv(self.cov)

    def increments(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        first = h[..., :1, :]
        return np.concatenate([first, np.diff(h, axis=-2)], axis=-2)

    def cm_inner(self, h, k) -> np.ndarray:
        return np.sum(self.increments(h) * self.increments(k), axis=(-2, -1)) / self.dt_grid

    def cm_norm(self, h) -> np.ndarray:
        return np.sqrt(self.cm_inner(h, h))

    def constraint(self, y) -> np.ndarray:
        """Membership of grid paths in the constraint set, with zero tolerance."""
        y = np.asarray(y, dtype=float)
        if self.domain is None:
            return np.ones(y.shape[:-2], dtype=bool)
        return np.all(self.domain.q(y) >= 0.0, axis=-1)

    def sample_mu(self, z: np.ndarray) -> np.ndarray:
        """Brownian grid paths from standard normals of shape (..., n_grid, d)."""
        return np.cumsum(z, axis=-2) * math.sqrt(self.dt_grid)

    def dual_norm_sq(self, a: np.ndarray) -> float:
        """``|l|_H^2`` for ``l(y) = sum_i <a_i, y_i>``."""
        a = np.asarray(a, dtype=float)
        return float(np.einsum("id,ij,jd->", a, self.cov, a))


# ---------------------------------------------------------------------------
# projection


def _pointwise(domain: Domain):
    """Nearest point of the closure for an array of points (..., d)."""
    if domain.project is not None:
        return domain.project

    def project(p):
        p = np.array(p, dtype=float)
        bad = domain.q(p) < 0
        if np.any(bad):
            p[bad] = nearest_boundary_point(domain, p[bad])
            still = domain.q(p) < 0
            while np.any(still):
                g = np.zeros_like(p[still])
                for k in range(domain.dim):
                    e = np.zeros(domain.dim)
                    e[k] = 1e-9
                    g[:, k] = (domain.q(p[still] + e) - domain.q(p[still] - e)) / 2e-9
                p[still] = p[still] + 1e-15 * g
                still = domain.q(p) < 0
        return p

    return project


def cm_project(space: DiscretePathSpace, y: np.ndarray, tol: float = 1e-13,
               max_sweeps: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    """Metric projection of a batch of grid paths (m, n, d) onto the constraint set.

    Returns ``(projected, converged)``.  The result satisfies the constraint
    exactly: a final pointwise step removes rounding residue of order ``tol``.
    """
    dom = space.domain
    y = np.array(y, dtype=float)
    if dom is None or len(y) == 0:
        return y, np.ones(len(y), dtype=bool)
    proj = _pointwise(dom)
    n = space.n_grid
    ramps = np.minimum.outer(np.arange(1, n + 1), np.arange(1, n + 1)) / np.arange(1, n + 1)
    # ramps[j, i] = min(j, i) / i
    active = np.ones(len(y), dtype=bool)
    converged = np.zeros(len(y), dtype=bool)
    # Fast path: if projecting onto the most violated single-time constraint
    # already lands in the constraint set, that point is the projection onto
    # the intersection (the single-time set contains the intersection).
    qy = dom.q(y)
    worst = np.argmin(qy, axis=1)
    rows = np.arange(len(y))
    yi = y[rows, worst]
    delta = proj(yi) - yi
    trial = y + ramps[:, worst].T[:, :, None] * delta[:, None, :]
    hit = np.all(dom.q(trial) >= 0.0, axis=1)
    y[hit] = trial[hit]
    converged[hit] = True
    active[hit] = False
    # Dykstra over the single-time sets.  Sets never visited keep a zero
    # increment, so only those violated at some point are cycled; at a fixed
    # point that is feasible for all sets the increments certify optimality.
    p = np.zeros((n,) + y.shape)
    used = np.zeros(n, dtype=bool)
    if np.any(active):
        used |= np.any(dom.q(y[active]) < 0, axis=0)
    for _ in range(max_sweeps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[idx]
        before = ya.copy()
        for i in np.flatnonzero(used):
            z = ya + p[i, idx]
            zi = z[:, i, :]
            delta = proj(zi) - zi
            new = z + ramps[:, i][None, :, None] * delta[:, None, :]
            p[i, idx] = z - new
            ya = new
        y[idx] = ya
        qa = dom.q(ya)
        used |= np.any(qa < 0, axis=0)
        change = np.max(np.abs(ya - before), axis=(1, 2))
        viol = np.max(np.maximum(-qa, 0.0), axis=1)
        done = (change <= tol) & (viol <= 10 * tol)
        converged[idx[done]] = True
        active[idx[done]] = False
    # rounding residue
    bad = dom.q(y) < 0
    if np.any(bad):
        y[bad] = proj(y[bad])
    if np.any(dom.q(y) < 0):
        raise ProjectionError("projected path still violates the constraint")
    return y, converged


# ---------------------------------------------------------------------------
# simulation


@dataclass
class ReflectedTrajectory:
    times: np.ndarray
    states: np.ndarray              # (n_steps + 1, n_grid, d)
    local_time: np.ndarray          # (n_steps + 1,)
    corrections: np.ndarray         # (n_steps, n_grid, d), the term sigma dA / 2
    driver: np.ndarray              # (n_steps + 1, n_grid, d), cumulative noise W
    event_steps: np.ndarray         # steps with a positive local-time increment
    normals: np.ndarray             # (n_events, n_grid, d)
    converged: bool
    space: DiscretePathSpace
    dt_sim: float
    method: str = "projection"


def _noise_blocks(seed, first, count, n_steps, shape, block_steps=512):
    """Per-trajectory generators; yields standard normals block by block in time."""
    gens = [_rng.stream(seed, first + k, _rng.PURPOSE_REFLECT) for k in range(count)]
    done = 0
    while done < n_steps:
        m = min(block_steps, n_steps - done)
        yield np.stack([g.standard_normal((m,) + shape) for g in gens], axis=1)
        done += m


def _default_eps(space: DiscretePathSpace, dt_sim: float) -> float:
    lam = float(np.linalg.eigvalsh(space.cov)[-1])
    return 10.0 * dt_sim * lam


def _penalty_correction(space, x, dt_sim, eps):
    """``-G^-1 grad U dt / 2`` for ``U = sum_i dist(y_i, closure)^2 / (2 eps)``."""
    dom = space.domain
    grad = (x - _pointwise(dom)(x.reshape(-1, space.d)).reshape(x.shape)) / eps
    return -0.5 * dt_sim * np.einsum("ij,mjd->mid", space.cov, grad)


def _run(space: DiscretePathSpace, x0, t_end, dt_sim, seed, first, count, method, eps,
         on_step, chunk_check=True):
    n_steps = int(round(t_end / dt_sim))
    if n_steps < 1 or not dt_sim > 0:
        raise ValueError("need dt_sim > 0 and t_end >= dt_sim")
    x0 = np.asarray(x0, dtype=float).reshape(space.n_grid, space.d)
    if not space.constraint(x0):
        raise ValueError("initial path violates the constraint")
    if method not in ("projection", "penalization"):
        raise ValueError(f"unknown method {method!r}")
    if method == "penalization" and eps is None:
        eps = _default_eps(space, dt_sim)
    x = np.broadcast_to(x0, (count, space.n_grid, space.d)).copy()
    sq = math.sqrt(dt_sim)
    step = 0
    ok = np.ones(count, dtype=bool)
    for zblock in _noise_blocks(seed, first, count, n_steps, (space.n_grid, space.d)):
        for z in zblock:
            dB = sq * space.sample_mu(z)
            prop = x + dB - 0.5 * dt_sim * x
            if space.domain is None:
                new = prop
            elif method == "projection":
                viol = ~space.constraint(prop)
                new = prop
                if np.any(viol):
                    new = prop.copy()
                    new[viol], conv = cm_project(space, prop[viol])
                    ok[np.flatnonzero(viol)[~conv]] = False
            else:
                new = prop + _penalty_correction(space, x, dt_sim, eps)
            corr = new - prop
            on_step(step, x, new, dB, corr)
            x = new
            step += 1
    return x, ok


def simulate_rou(space: DiscretePathSpace, x0, t_end: float, dt_sim: float, seed: int,
                 stream: int = 0, method: str = "projection",
                 eps: float | None = None) -> ReflectedTrajectory:
    """One trajectory with every state recorded."""
    n_steps = int(round(t_end / dt_sim))
    shape = (space.n_grid, space.d)
    states = np.empty((n_steps + 1,) + shape)
    driver = np.zeros((n_steps + 1,) + shape)
    corr = np.zeros((n_steps,) + shape)
    states[0] = np.asarray(x0, dtype=float).reshape(shape)

    def on_step(k, x, new, dB, c):
        states[k + 1] = new[0]
        driver[k + 1] = driver[k] + dB[0]
        corr[k] = c[0]

    _, ok = _run(space, x0, t_end, dt_sim, seed, stream, 1, method, eps, on_step)
    norms = space.cm_norm(corr)
    dA = 2.0 * norms
    events = np.flatnonzero(dA > 0)
    normals = corr[events] / norms[events][:, None, None]
    local = np.concatenate([[0.0], np.cumsum(dA)])
    times = dt_sim * np.arange(n_steps + 1)
    return ReflectedTrajectory(times, states, local, corr, driver, events, normals,
                               bool(ok[0]), space, dt_sim, method)


def reconstruct_lw(traj: ReflectedTrajectory, a) -> np.ndarray:
    """``l(W_t)`` from the identity
    ``l(W_t) = l(X_t) - l(X_0) + 1/2 int l(X_s) ds - 1/2 int <l, sigma>_H dA``."""
    a = np.asarray(a, dtype=float)
    lx = np.einsum("kid,id->k", traj.states, a)
    drift = 0.5 * traj.dt_sim * np.concatenate([[0.0], np.cumsum(lx[:-1])])
    refl = np.concatenate([[0.0], np.cumsum(np.einsum("kid,id->k", traj.corrections, a))])
    return lx - lx[0] + drift - refl


def identity_residual(traj: ReflectedTrajectory) -> float:
    """Largest per-step mismatch of ``X_{k+1} - X_k = dW - X_k dt/2 + sigma dA/2``."""
    dX = np.diff(traj.states, axis=0)
    dW = np.diff(traj.driver, axis=0)
    rhs = dW - 0.5 * traj.dt_sim * traj.states[:-1] + traj.corrections
    return float(np.max(np.abs(dX - rhs))) if len(dX) else 0.0


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleSummary:
    space: DiscretePathSpace
    n_traj: int
    t_end: float
    dt_sim: float
    directions: np.ndarray                  # (n_dir, n_grid, d)
    qv: np.ndarray                          # (n_traj, n_dir) realised quadratic variation
    lw_checkpoints: np.ndarray              # (n_traj, n_ckpt + 1, n_dir)
    checkpoint_times: np.ndarray
    final_states: np.ndarray                # (n_traj, n_grid, d)
    local_time: np.ndarray                  # (n_traj,)
    n_events: int
    single_touch: int
    zero_touch: int
    max_sigma_error: float
    max_identity_residual: float
    violations: int
    converged: bool
    method: str
    extra: dict = field(default_factory=dict)


def simulate_ensemble(space: DiscretePathSpace, x0, t_end: float, dt_sim: float, seed: int,
                      n_traj: int, directions, n_checkpoints: int = 50, chunk: int = 500,
                      method: str = "projection", eps: float | None = None,
                      touch_tol: float = 1e-9) -> EnsembleSummary:
    """Many independent trajectories, reduced on the fly to the statistics
    used by :func:`check_decomposition` and :func:`check_reflection_locus`.

    Trajectory ``k`` uses noise stream ``k``, so results do not depend on
    ``chunk``.
    """
    dirs = np.asarray(directions, dtype=float).reshape(-1, space.n_grid, space.d)
    n_steps = int(round(t_end / dt_sim))
    every = max(1, n_steps // n_checkpoints)
    ck_steps = np.arange(0, n_steps + 1, every)
    qv = np.zeros((n_traj, len(dirs)))
    lw = np.zeros((n_traj, len(ck_steps), len(dirs)))
    finals = np.empty((n_traj, space.n_grid, space.d))
    local = np.zeros(n_traj)
    stats_ = {"events": 0, "single": 0, "zero": 0, "sig": 0.0, "ident": 0.0, "viol": 0}
    all_ok = True
    x0a = np.asarray(x0, dtype=float).reshape(space.n_grid, space.d)
    for first in range(0, n_traj, chunk):
        count = min(chunk, n_traj - first)
        sl = slice(first, first + count)
        cur_lw = np.zeros((count, len(dirs)))

        def on_step(k, x, new, dB, c):
            # increment of l(W) rebuilt from the states and the correction
            lx, lnew = np.einsum("mid,rid->mr", x, dirs), np.einsum("mid,rid->mr", new, dirs)
            lc = np.einsum("mid,rid->mr", c, dirs)
            inc = lnew - lx + 0.5 * dt_sim * lx - lc
            qv[sl] += inc * inc
            cur_lw[:] += inc
            if (k + 1) % every == 0 and (k + 1) // every < len(ck_steps):
                lw[sl, (k + 1) // every] = cur_lw
            resid = np.max(np.abs(new - x - (dB - 0.5 * dt_sim * x + c)))
            stats_["ident"] = max(stats_["ident"], float(resid))
            if space.domain is None:
                return
            stats_["viol"] += int(np.count_nonzero(~space.constraint(new)))
            norms = space.cm_norm(c)
            ev = norms > 0
            if np.any(ev):
                local[sl][ev] += 2.0 * norms[ev]
                sig = c[ev] / norms[ev][:, None, None]
                stats_["sig"] = max(stats_["sig"], float(np.max(np.abs(space.cm_norm(sig) - 1))))
                touches = np.count_nonzero(np.abs(space.domain.q(new[ev])) <= touch_tol, axis=1)
                stats_["events"] += int(ev.sum())
                stats_["single"] += int(np.count_nonzero(touches == 1))
                stats_["zero"] += int(np.count_nonzero(touches == 0))

        xf, ok = _run(space, x0a, t_end, dt_sim, seed, first, count, method, eps, on_step)
        finals[sl] = xf
        all_ok &= bool(ok.all())
    return EnsembleSummary(space, n_traj, t_end, dt_sim, dirs, qv, lw, ck_steps * dt_sim,
                           finals, local, stats_["events"], stats_["single"], stats_["zero"],
                           stats_["sig"], stats_["ident"], stats_["viol"], all_ok, method,
                           {"eps": eps})


# ---------------------------------------------------------------------------
# checks


@dataclass
class DecompositionReport:
    direction: list
    qv_ratio: float
    qv_pass: bool
    ad_statistic: float
    ad_critical_1pct: float
    normal_pass: bool
    lag1_corr: float
    lag1_z: float
    uncorrelated_pass: bool
    n_increments: int

    @property
    def passed(self) -> bool:
        return self.qv_pass and self.normal_pass and self.uncorrelated_pass


def _ad_1pct(sample: np.ndarray) -> tuple[float, float]:
    res = stats.anderson(sample, dist="norm")
    crit = dict(zip(res.significance_level, res.critical_values))[1.0]
    return float(res.statistic), float(crit)


def check_decomposition(result, a, qv_tol: float = 0.05, min_increments: int = 50,
                        level: float = 0.99) -> DecompositionReport:
    """Brownian checks on ``l(W)`` for ``l(y) = sum_i <a_i, y_i>``.

    Accepts a single :class:`ReflectedTrajectory` or an :class:`EnsembleSummary`
    (whose directions must contain ``a``).  (i) realised quadratic variation
    over ``t |l|_H^2`` within ``qv_tol`` of 1; (ii) Anderson-Darling on the
    standardised increments over disjoint intervals does not reject at 1%,
    and their lag-1 correlation is not significant at ``level``.
    """
    a = np.asarray(a, dtype=float)
    if isinstance(result, ReflectedTrajectory):
        space = result.space
        norm2 = space.dual_norm_sq(a)
        lw = reconstruct_lw(result, a)
        inc = np.diff(lw)
        if inc.size < min_increments:
            raise ValueError("trajectory too short for the statistical tests")
        ratio = float(np.sum(inc * inc) / (result.times[-1] * norm2))
        z = inc / math.sqrt(result.dt_sim * norm2)
        pairs = (z[:-1], z[1:])
    else:
        space = result.space
        norm2 = space.dual_norm_sq(a)
        match = [k for k, dv in enumerate(result.directions) if np.allclose(dv, a)]
        if not match:
            raise ValueError("direction not recorded in the ensemble")
        r = match[0]
        ratio = float(result.qv[:, r].sum() / (result.n_traj * result.t_end * norm2))
        ck = result.lw_checkpoints[:, :, r]
        h = np.diff(result.checkpoint_times)
        zz = np.diff(ck, axis=1) / np.sqrt(h * norm2)
        if zz.size < min_increments:
            raise ValueError("ensemble too small for the statistical tests")
        # one increment per trajectory for the normality test keeps the sample iid
        z = zz[:, 0] if zz.shape[0] >= min_increments else zz.ravel()
        pairs = (zz[:, :-1].ravel(), zz[:, 1:].ravel())
    stat, crit = _ad_1pct(z)
    x, y = pairs
    rho = float(np.corrcoef(x, y)[0, 1]) if x.size > 2 else 0.0
    zstat = rho * math.sqrt(x.size)
    zcrit = float(stats.norm.ppf(0.5 + level / 2))
    return DecompositionReport([float(v) for v in a.ravel()], ratio, abs(ratio - 1) <= qv_tol,
                               stat, crit, stat < crit, rho, zstat, abs(zstat) < zcrit, int(z.size))


@dataclass
class LocusReport:
    n_events: int
    single_touch: int
    zero_touch: int
    fraction: float
    passed: bool


def check_reflection_locus(result, domain: Domain | None = None, tol: float = 1e-9,
                           threshold: float = 0.99) -> LocusReport:
    """Share of reflection events at which exactly one grid time touches the boundary."""
    if isinstance(result, EnsembleSummary):
        n, one, zero = result.n_events, result.single_touch, result.zero_touch
    else:
        domain = domain or result.space.domain
        if domain is None or len(result.event_steps) == 0:
            n, one, zero = 0, 0, 0
        else:
            st = result.states[result.event_steps + 1]
            touches = np.count_nonzero(np.abs(domain.q(st)) <= tol, axis=1)
            n = len(touches)
            one = int(np.count_nonzero(touches == 1))
            zero = int(np.count_nonzero(touches == 0))
    frac = 1.0 if n == 0 else one / n
    return LocusReport(n, one, zero, frac, frac >= threshold)


def count_touches(domain: Domain, state: np.ndarray, tol: float = 1e-9) -> int:
    """Number of grid times of one path lying on the boundary within ``tol``."""
    return int(np.count_nonzero(np.abs(domain.q(np.asarray(state))) <= tol))


def ou_marginal(space: DiscretePathSpace, x0, t: float):
    """Mean and per-coordinate covariance of the free process at time ``t``."""
    x0 = np.asarray(x0, dtype=float).reshape(space.n_grid, space.d)
    return x0 * math.exp(-t / 2), (1 - math.exp(-t)) * space.cov


def check_ou_marginal(summary: EnsembleSummary, x0, n_se: float = 3.0) -> dict:
    """Compare final states of an unconstrained ensemble with the OU marginal.

    Checks the mean of every coordinate and the variance of every grid value
    and of each recorded direction, each within ``n_se`` standard errors.
    """
    space = summary.space
    mean, cov = ou_marginal(space, x0, summary.t_end)
    X = summary.final_states
    n = X.shape[0]
    emp_mean = X.mean(axis=0)
    var_diag = np.diag(cov)[:, None] * np.ones(space.d)
    mean_z = (emp_mean - mean) / np.sqrt(var_diag / n)
    c = X - X.mean(axis=0)
    emp_var = (c ** 2).sum(axis=0) / (n - 1)
    # Gaussian: sd of the sample variance is var * sqrt(2 / (n - 1))
    var_z = (emp_var - var_diag) / (var_diag * math.sqrt(2.0 / (n - 1)))
    dir_z = []
    for a in summary.directions:
        v = space.dual_norm_sq(a) * (1 - math.exp(-summary.t_end))
        la = np.einsum("mid,id->m", X, a)
        m = float(np.einsum("id,id->", mean, a))
        dir_z.append(((la.mean() - m) / math.sqrt(v / n),
                      (la.var(ddof=1) - v) / (v * math.sqrt(2.0 / (n - 1)))))
    worst = max(float(np.max(np.abs(mean_z))), float(np.max(np.abs(var_z))),
                max((max(abs(u), abs(w)) for u, w in dir_z), default=0.0))
    return {"max_abs_z": worst, "mean_z": mean_z, "var_z": var_z, "direction_z": dir_z,
            "passed": worst <= n_se}


def compare_methods(space: DiscretePathSpace, x0, t_end: float, dt_sim: float, seed: int,
                    n_traj: int, eps: float | None = None) -> dict:
    """Run projection and penalisation on the same noise and report how far apart they end."""
    directions = np.zeros((1, space.n_grid, space.d))
    directions[0, -1, 0] = 1.0
    a = simulate_ensemble(space, x0, t_end, dt_sim, seed, n_traj, directions,
                          method="projection")
    b = simulate_ensemble(space, x0, t_end, dt_sim, seed, n_traj, directions,
                          method="penalization", eps=eps)
    gap = np.max(np.abs(a.final_states - b.final_states), axis=(1, 2))
    return {"mean_final_gap": float(gap.mean()), "max_final_gap": float(gap.max()),
            "local_time_projection": float(a.local_time.mean()),
            "local_time_penalization": float(b.local_time.mean()),
            "penalization_violations": int(b.violations), "eps": b.extra["eps"]
            if b.extra["eps"] is not None else _default_eps(space, dt_sim)}
