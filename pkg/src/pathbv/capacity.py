"""Riesz and logarithmic capacities of compact sets from point clouds.

The capacity of ``A`` is ``1 / inf_lambda E(lambda)`` over probability
measures on ``A``.  A cloud ``x_1, ..., x_n`` is read as a union of small
``k``-dimensional balls of radius ``rho_i`` (``k`` the intrinsic dimension of
the set), so the discrete energy

    E(lambda) = sum_{i != j} g(|x_i - x_j|) lambda_i lambda_j + sum_i s_i lambda_i^2

carries a self-energy ``s_i``: the mean kernel value between two uniform
points of the ``i``-th ball.  Without it the minimum over the simplex sits
at a vertex with energy zero.  With ``rho_i`` proportional to the
nearest-neighbour spacing the kernel matrix is positive definite on the
clouds used here and the minimisation is a convex quadratic program over the
simplex, solved by pairwise conditional gradient with exact line search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from . import rng as _rng
from .geometry import Domain, read_points_csv, singular_set

# rho_i = SELF_RADIUS_FACTOR * (nearest-neighbour distance of x_i)
SELF_RADIUS_FACTOR = 0.525


@dataclass(frozen=True)
class RieszKernel:
    """``g(t) = t^-beta`` for ``beta > 0`` and ``max(log(1/t), 1)`` for ``beta = 0``."""

    beta: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.beta < 0:
            raise ValueError("the kernel is not used for negative beta")
        with np.errstate(divide="ignore"):
            if self.beta == 0:
                return np.maximum(-np.log(t), 1.0)
            return t ** (-self.beta)


def riesz_energy(points, weights, kernel: RieszKernel) -> float:
    """Off-diagonal discrete energy ``sum_{i != j} g(|x_i - x_j|) w_i w_j``.

    Coincident points that both carry weight give ``inf``.  A single point has
    energy 0, see :func:`is_degenerate`.
    """
    x = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    _check_simplex(w, len(x))
    if len(x) == 1:
        return 0.0
    D = squareform(pdist(x))
    np.fill_diagonal(D, np.inf)
    pos = w > 0
    if np.any(D[np.ix_(pos, pos)] == 0):
        return math.inf
    K = kernel(np.where(np.isinf(D), 1.0, D))
    np.fill_diagonal(K, 0.0)
    return float(w @ K @ w)


def is_degenerate(points, weights) -> bool:
    """True when all weight sits on one point, where the off-diagonal energy vanishes."""
    w = np.asarray(weights, dtype=float)
    return len(np.atleast_2d(points)) < 2 or int(np.count_nonzero(w > 0)) < 2


def _check_simplex(w, n):
    if w.shape != (n,):
        raise ValueError("weights and points differ in length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must lie on the probability simplex")


# ---------------------------------------------------------------------------
# self-energy of a small ball


def ball_distance_density(t, k: int):
    """Density of ``|X - Y|`` for ``X, Y`` independent uniform in the unit ``k``-ball."""
    t = np.asarray(t, dtype=float)
    inside = (t > 0) & (t < 2)
    tt = np.where(inside, t, 1.0)
    val = k * tt ** (k - 1) * special.betainc((k + 1) / 2, 0.5, 1 - tt * tt / 4)
    return np.where(inside, val, 0.0)


@lru_cache(maxsize=None)
def _unit_moment(beta: float, k: int) -> float:
    """E |X - Y|^-beta in the unit k-ball (finite for beta < k)."""
    if beta >= k:
        return math.inf
    val, _ = integrate.quad(lambda t: t ** (-beta) * ball_distance_density(t, k), 0.0, 2.0,
                            limit=200)
    return val


def _log_moment(rho: float, k: int) -> float:
    """E max(log(1/(rho |X - Y|)), 1) in the unit k-ball."""
    cut = 1.0 / (math.e * rho)   # below this distance the log branch applies

    def f(t):
        return max(-math.log(rho * t), 1.0) * float(ball_distance_density(t, k))

    pts = [cut] if 0 < cut < 2 else None
    val, _ = integrate.quad(f, 0.0, 2.0, points=pts, limit=200)
    return val


def self_energy(kernel: RieszKernel, rho, k: int) -> np.ndarray:
    """Mean of ``g(|X - Y|)`` for ``X, Y`` uniform in a ``k``-ball of radius ``rho``."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if kernel.beta > 0:
        return rho ** (-kernel.beta) * _unit_moment(float(kernel.beta), int(k))
    return np.array([_log_moment(float(r), int(k)) for r in rho])


def intrinsic_dimension(points) -> int:
    """Two-nearest-neighbour estimate of the dimension of the sampled set, rounded."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = x.shape
    if n < 20:
        return d
    dist, _ = cKDTree(x).query(x, k=3)
    r1, r2 = dist[:, 1], dist[:, 2]
    ok = (r1 > 0) & (r2 > r1)
    mu = np.log(r2[ok] / r1[ok])
    if mu.size == 0:
        return d
    est = mu.size / mu.sum()
    return int(min(d, max(1, round(est))))


def self_radii(points, factor: float = SELF_RADIUS_FACTOR) -> np.ndarray:
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if len(x) < 2:
        raise ValueError("at least two points are needed for nearest-neighbour radii")
    dist, _ = cKDTree(x).query(x, k=2)
    nn = dist[:, 1]
    if np.any(nn == 0):
        raise ValueError("point cloud contains coincident points")
    return factor * nn


def kernel_matrix(points, kernel: RieszKernel, intrinsic_dim: int | None = None,
                  radius=None) -> np.ndarray:
    """Full matrix with off-diagonal kernel values and self-energies on the diagonal."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    k = intrinsic_dimension(x) if intrinsic_dim is None else int(intrinsic_dim)
    rho = self_radii(x) if radius is None else np.broadcast_to(
        np.asarray(radius, dtype=float), (len(x),))
    D = squareform(pdist(x))
    np.fill_diagonal(D, 1.0)
    K = kernel(D)
    np.fill_diagonal(K, self_energy(kernel, rho, k))
    return K


# ---------------------------------------------------------------------------
# minimisation


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200_000
    intrinsic_dim: int | None = None
    radius: float | np.ndarray | None = None


@dataclass
class EquilibriumSolution:
    weights: np.ndarray
    energy: float
    capacity: float
    iterations: int
    gap: float
    converged: bool
    intrinsic_dim: int
    history: list = field(default_factory=list, repr=False)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def minimize_quadratic(K: np.ndarray, tol: float = 1e-10, max_iter: int = 200_000,
                       record: bool = False):
    """Minimise ``w^T K w`` over the simplex.

    Pairwise conditional gradient: move mass from the active coordinate with
    the largest gradient to the coordinate with the smallest, with exact
    line search.  A direction of non-positive curvature (possible only if
    ``K`` is indefinite) switches to projected gradient.
    Returns ``(w, energy, iterations, gap, converged, history)``.
    """
    n = K.shape[0]
    w = np.full(n, 1.0 / n)
    Kw = K @ w
    energy = float(w @ Kw)
    history = [energy] if record else []
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        i = int(np.argmin(Kw))
        active = np.flatnonzero(w > 0)
        j = int(active[np.argmax(Kw[active])])
        gap = 2.0 * (energy - Kw[i])
        if gap <= tol:
            break
        col = K[:, i] - K[:, j]
        slope = Kw[i] - Kw[j]          # half the directional derivative
        curv = col[i] - col[j]         # d^T K d for d = e_i - e_j
        if curv <= 0:
            return _projected_gradient(K, w, tol, max_iter - it, history, it)
        step = min(w[j], -slope / curv)
        w[i] += step
        w[j] -= step
        w[j] = max(w[j], 0.0)
        Kw += step * col
        energy = float(w @ Kw)
        if record:
            history.append(energy)
    else:
        it = max_iter
    w /= w.sum()
    Kw = K @ w
    energy = float(w @ Kw)
    gap = 2.0 * (energy - float(Kw.min()))
    return w, energy, it, gap, gap <= tol, history


def _projected_gradient(K, w, tol, max_iter, history, it0):
    L = 2.0 * float(np.linalg.eigvalsh(K)[-1])
    energy = float(w @ K @ w)
    gap = math.inf
    it = 0
    for it in range(1, max(max_iter, 1) + 1):
        Kw = K @ w
        gap = 2.0 * (float(w @ Kw) - float(Kw.min()))
        if gap <= tol:
            break
        w = _project_simplex(w - 2.0 * Kw / L)
        energy = float(w @ K @ w)
        history.append(energy)
    return w, energy, it0 + it, gap, gap <= tol, history


def minimize_energy(points, kernel: RieszKernel, opts: SolverOptions | None = None,
                    record: bool = False) -> EquilibriumSolution:
    """Equilibrium weights and capacity of a point cloud."""
    opts = opts or SolverOptions()
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two points")
    k = intrinsic_dimension(x) if opts.intrinsic_dim is None else int(opts.intrinsic_dim)
    K = kernel_matrix(x, kernel, k, opts.radius)
    if not np.all(np.isfinite(np.diag(K))):
        # beta >= intrinsic dimension: every measure has infinite energy
        n = len(x)
        return EquilibriumSolution(np.full(n, 1.0 / n), math.inf, 0.0, 0, 0.0, True, k)
    w, energy, it, gap, ok, hist = minimize_quadratic(K, opts.tol, opts.max_iter, record)
    cap = 1.0 / energy if energy > 0 else math.inf
    return EquilibriumSolution(w, energy, cap, it, gap, ok, k, hist)


def quadratic_energy(points, weights, kernel: RieszKernel, intrinsic_dim: int | None = None,
                     radius=None) -> float:
    """The full objective of :func:`minimize_energy` at given weights."""
    K = kernel_matrix(points, kernel, intrinsic_dim, radius)
    w = np.asarray(weights, dtype=float)
    return float(w @ K @ w)


# ---------------------------------------------------------------------------
# catalog sets


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return radius * np.c_[np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]


def _grid_cube(d, k, n, side, offset):
    per = max(2, int(round(n ** (1.0 / k))))
    axes = [np.linspace(-side / 2, side / 2, per)] * k
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    pts = np.zeros((len(g), d))
    pts[:, :k] = g
    return pts + offset


@dataclass(frozen=True)
class PointSet:
    name: str
    points: np.ndarray
    intrinsic_dim: int | None


def discretize(set_id: str, resolution: int, seed: int = 0) -> PointSet:
    """A cloud of about ``resolution`` points for a catalog set.

    ``empty``; ``sphere:d=3,R=1`` (Fibonacci points); ``circle:R=1``;
    ``singleton:d=4`` (the point ``e_d`` seen through ``n`` points in a ball
    of radius ``1/n`` around it); ``cube:d=5,k=2,side=1`` (a ``k``-dimensional
    square grid in R^d); ``csv:<path>``.
    """
    kind, _, rest = set_id.partition(":")
    if kind == "csv":
        pts = read_points_csv(rest.strip())
        return PointSet(set_id, pts, None)
    kw = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = item.partition("=")
        kw[key] = float(val)
    n = int(resolution)
    if kind == "empty":
        return PointSet(set_id, np.zeros((0, int(kw.get("d", 1)))), None)
    if kind == "sphere":
        if int(kw.get("d", 3)) != 3:
            raise KeyError("sphere sets are available for d=3")
        return PointSet(set_id, fibonacci_sphere(n, kw.get("R", 1.0)), 2)
    if kind == "circle":
        a = 2 * np.pi * (np.arange(n) + 0.5) / n
        R = kw.get("R", 1.0)
        return PointSet(set_id, R * np.c_[np.cos(a), np.sin(a)], 1)
    if kind == "singleton":
        d = int(kw.get("d", 4))
        centre = np.zeros(d)
        centre[-1] = 1.0
        gen = _rng.stream(seed, n, _rng.PURPOSE_CLOUD)
        v = gen.standard_normal((n, d))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        rad = gen.random(n) ** (1.0 / d) / n
        return PointSet(set_id, centre + v * rad[:, None], d)
    if kind == "cube":
        d, k = int(kw.get("d", 5)), int(kw.get("k", 2))
        return PointSet(set_id, _grid_cube(d, k, n, kw.get("side", 1.0), 0.0), k)
    raise KeyError(f"unknown set id {set_id!r}")


def capacity_value(set_id: str, beta: float, resolution: int,
                   opts: SolverOptions | None = None, seed: int = 0) -> float:
    """Cap_beta of a catalog set at the given resolution."""
    ps = discretize(set_id, resolution, seed)
    if len(ps.points) == 0:
        return 0.0
    if beta < 0:
        return 1.0
    if len(ps.points) == 1:
        return 0.0
    opts = opts or SolverOptions()
    if opts.intrinsic_dim is None and ps.intrinsic_dim is not None:
        opts = SolverOptions(opts.tol, opts.max_iter, ps.intrinsic_dim, opts.radius)
    return minimize_energy(ps.points, RieszKernel(beta), opts).capacity


# ---------------------------------------------------------------------------
# condition on the singular set


@dataclass
class SingularCapacityReport:
    domain: str
    beta: float
    radii: list
    sizes: list
    diameters: list
    capacities: list
    energies: list
    verdict: str
    reason: str

    def as_dict(self):
        return {k: getattr(self, k) for k in ("domain", "beta", "radii", "sizes", "diameters",
                                              "capacities", "energies", "verdict", "reason")}


def _thin(points: np.ndarray, max_points: int) -> np.ndarray:
    if len(points) <= max_points:
        return points
    idx = np.linspace(0, len(points) - 1, max_points).round().astype(int)
    return points[idx]


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(pdist(points).max())


def check_singular_capacity(domain: Domain, schedule, seed: int = 0, max_points: int = 1024,
                      opts: SolverOptions | None = None, stable_tol: float = 0.10,
                      zero_ratio: float = 1e-2) -> SingularCapacityReport:
    """Track ``Cap_{d-4}`` of sampled singular sets along ``schedule``.

    ``schedule`` is a sequence of ``(r, n_samples)`` with ``r`` decreasing and
    ``n_samples`` increasing.  Verdicts:

    * ``d < 4``: holds iff every approximation is empty.
    * ``d >= 4``: "holds" if all approximations are empty, or the capacities
      decrease along the schedule and either the last is below
      ``zero_ratio`` times the first, or the energies are explained by a
      kernel term ``a + b g(diam)`` that diverges as the set shrinks (the fitted
      divergent part carries at least half of the last energy).  "fails" if the
      last two capacities agree within ``stable_tol`` and the sets do not
      shrink.  Otherwise "inconclusive".
    """
    d = domain.dim
    beta = d - 4.0
    radii, sizes, diams, caps, energies = [], [], [], [], []
    for k, (r, n) in enumerate(schedule):
        approx = singular_set(domain, float(r), int(n), seed + k)
        pts = approx.points
        radii.append(float(r))
        sizes.append(int(len(pts)))
        diams.append(_diameter(pts))
        if beta < 0 or len(pts) == 0:
            caps.append(1.0 if len(pts) else 0.0)
            energies.append(1.0 if len(pts) else math.inf)
            continue
        if len(pts) == 1:
            caps.append(0.0)
            energies.append(math.inf)
            continue
        # the singular set is relatively open in the hypersurface for r > 0
        o = opts or SolverOptions(tol=1e-8, intrinsic_dim=d - 1)
        sol = minimize_energy(_thin(pts, max_points), RieszKernel(beta), o)
        caps.append(sol.capacity)
        energies.append(sol.energy)
    name = domain.name
    if all(s == 0 for s in sizes):
        return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "holds",
                                "singular set empty along the schedule")
    if beta < 0:
        return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "fails",
                                "nonempty singular set with Cap = 1 for negative beta")
    c = np.asarray(caps)
    decreasing = bool(np.all(np.diff(c) <= 1e-12))
    if decreasing and c[-1] <= zero_ratio * c[0]:
        return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "holds",
                                "capacity fell below the zero threshold")
    kern = RieszKernel(beta)
    dm = np.asarray(diams)
    finite = np.isfinite(energies) & (dm > 0)
    g = kern(dm[finite])
    E = np.asarray(energies)[finite]
    divergent = False
    if decreasing and len(E) >= 3 and g.max() > 1.5 * g.min():
        A = np.c_[np.ones_like(g), g]
        (a, b), *_ = np.linalg.lstsq(A, E, rcond=None)
        divergent = b > 0 and b * g[-1] >= 0.5 * E[-1]
    if divergent:
        return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "holds",
                                "energy grows with the kernel at the shrinking diameter")
    rel = abs(c[-1] - c[-2]) / max(c[-1], c[-2]) if len(c) >= 2 else math.inf
    if rel <= stable_tol and dm[-1] >= 0.5 * dm[0]:
        return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "fails",
                                "capacity stable under refinement")
    return SingularCapacityReport(name, beta, radii, sizes, diams, caps, energies, "inconclusive",
                            "no trend decided along the schedule")
