"""Open sets in R^d described by signed distance, exterior-ball radii,
singular boundary sets and the tubes around them.

``q(x) = dist(x, O^c) - dist(x, O)`` is positive inside ``O``, zero on the
boundary and negative outside the closure.  Catalog domains evaluate ``q`` in
closed form; a domain read from a CSV of boundary points approximates it from
the samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import rng as _rng

Array = np.ndarray


class DimensionError(ValueError):
    """Point dimension does not match the domain."""


class BoundaryError(ValueError):
    """A point that should lie on the boundary does not, or no sampler exists."""


@dataclass(frozen=True)
class Domain:
    """An open set ``O`` with ``0 in O``.

    ``sdf`` maps an array of shape ``(..., dim)`` to ``q`` values of shape
    ``(...)``.  ``sampler(count, generator)`` returns points on the boundary.
    ``project`` (optional) maps points to a nearest point of the closure and
    is only supplied where that map is single valued.  ``scale`` is a
    characteristic length: the diameter for bounded domains.
    """

    name: str
    dim: int
    sdf: Callable[[Array], Array]
    sampler: Callable[[int, np.random.Generator], Array] | None = None
    convex: bool = False
    scale: float = 1.0
    project: Callable[[Array], Array] | None = None
    tolerance: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not float(self.sdf(np.zeros(self.dim))) > 0:
            raise ValueError(f"domain {self.name!r} must contain the origin")

    @property
    def contains_origin(self) -> bool:
        return True

    def q(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return self.sdf(x)

    def boundary_sample(self, count: int, seed: int) -> Array:
        if self.sampler is None:
            raise BoundaryError(f"domain {self.name!r} has no boundary sampler")
        gen = _rng.stream(seed, 0, _rng.PURPOSE_BOUNDARY)
        return np.asarray(self.sampler(int(count), gen), dtype=float).reshape(-1, self.dim)

    def inside_closure(self, x) -> Array:
        return self.q(x) >= 0.0


def signed_distance(domain: Domain, x) -> Array | float:
    """q(x) for a point or an array of points."""
    val = domain.q(x)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# helpers


def _norm(x: Array) -> Array:
    return np.sqrt(np.sum(x * x, axis=-1))


def _unit_vectors(gen: np.random.Generator, count: int, dim: int) -> Array:
    v = gen.standard_normal((count, dim))
    n = _norm(v)
    n[n == 0] = 1.0
    return v / n[:, None]


def _seg_dist(p: Array, a: Array, b: Array) -> Array:
    """Distance from 2-d points ``p`` (..., 2) to the segment [a, b]."""
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    closest = a + t[..., None] * ab
    return _norm(p - closest)


def _nudge_inside(sdf, x: Array, y: Array) -> Array:
    """Shrink ``y`` towards the origin until ``sdf(y) >= 0`` exactly.

    Pointwise projections onto a sphere land on it only up to rounding; the
    constraint oracle is tested with zero tolerance downstream.
    """
    y = np.array(y, dtype=float)
    bad = sdf(y) < 0
    factor = 1.0
    while np.any(bad):
        factor *= 1.0 - 4 * np.finfo(float).eps
        y[bad] = y[bad] * (1.0 - 4 * np.finfo(float).eps)
        bad = sdf(y) < 0
        if factor < 1 - 1e-9:
            raise RuntimeError("could not move projected point inside the closure")
    return y


# ---------------------------------------------------------------------------
# catalog


def ball(d: int, r: float = 1.0) -> Domain:
    """Open ball of radius ``r`` centred at the origin."""
    r = float(r)

    def sdf(x):
        return r - _norm(x)

    def sampler(count, gen):
        return r * _unit_vectors(gen, count, d)

    def project(x):
        x = np.asarray(x, dtype=float)
        n = _norm(x)
        # shrink by a few ulps so the result is inside despite rounding
        scale = np.where(n > r, (r / np.where(n > 0, n, 1.0)) * (1 - 4 * np.finfo(float).eps), 1.0)
        return _nudge_inside(sdf, x, x * scale[..., None])

    return Domain(f"ball:d={d},r={r:g}", d, sdf, sampler, convex=True, scale=2 * r,
                  project=project, params={"d": d, "r": r})


def halfspace(d: int, level: float = 1.0) -> Domain:
    """``{x : x_1 < level}``; in one dimension the half-line ``(-inf, level)``."""
    level = float(level)

    def sdf(x):
        return level - x[..., 0]

    def sampler(count, gen):
        pts = np.zeros((count, d))
        pts[:, 0] = level
        if d > 1:
            pts[:, 1:] = gen.uniform(-2.0, 2.0, (count, d - 1)) * max(level, 1.0)
        return pts

    def project(x):
        y = np.array(x, dtype=float)
        y[..., 0] = np.minimum(y[..., 0], level)
        return y

    return Domain(f"halfspace:d={d},level={level:g}", d, sdf, sampler, convex=True,
                  scale=2 * level, project=project, params={"d": d, "level": level})


def box(d: int, h: float = 1.0) -> Domain:
    """Open cube ``(-h, h)^d``."""
    h = float(h)

    def sdf(x):
        a = np.abs(x) - h
        outside = _norm(np.maximum(a, 0.0))
        inside = np.minimum(np.max(a, axis=-1), 0.0)
        return -(outside + inside)

    def sampler(count, gen):
        pts = gen.uniform(-h, h, (count, d))
        face = gen.integers(0, d, count)
        sign = np.where(gen.random(count) < 0.5, -h, h)
        pts[np.arange(count), face] = sign
        return pts

    def project(x):
        return np.clip(np.asarray(x, dtype=float), -h, h)

    return Domain(f"box:d={d},h={h:g}", d, sdf, sampler, convex=True,
                  scale=2 * h * math.sqrt(d), project=project, params={"d": d, "h": h})


def notch(c: float = 1.0, extent: float = 4.0) -> Domain:
    """The plane with the closed quadrant ``[c, inf) x [c, inf)`` removed.

    The corner ``(c, c)`` is a re-entrant boundary point with exterior-ball
    radius 0; an edge point at distance ``s`` from the corner has radius
    ``s``.  The sampler covers both edges up to length ``extent``.
    """
    c = float(c)

    def sdf(x):
        u = x[..., 0] - c
        v = x[..., 1] - c
        outside = np.sqrt(np.maximum(-u, 0.0) ** 2 + np.maximum(-v, 0.0) ** 2)
        depth = np.minimum(u, v)
        return np.where((u >= 0) & (v >= 0), -depth, outside)

    def sampler(count, gen):
        s = gen.uniform(0.0, 2 * extent, count)
        pts = np.full((count, 2), c)
        first = s < extent
        pts[first, 1] += s[first]
        pts[~first, 0] += s[~first] - extent
        return pts

    return Domain(f"notch:d=2,c={c:g}", 2, sdf, sampler, convex=False,
                  scale=2 * extent, params={"d": 2, "c": c, "extent": extent})


def _cone_geometry(slope: float):
    """Rim of the spike ``{rho <= slope * (z - 1)}`` on the sphere of radius 2."""
    k = slope
    z_rim = (k * k + math.sqrt(3 * k * k + 4)) / (1 + k * k)
    rho_rim = k * (z_rim - 1.0)
    return rho_rim, z_rim


def example_spike(d: int = 4, slope: float = 1.0, s_min: float = 1e-6,
                  cone_fraction: float = 0.5) -> Domain:
    """``B(0,2)`` minus the inward spike ``{x_d in [1,2), phi(x_d) >= |x'|}``
    with ``phi(t) = slope * (t - 1)``.

    The domain is rotationally symmetric about the last axis, so ``q`` is
    computed exactly in the meridian half-plane ``(rho, z) = (|x'|, x_d)``:
    the boundary there is one slanted segment plus the part of the circle of
    radius 2 outside the spike.  The only point with zero exterior-ball
    radius is the spike tip ``(0, ..., 0, 1)``.

    The sampler puts ``cone_fraction`` of the points on the spike surface
    with log-uniform distance to the tip (down to ``s_min``) so that small
    neighbourhoods of the tip are populated; the rest are uniform on the
    spherical part.
    """
    if d < 2:
        raise ValueError("example-spike needs d >= 2")
    slope = float(slope)
    rho_rim, z_rim = _cone_geometry(slope)
    apex = np.array([0.0, 1.0])
    rim = np.array([rho_rim, z_rim])
    theta_rim = math.atan2(rho_rim, z_rim)

    def sdf(x):
        rho = _norm(x[..., :-1]) if d > 1 else np.zeros(x.shape[:-1])
        z = x[..., -1]
        p = np.stack([rho, z], axis=-1)
        r = np.sqrt(rho * rho + z * z)
        theta = np.arctan2(rho, z)
        arc = np.where(theta >= theta_rim, np.abs(r - 2.0), _norm(p - rim))
        dist = np.minimum(arc, _seg_dist(p, apex, rim))
        in_spike = (z >= 1.0) & (z < 2.0) & (rho <= slope * (z - 1.0))
        inside = (r < 2.0) & ~in_spike
        return np.where(inside, dist, -dist)

    s_max = float(np.hypot(rho_rim, z_rim - 1.0))
    gen_dir = np.array([rho_rim, z_rim - 1.0]) / s_max

    def sampler(count, gen):
        n_cone = int(round(cone_fraction * count))
        s = s_max * np.exp(-gen.random(n_cone) * math.log(s_max / s_min))
        omega = _unit_vectors(gen, n_cone, d - 1)
        cone = np.empty((n_cone, d))
        cone[:, :-1] = omega * (s * gen_dir[0])[:, None]
        cone[:, -1] = 1.0 + s * gen_dir[1]
        sph = []
        need = count - n_cone
        while need > 0:
            v = 2.0 * _unit_vectors(gen, 2 * need + 8, d)
            keep = v[np.arctan2(_norm(v[:, :-1]), v[:, -1]) >= theta_rim][:need]
            sph.append(keep)
            need -= len(keep)
        return np.concatenate([cone, *sph], axis=0) if sph else cone

    return Domain(f"example-spike:d={d}", d, sdf, sampler, convex=False, scale=4.0,
                  params={"d": d, "slope": slope, "apex": (0.0,) * (d - 1) + (1.0,)})


def spike_slab(d: int = 5, c: float = 1.0, slope: float = 1.0, half_width: float = 0.5,
               s_min: float = 1e-6, s_max: float = 1.0) -> Domain:
    """Complement of the closed convex set ``{x_1 - c >= |(x_2, x_3)| / slope}``.

    The removed set is a solid cone in the first three coordinates extruded
    along the remaining ``d - 3``, so the points of zero exterior-ball radius
    form the ``(d-3)``-dimensional flat ``{(c, 0, 0)} x R^{d-3}``.  The sampler
    restricts the extruded coordinates to ``[-half_width, half_width]``, which
    makes the sampled singular set a cube.
    """
    if d < 3:
        raise ValueError("spike-slab needs d >= 3")
    c, k = float(c), float(slope)
    # wedge b <= k a in the (a, b) half-plane, a = x_1 - c, b = |(x_2, x_3)|
    norm_dir = np.array([-k, 1.0]) / math.hypot(k, 1.0)   # outward normal of slanted edge
    edge_dir = np.array([1.0, k]) / math.hypot(k, 1.0)

    def sdf(x):
        a = x[..., 0] - c
        b = _norm(x[..., 1:3])
        p = np.stack([a, b], axis=-1)
        t = np.maximum(p @ edge_dir, 0.0)
        to_edge = _norm(p - t[..., None] * edge_dir)
        inside_set = (a >= 0) & (b <= k * a)
        depth = np.maximum(-(p @ norm_dir), 0.0)
        return np.where(inside_set, -depth, to_edge)

    def sampler(count, gen):
        s = s_max * np.exp(-gen.random(count) * math.log(s_max / s_min))
        omega = _unit_vectors(gen, count, 2)
        pts = np.empty((count, d))
        pts[:, 0] = c + s * edge_dir[0]
        pts[:, 1:3] = omega * (s * edge_dir[1])[:, None]
        pts[:, 3:] = gen.uniform(-half_width, half_width, (count, d - 3))
        return pts

    return Domain(f"spike-slab:d={d}", d, sdf, sampler, convex=False, scale=4.0,
                  params={"d": d, "c": c, "slope": k, "half_width": half_width})


def rigid_motion(domain: Domain, rotation: Array, shift: Array) -> Domain:
    """The image ``R O + b`` of a domain; ``0`` must stay inside."""
    rotation = np.asarray(rotation, dtype=float)
    shift = np.asarray(shift, dtype=float)

    def sdf(x):
        return domain.sdf((x - shift) @ rotation)

    sampler = None
    if domain.sampler is not None:
        def sampler(count, gen):
            return domain.sampler(count, gen) @ rotation.T + shift

    project = None
    if domain.project is not None:
        def project(x):
            return domain.project((np.asarray(x) - shift) @ rotation) @ rotation.T + shift

    return Domain(f"{domain.name}@moved", domain.dim, sdf, sampler, domain.convex,
                  domain.scale, project, domain.tolerance, dict(domain.params))


# ---------------------------------------------------------------------------
# sampled domains


def sampled_domain(points: Array, name: str = "sampled", k_normal: int = 8) -> Domain:
    """Domain known only through boundary samples.

    ``q`` is the distance to the nearest sample, signed by the side of that
    sample's tangent plane.  Normals come from a local principal-component
    fit and are oriented away from the origin, so the domain must be
    star-shaped about the origin.  Accuracy is of the order of the sample
    spacing, recorded in ``tolerance``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < k_normal + 1:
        raise BoundaryError("need a 2-d array with enough boundary points")
    d = pts.shape[1]
    tree = cKDTree(pts)
    _, nbr = tree.query(pts, k=k_normal + 1)
    normals = np.empty_like(pts)
    for i, idx in enumerate(nbr):
        local = pts[idx] - pts[idx].mean(axis=0)
        _, _, vt = np.linalg.svd(local, full_matrices=False)
        n = vt[-1]
        normals[i] = n if n @ pts[i] >= 0 else -n
    spacing = float(np.max(tree.query(pts, k=2)[0][:, 1]))

    def sdf(x):
        flat = x.reshape(-1, d)
        dist, idx = tree.query(flat)
        side = np.einsum("ij,ij->i", flat - pts[idx], normals[idx])
        return np.where(side > 0, -dist, dist).reshape(x.shape[:-1])

    def sampler(count, gen):
        return pts[gen.integers(0, len(pts), count)]

    diam = float(np.max(_norm(pts - pts.mean(axis=0)))) * 2
    return Domain(name, d, sdf, sampler, convex=False, scale=diam, tolerance=spacing,
                  params={"d": d, "n_points": len(pts)})


def read_points_csv(path) -> Array:
    """Read a CSV with a header row and one point per row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise BoundaryError(f"{path}: empty file")
        rows = [[float(v) for v in row] for row in reader if row]
    pts = np.asarray(rows, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != len(header):
        raise BoundaryError(f"{path}: every row needs {len(header)} columns")
    return pts


def write_points_csv(path, points: Array) -> None:
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(points.shape[1])])
        for row in points:
            w.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# catalog ids

_BUILDERS = {
    "ball": (ball, {"d": int, "r": float}),
    "halfspace": (halfspace, {"d": int, "level": float}),
    "box": (box, {"d": int, "h": float}),
    "notch": (lambda d=2, c=1.0: notch(c), {"d": int, "c": float}),
    "example-spike": (example_spike, {"d": int, "slope": float}),
    "spike-slab": (spike_slab, {"d": int, "c": float, "slope": float, "half_width": float}),
}

CATALOG_EXAMPLES = (
    "ball:d=2,r=1",
    "halfspace:d=1,level=1",
    "box:d=2,h=1",
    "notch:d=2,c=1",
    "example-spike:d=4",
    "spike-slab:d=5",
    "csv:<path>",
)


def parse_domain(spec: str) -> Domain:
    """Build a domain from an id such as ``"ball:d=2,r=1"`` or ``"csv:pts.csv"``."""
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "csv":
        path = Path(rest.strip())
        return sampled_domain(read_points_csv(path), name=f"csv:{path}")
    if kind not in _BUILDERS:
        raise KeyError(f"unknown domain kind {kind!r}")
    builder, types = _BUILDERS[kind]
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq or key not in types:
            raise KeyError(f"bad parameter {item!r} for domain kind {kind!r}")
        kwargs[key] = types[key](val)
    if kind == "notch" and kwargs.get("d", 2) != 2:
        raise KeyError("notch is only defined for d=2")
    try:
        dom = builder(**kwargs)
    except TypeError as exc:
        raise KeyError(f"domain {spec!r}: {exc}") from None
    return Domain(spec, dom.dim, dom.sdf, dom.sampler, dom.convex, dom.scale, dom.project,
                  dom.tolerance, dom.params)


# ---------------------------------------------------------------------------
# gradients, projection to the boundary, exterior balls


def gradient(domain: Domain, x: Array, h: float | None = None) -> Array:
    """Central-difference gradient of q at points of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-7 * domain.scale
    g = np.empty(x.shape)
    for i in range(domain.dim):
        e = np.zeros(domain.dim)
        e[i] = h
        g[..., i] = (domain.q(x + e) - domain.q(x - e)) / (2 * h)
    return g


def nearest_boundary_point(domain: Domain, x, tol: float | None = None,
                           max_iter: int = 50) -> Array:
    """A point ``y`` on the boundary with ``|x - y| = |q(x)|``, by Newton steps
    along the gradient of ``q``."""
    y = np.array(x, dtype=float)
    if tol is None:
        tol = 1e-10 * domain.scale
    for _ in range(max_iter):
        qy = domain.q(y)
        if np.all(np.abs(qy) <= tol):
            return y
        g = gradient(domain, y)
        gn = _norm(g)
        if np.any(gn < 1e-6):
            raise BoundaryError("gradient of q vanishes; nearest boundary point is not unique")
        y = y - (qy / gn ** 2)[..., None] * g
    raise BoundaryError("projection to the boundary did not converge")


@dataclass(frozen=True)
class ExteriorBallReport:
    point: Array
    radius: float
    witness_center: Array | None
    smooth: bool


def _outward_normals(domain: Domain, y: Array, h: float) -> tuple[Array, Array]:
    """Outward unit normals and a mask of points where q looks differentiable.

    A point counts as smooth when the central-difference gradient has unit
    length and q is linear along it on both sides, to 1e-3 relative.
    """
    g = gradient(domain, y, h)
    gn = _norm(g)
    ok = np.abs(gn - 1.0) <= 1e-3
    n = -g / np.where(gn > 0, gn, 1.0)[..., None]
    plus = domain.q(y + h * n)
    minus = domain.q(y - h * n)
    q0 = domain.q(y)
    ok &= np.abs(plus - q0 + h) <= 1e-3 * h
    ok &= np.abs(minus - q0 - h) <= 1e-3 * h
    return n, ok


def exterior_ball_radii(domain: Domain, points, r_max: float | None = None,
                        tol: float | None = None) -> tuple[Array, Array, Array]:
    """Vectorised exterior-ball radii for boundary points of shape (n, d).

    Returns ``(radii, centres, smooth)``.  A candidate radius ``r`` is
    certified when the ball of radius ``r`` centred at ``y + r n`` keeps
    distance at least ``r - tol`` from the closure, which is read off ``q``
    at the centre.  Valid radii form an interval starting at 0, so bisection
    applies.  Radii certified at ``r_max`` are reported as ``inf``; points
    where the outward direction is ambiguous get radius 0.
    """
    y = np.atleast_2d(np.asarray(points, dtype=float))
    if y.shape[-1] != domain.dim:
        raise DimensionError(f"expected points of dimension {domain.dim}")
    if tol is None:
        tol = 1e-6 * domain.scale
    if r_max is None:
        r_max = 1e3 * domain.scale
    if np.any(np.abs(domain.q(y)) > max(tol, domain.tolerance)):
        raise BoundaryError("point is not on the boundary within tolerance")
    h = max(1e-7 * domain.scale, 10 * domain.tolerance)
    n, smooth = _outward_normals(domain, y, h)

    def certified(r):
        centre = y + r[:, None] * n
        return -domain.q(centre) >= r - tol

    lo = np.zeros(len(y))
    hi = np.full(len(y), float(r_max))
    at_cap = certified(hi) & smooth
    active = smooth & ~at_cap
    while np.any(active & (hi - lo > tol)):
        mid = 0.5 * (lo + hi)
        ok = certified(mid)
        upd = active & (hi - lo > tol)
        lo = np.where(upd & ok, mid, lo)
        hi = np.where(upd & ~ok, mid, hi)
    radii = np.where(at_cap, np.inf, np.where(smooth, lo, 0.0))
    centres = y + np.where(np.isfinite(radii), radii, r_max)[:, None] * n
    return radii, centres, smooth


def exterior_ball_radius(domain: Domain, y, r_max: float | None = None,
                         tol: float | None = None) -> ExteriorBallReport:
    """Certified lower bound on the exterior-ball radius at a boundary point."""
    y = np.asarray(y, dtype=float)
    if y.shape != (domain.dim,):
        raise DimensionError(f"expected a point of dimension {domain.dim}")
    radii, centres, smooth = exterior_ball_radii(domain, y[None, :], r_max, tol)
    rad = float(radii[0])
    witness = centres[0] if rad > 0 else None
    return ExteriorBallReport(y, rad, witness, bool(smooth[0]))


@dataclass(frozen=True)
class SingularSetApprox:
    r: float
    points: Array
    tube_radius: float

    @property
    def empty(self) -> bool:
        return len(self.points) == 0

    def tree(self) -> cKDTree | None:
        return None if self.empty else cKDTree(self.points)


def singular_set(domain: Domain, r: float, n_samples: int, seed: int,
                 tol: float | None = None) -> SingularSetApprox:
    """Sampled boundary points whose exterior-ball radius is below ``r``."""
    if r <= 0:
        raise ValueError("r must be positive")
    pts = domain.boundary_sample(n_samples, seed)
    radii, _, _ = exterior_ball_radii(domain, pts, tol=tol)
    return SingularSetApprox(float(r), pts[radii < r], float(r))


def in_tube(approx: SingularSetApprox, x) -> Array | bool:
    """Whether ``x`` lies within ``tube_radius`` of the sampled singular set."""
    x = np.asarray(x, dtype=float)
    if approx.empty:
        out = np.zeros(x.shape[:-1], dtype=bool)
        return bool(out) if out.ndim == 0 else out
    dist, _ = approx.tree().query(x.reshape(-1, x.shape[-1]))
    out = (dist <= approx.tube_radius).reshape(x.shape[:-1])
    return bool(out) if out.ndim == 0 else out
