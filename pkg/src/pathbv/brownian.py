"""Brownian paths on a time grid, the drifted first-passage law, and path
functionals built on the signed distance.

Path ``i`` under a root seed is always the same array: its increments come
from the counter-based stream layout of :mod:`pathbv.rng`.  Between grid
points a path may be treated as a Brownian bridge; the helpers
:func:`stay_above_prob` and :func:`bridge_minima` use the fact that ``q`` has
unit gradient, so along one short step it moves like a one-dimensional
Brownian motion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import integrate

from . import rng as _rng
from .geometry import Domain, SingularSetApprox, in_tube


@dataclass(frozen=True)
class PathSample:
    d: int
    T: float
    n_steps: int
    values: np.ndarray

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


def _check_grid(T, n_steps):
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if not T > 0:
        raise ValueError("T must be positive")


def sample_paths(d: int, T: float, n_steps: int, start, seed: int, n_paths: int,
                 first: int = 0) -> np.ndarray:
    """Paths ``first, ..., first + n_paths - 1`` as an array (n_paths, n_steps + 1, d)."""
    _check_grid(T, n_steps)
    start = np.broadcast_to(np.asarray(start, dtype=float), (d,))
    z = _rng.block_normals(seed, n_paths, (n_steps, d), first_item=first)
    out = np.empty((n_paths, n_steps + 1, d))
    out[:, 0] = start
    np.cumsum(z * math.sqrt(T / n_steps), axis=1, out=out[:, 1:])
    out[:, 1:] += start
    return out


def sample_path(d: int, T: float, n_steps: int, start, seed: int, stream: int) -> PathSample:
    """Path number ``stream`` under ``seed``; identical to row ``stream`` of
    :func:`sample_paths`."""
    vals = sample_paths(d, T, n_steps, start, seed, 1, first=stream)[0]
    return PathSample(d, float(T), int(n_steps), vals)


def iter_path_chunks(d: int, T: float, n_steps: int, start, seed: int, n_paths: int,
                     chunk: int = 4096) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_index, paths)`` in chunks aligned to the stream blocks."""
    chunk = max(_rng.PATHS_PER_BLOCK, chunk - chunk % _rng.PATHS_PER_BLOCK)
    for first in range(0, n_paths, chunk):
        n = min(chunk, n_paths - first)
        yield first, sample_paths(d, T, n_steps, start, seed, n, first=first)


# ---------------------------------------------------------------------------
# first passage of drifted Brownian motion


@dataclass(frozen=True)
class FirstPassageLaw:
    """Law of ``eta = inf{t : C t + S_t <= -r}`` for standard BM ``S``."""

    drift_coeff: float
    barrier: float

    def __post_init__(self):
        if self.drift_coeff < 0:
            raise ValueError("drift coefficient must be non-negative")
        if not self.barrier > 0:
            raise ValueError("barrier must be positive")

    @property
    def atom_at_infinity(self) -> float:
        return -math.expm1(-2.0 * self.drift_coeff * self.barrier)


def fp_density(law: FirstPassageLaw, t):
    """Density of the finite part of ``eta``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("t must be positive")
    r, C = law.barrier, law.drift_coeff
    val = r / np.sqrt(2 * np.pi * t_arr ** 3) * np.exp(-(r + C * t_arr) ** 2 / (2 * t_arr))
    return float(val) if val.ndim == 0 else val


class QuadratureError(RuntimeError):
    pass


def _tail_mass(law: FirstPassageLaw, u: float, tol: float = 1e-10) -> float:
    """Integral of the density over (u, inf) after ``t = u + tau s/(1-s)``.

    ``tau`` is the natural time scale of the law, so the mass sits in the
    middle of (0, 1).  Near ``s = 1`` the transformed integrand behaves like
    ``(1-s)^(-1/2)`` times a smooth factor when ``C = 0``; the algebraic
    weight handles that.
    """
    r, C = law.barrier, law.drift_coeff
    tau = r * r / (1.0 + C * r)

    # limit of the transformed integrand at s = 1
    end = r / math.sqrt(2 * math.pi * tau) if C == 0 else 0.0

    def f(s):
        if s <= 0.0:
            return 0.0
        if s >= 1.0:
            return end
        t = u + tau * s / (1.0 - s)
        if t <= 0:
            return 0.0
        # density * dt/ds, with the (1-s)^(-1/2) factor moved into the weight
        return tau * fp_density(law, t) / (1.0 - s) ** 1.5

    # quad warns on negligible masses; the error estimate is checked below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(0.0, -0.5),
                                  epsabs=tol, epsrel=tol, limit=400)
    if not np.isfinite(val) or err > 1e-8:
        raise QuadratureError(f"quadrature error estimate {err:.2e} too large")
    return val


def fp_mass(law: FirstPassageLaw) -> float:
    """Total mass of the density on (0, inf)."""
    return _tail_mass(law, 0.0)


def fp_survival(law: FirstPassageLaw, u: float) -> float:
    """P(eta > u), including the atom at infinity."""
    if not u > 0:
        raise ValueError("u must be positive")
    return _tail_mass(law, float(u)) + law.atom_at_infinity


# ---------------------------------------------------------------------------
# path functionals


def q_along(domain: Domain, paths: np.ndarray) -> np.ndarray:
    """``q`` at every grid point; shape (..., n_steps + 1)."""
    return domain.q(paths)


def path_min_q(domain: Domain, path: PathSample | np.ndarray) -> float | np.ndarray:
    """Grid minimum of ``q`` along a path (or along each of a batch)."""
    vals = path.values if isinstance(path, PathSample) else np.asarray(path)
    if vals.shape[-1] != domain.dim:
        raise ValueError("path and domain dimensions differ")
    m = domain.q(vals).min(axis=-1)
    return float(m) if np.ndim(m) == 0 else m


def first_hit_time(target, path: PathSample | np.ndarray, T: float | None = None,
                   level: float | None = None):
    """First grid time at which a path is in a closed set.

    ``target`` is a :class:`SingularSetApprox` (tube membership), or a
    :class:`Domain` together with ``level = r``, in which case the event is
    leaving ``O_r = {q > r}``.  Returns ``None`` if the event never happens on
    the grid.  For batches an array is returned with ``nan`` for "never".
    """
    if isinstance(path, PathSample):
        vals, T = path.values, path.T
        single = True
    else:
        vals = np.asarray(path, dtype=float)
        single = vals.ndim == 2
        if T is None:
            raise ValueError("T is required for raw arrays")
    if isinstance(target, SingularSetApprox):
        hit = np.asarray(in_tube(target, vals), dtype=bool)
    elif isinstance(target, Domain):
        hit = target.q(vals) <= (0.0 if level is None else level)
    else:
        raise TypeError("target must be a SingularSetApprox or a Domain")
    n_steps = hit.shape[-1] - 1
    any_hit = hit.any(axis=-1)
    idx = np.argmax(hit, axis=-1)
    times = np.where(any_hit, idx * (T / n_steps), np.nan)
    if single:
        return None if not any_hit else float(times)
    return times


def stay_above_prob(qvals: np.ndarray, level, dt: float) -> np.ndarray:
    """Conditional probability, given the grid values, that ``q`` stays at or
    above ``level`` between all grid points.

    Each step is treated as a Brownian bridge of ``q``; the bridge from
    ``a`` to ``b`` (both above the level) dips below it with probability
    ``exp(-2 (a - level)(b - level) / dt)``.  ``level`` broadcasts against the
    leading axes.
    """
    g = qvals - np.asarray(level, dtype=float)[..., None]
    a, b = g[..., :-1], g[..., 1:]
    ok = np.all(g >= 0, axis=-1)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        log_step = np.log1p(-np.exp(-2.0 * np.maximum(a, 0) * np.maximum(b, 0) / dt))
    out = np.exp(np.sum(log_step, axis=-1))
    return np.where(ok, out, 0.0)


def bridge_minima(qvals: np.ndarray, dt: float, uniforms: np.ndarray) -> np.ndarray:
    """Sample the minimum of ``q`` over each step given its end values."""
    a, b = qvals[..., :-1], qvals[..., 1:]
    return 0.5 * (a + b - np.sqrt((a - b) ** 2 - 2.0 * dt * np.log(uniforms)))
