"""Closed-form and series reference values for one-dimensional Brownian motion.

Nothing here samples paths; these functions serve as independent oracles
for the Monte-Carlo estimators.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, special
from scipy.stats import norm


def halfline_stay(q, u):
    """P(BM started at distance ``q`` from a level stays above it on [0, u])."""
    q = np.asarray(q, dtype=float)
    return 2.0 * norm.cdf(q / np.sqrt(u)) - 1.0


def running_min_cdf(y, t):
    """P(min_{[0,t]} B <= -y) for standard BM from 0, ``y >= 0``."""
    y = np.asarray(y, dtype=float)
    return 2.0 * norm.cdf(-y / np.sqrt(t))


def interval_stay_images(x, a, b, t, n_images=20):
    """P(BM from ``x`` stays in (a, b) up to time ``t``), method of images."""
    L = b - a
    s = np.sqrt(t)
    k = np.arange(-n_images, n_images + 1)[:, None]
    x = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    terms = (norm.cdf((b - x + 2 * k * L) / s) - norm.cdf((a - x + 2 * k * L) / s)
             - norm.cdf((b + x - 2 * a + 2 * k * L) / s)
             + norm.cdf((a + x - 2 * a + 2 * k * L) / s))
    out = terms.sum(axis=0)
    return out[0] if out.size == 1 else out


def interval_stay_series(x, a, b, t, n_terms=50):
    """Same probability from the sine eigenfunction expansion."""
    L = b - a
    n = np.arange(1, n_terms + 1)
    coef = 2.0 / (n * np.pi) * (1 - (-1.0) ** n)
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    vals = coef * np.sin(n * np.pi * (x - a) / L) * np.exp(-(n * np.pi) ** 2 * t / (2 * L * L))
    out = vals.sum(axis=1)
    return out[0] if out.size == 1 else out


def interval_exit_cdf(x, a, b, t, n_terms=50):
    """P(exit time from (a, b) <= t) by the eigenfunction series."""
    return 1.0 - interval_stay_series(x, a, b, t, n_terms)


def interval_min_cdf(x, a, b, t, y):
    """P(no exit from (a, b) on [0, t] and min distance to the boundary <= y).

    Staying in (a, b) with running min of the distance to ``{a, b}`` above
    ``y`` is the same as staying in ``(a + y, b - y)``.
    """
    y = np.asarray(y, dtype=float)
    return interval_stay_images(x, a, b, t) - np.where(
        (x - a > y) & (b - x > y), interval_stay_images(x, a + y, b - y, t), 0.0)


def disk_exit_survival(t, R=1.0, n_terms=60):
    """P(planar BM from the centre of the disk of radius R stays inside up to t).

    Fourier-Bessel series: sum_k 2 / (j_k J_1(j_k)) exp(-j_k^2 t / (2 R^2)).
    """
    j = special.jn_zeros(0, n_terms)
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    vals = 2.0 / (j * special.j1(j)) * np.exp(-j * j * t / (2 * R * R))
    out = vals.sum(axis=1)
    return out[0] if out.size == 1 else out


def disk_band_prob(t, eps, R=1.0):
    """P(planar BM from the centre stays in the closed disk and comes within
    ``eps`` of its boundary before ``t``)."""
    return disk_exit_survival(t, R) - disk_exit_survival(t, R - eps)


def drifted_passage_cdf(u, C, r):
    """P(eta <= u) for eta = inf{t : C t + B_t <= -r}, closed form."""
    u = np.asarray(u, dtype=float)
    s = np.sqrt(u)
    return norm.cdf((-r - C * u) / s) + np.exp(-2 * C * r) * norm.cdf((-r + C * u) / s)


def reflected_ou_stationary(level=1.0, var=1.0, lo=-10.0, n=4001):
    """Stationary density of dX = dB - X/2 dt reflected at ``level`` from above.

    Solved numerically as the zero-flux Fokker-Planck problem
    ``(var/2) p' + (x/2) p = 0`` on a grid, integrated with the trapezoid
    rule and normalised.  Returns ``(grid, density)``.
    """
    x = np.linspace(lo * np.sqrt(var), level, n)
    # log p' = -x / var
    logp = integrate.cumulative_trapezoid(-x / var, x, initial=0.0)
    p = np.exp(logp - logp.max())
    p /= integrate.trapezoid(p, x)
    return x, p
