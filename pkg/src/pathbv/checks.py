"""Named checks runnable from a configuration file.

Each check takes a domain id, a parameter mapping, a seed and the calibrated
constant ``c1`` (``None`` when not needed) and returns a list of JSON-ready
records ``{check, domain, params, estimate, ci, bound, slack, pass, detail}``.
"""

from __future__ import annotations

import inspect
import math

import numpy as np

from . import capacity as cap
from . import mcverify as mc
from . import reflect as rf
from .geometry import parse_domain

_plain = mc._plain


def _record(check, domain, params, estimate, ci, bound, passed, detail, slack=None):
    """JSON record; ``slack`` defaults to ``bound - upper CI end`` for upper bounds."""
    if slack is None and bound is not None and estimate is not None:
        slack = float(bound) - float(ci[1])
    return _plain({"check": check, "domain": domain, "params": params, "estimate": estimate,
                   "ci": list(ci), "bound": bound, "slack": slack, "pass": bool(passed),
                   "detail": detail})


def _start(dom, x=None, depth=None):
    if x is not None:
        return np.asarray(x, dtype=float)
    if depth is None:
        return np.zeros(dom.dim)
    return mc._point_at_depth(dom, mc._ray_to_boundary(dom), float(depth))


def stay_bound(domain, seed, c1, x=None, depth=None, u=1.0, n_paths=mc.DEFAULT_N_PATHS,
               n_steps=mc.DEFAULT_N_STEPS, level=mc.DEFAULT_LEVEL):
    """Staying probability against the exterior-ball bound."""
    dom = parse_domain(domain)
    v = mc.verify_stay_bound(dom, _start(dom, x, depth), u, n_paths, n_steps, seed, level)
    return [v.record(domain)]


def band_bound(domain, seed, c1, x=None, depth=None, gamma=1.0, r=0.1, u=1.0,
               n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS, level=mc.DEFAULT_LEVEL):
    """Band probability near the boundary against the linear-in-r bound."""
    dom = parse_domain(domain)
    v = mc.verify_band_bound(dom, _start(dom, x, depth), gamma, r, u, c1, n_paths, n_steps,
                             seed, level)
    return [v.record(domain)]


def band_slope(domain, seed, c1, x=None, depth=None, r=(0.0125, 0.025, 0.05, 0.1), u=1.0,
               n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS, min_slope=0.85):
    """Log-log slope of the band probability in r."""
    dom = parse_domain(domain)
    rep = mc.band_slope(dom, _start(dom, x, depth), r, u, n_paths, n_steps, seed,
                        min_slope=min_slope)
    return [_record("band_slope", domain, rep.params, rep.statistic,
                    (rep.statistic, rep.statistic), None, rep.passed,
                    {"r": rep.schedule, "values": rep.values, "half_widths": rep.half_widths,
                     **rep.extra})]


def exit_density(domain, seed, c1, distances=(0.05, 0.1, 0.2, 0.4), r=0.0, n_paths=20_000,
                 n_steps=1024, n_times=12):
    """Calibrate C1 from exit-time distribution slopes."""
    dom = parse_domain(domain)
    res = mc.calibrate_c1(dom, distances, r, n_paths, n_steps, n_times, seed)
    ok = all(run["monotone"] for run in res["runs"]) and math.isfinite(res["c1"])
    return [_record("exit_density", domain, {"distances": distances, "r": r,
                                             "n_paths": n_paths, "n_steps": n_steps},
                    res["c1"], (res["c1"], res["c1"]), None, ok, res)]


def gradient_mass(domain, seed, c1, k=1, m=(2, 4, 8, 16, 32), T=1.0,
                  n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS, alpha=0.05):
    """m mu(0 <= h <= 1/m) away from the tube: bounded, with no increasing trend."""
    dom = parse_domain(domain)
    rep = mc.verify_gradient_mass(dom, k, m, c1, T, n_paths, n_steps, seed, alpha=alpha)
    return [rep.record(domain)]


def gradient_mass_bound(domain, seed, c1, k=1, m=(2, 4, 8, 16, 32), T=1.0,
                        n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS):
    """Only the ceiling part of :func:`gradient_mass`."""
    dom = parse_domain(domain)
    rep = mc.verify_gradient_mass(dom, k, m, c1, T, n_paths, n_steps, seed)
    r = rep.record(domain)
    r["check"] = "gradient_mass_bound"
    r["pass"] = bool(rep.extra["bounded"])
    return [r]


def psi_quadratic(domain, seed, c1, s=0.5, r=(0.025, 0.05, 0.1, 0.2), l=1, T=1.0,
                  n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS, min_slope=1.7):
    """Two-sided near-boundary event decays like r^2."""
    dom = parse_domain(domain)
    rep = mc.verify_psi_quadratic(dom, s, r, l, T, n_paths, n_steps, seed, min_slope=min_slope)
    return [_record("psi_quadratic", domain, rep.params, rep.statistic,
                    (rep.statistic, rep.statistic), None, rep.passed,
                    {"r": rep.schedule, "values": rep.values, "half_widths": rep.half_widths,
                     **rep.extra})]


def null_boundary(domain, seed, c1, eps=(1 / 64, 1 / 32, 1 / 16, 1 / 8), T=1.0,
                  n_paths=mc.DEFAULT_N_PATHS, n_steps=mc.DEFAULT_N_STEPS, slope_tol=0.15):
    """mu(0 <= h <= eps) decays linearly to zero."""
    dom = parse_domain(domain)
    rep = mc.verify_null_boundary(dom, eps, T, n_paths, n_steps, seed, slope_tol=slope_tol)
    return [_record("null_boundary", domain, rep.params, rep.extra["intercept"],
                    (rep.extra["intercept"] - rep.extra["ci_width"],
                     rep.extra["intercept"] + rep.extra["ci_width"]), None, rep.passed,
                    {"eps": rep.schedule, "values": rep.values, "half_widths": rep.half_widths,
                     **rep.extra})]


def capacity(domain, seed, c1, set="sphere:d=3,R=1", beta=1.0, resolution=512, expect=None,
             tol=0.03):
    """Capacity of a catalog set, optionally against an expected value."""
    ps = cap.discretize(set, resolution, seed)
    value = cap.capacity_value(set, beta, resolution, seed=seed)
    slack = None if expect is None else float(tol) - abs(value - float(expect))
    passed = slack is None or slack >= 0
    return [_record("capacity", set, {"beta": beta, "resolution": resolution, "tol": tol},
                    value, (value, value), expect, passed, {"n_points": len(ps.points)},
                    slack)]


def singular_capacity(domain, seed, c1, schedule=((0.2, 2000), (0.1, 4000), (0.05, 8000),
                                                  (0.025, 16000)), expect="holds"):
    """Capacity of the singular set along a refinement schedule."""
    dom = parse_domain(domain)
    rep = cap.check_singular_capacity(dom, [tuple(s) for s in schedule], seed=seed)
    last = rep.capacities[-1] if rep.capacities else 0.0
    return [_record("singular_capacity", domain, {"schedule": schedule, "expect": expect},
                    last, (last, last), None, rep.verdict == expect, rep.as_dict())]


def _directions(n_grid, d, seed):
    dirs = np.zeros((3, n_grid, d))
    dirs[0, -1, 0] = 1.0
    dirs[1, n_grid // 2, d - 1] = 1.0
    dirs[2] = np.random.default_rng(seed).standard_normal((n_grid, d))
    return dirs


def reflected_ou(domain, seed, c1, n_grid=8, T=1.0, t_end=5.0, dt_sim=1e-3, n_traj=10_000,
                 qv_tol=0.05, locus_threshold=0.99, touch_tol=1e-9, chunk=2000):
    """Decomposition and reflection-locus checks for the reflected process."""
    dom = parse_domain(domain)
    space = rf.DiscretePathSpace(dom.dim, T, n_grid, dom)
    dirs = _directions(n_grid, dom.dim, seed)
    ens = rf.simulate_ensemble(space, np.zeros((n_grid, dom.dim)), t_end, dt_sim, seed, n_traj,
                               dirs, chunk=chunk, touch_tol=touch_tol)
    params = {"n_grid": n_grid, "T": T, "t_end": t_end, "dt_sim": dt_sim, "n_traj": n_traj}
    out = []
    reps = [rf.check_decomposition(ens, a, qv_tol) for a in dirs]
    ratios = [r.qv_ratio for r in reps]
    out.append(_record("ou_decomposition", domain, params, max(ratios, key=lambda v: abs(v - 1)),
                       (min(ratios), max(ratios)), None,
                       all(r.passed for r in reps) and ens.converged and ens.violations == 0,
                       {"qv_ratios": ratios, "ad": [r.ad_statistic for r in reps],
                        "ad_critical_1pct": reps[0].ad_critical_1pct,
                        "lag1_z": [r.lag1_z for r in reps],
                        "max_sigma_error": ens.max_sigma_error,
                        "max_identity_residual": ens.max_identity_residual,
                        "violations": ens.violations, "converged": ens.converged,
                        "mean_local_time": float(ens.local_time.mean())}))
    loc = rf.check_reflection_locus(ens, threshold=locus_threshold)
    out.append(_record("ou_locus", domain, params, loc.fraction, (loc.fraction, loc.fraction),
                       locus_threshold, loc.passed,
                       {"events": loc.n_events, "single_touch": loc.single_touch,
                        "zero_touch": loc.zero_touch}, loc.fraction - locus_threshold))
    return out


def ou_marginal(domain, seed, c1, d=2, n_grid=8, T=1.0, t_end=1.0, dt_sim=1e-3,
                n_traj=10_000, n_se=3.0):
    """Free process on path space against its Gaussian marginal."""
    space = rf.DiscretePathSpace(int(d), T, n_grid, None)
    dirs = _directions(n_grid, int(d), seed)
    x0 = np.zeros((n_grid, int(d)))
    ens = rf.simulate_ensemble(space, x0, t_end, dt_sim, seed, n_traj, dirs, chunk=n_traj)
    res = rf.check_ou_marginal(ens, x0, n_se)
    lt = float(ens.local_time.max())
    return [_record("ou_marginal", "free", {"d": d, "n_grid": n_grid, "t_end": t_end,
                                            "dt_sim": dt_sim, "n_traj": n_traj},
                    res["max_abs_z"], (res["max_abs_z"], res["max_abs_z"]), n_se,
                    res["passed"] and lt == 0.0, {**res, "max_local_time": lt})]


CHECKS = {
    "stay_bound": stay_bound,
    "band_bound": band_bound,
    "band_slope": band_slope,
    "exit_density": exit_density,
    "gradient_mass": gradient_mass,
    "gradient_mass_bound": gradient_mass_bound,
    "psi_quadratic": psi_quadratic,
    "null_boundary": null_boundary,
    "capacity": capacity,
    "singular_capacity": singular_capacity,
    "reflected_ou": reflected_ou,
    "ou_marginal": ou_marginal,
}

NEEDS_C1 = {"band_bound", "gradient_mass", "gradient_mass_bound"}


def parameter_names(name: str) -> list[str]:
    sig = inspect.signature(CHECKS[name])
    return [p for p in sig.parameters if p not in ("domain", "seed", "c1")]


def run_check(name: str, domain: str, params: dict, seed: int, c1: float | None) -> list[dict]:
    return CHECKS[name](domain, seed, c1, **params)
