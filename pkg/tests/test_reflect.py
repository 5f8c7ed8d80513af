import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from pathbv import closedforms as cf
from pathbv.geometry import ball, halfspace
from pathbv.reflect import (DiscretePathSpace, check_decomposition, check_ou_marginal,
                            check_reflection_locus, cm_project, compare_methods,
                            count_touches, identity_residual, reconstruct_lw,
                            simulate_ensemble, simulate_rou)


def _dirs(n_grid, d):
    a = np.zeros((2, n_grid, d))
    a[0, -1, 0] = 1.0
    a[1, 0, d - 1] = 1.0
    return a


def test_cm_metric_inverts_covariance():
    sp = DiscretePathSpace(2, 1.0, 6)
    assert np.allclose(sp.metric @ sp.cov, np.eye(6))
    h = np.random.default_rng(0).standard_normal((6, 2))
    G = sp.metric
    assert sp.cm_inner(h, h) == pytest.approx(np.einsum("id,ij,jd->", h, G, h))


def test_free_run_has_no_local_time_and_w_equals_b():
    sp = DiscretePathSpace(2, 1.0, 4)
    tr = simulate_rou(sp, np.zeros((4, 2)), 0.5, 1e-3, seed=1)
    assert tr.local_time[-1] == 0.0
    assert identity_residual(tr) < 1e-12
    a = _dirs(4, 2)[0]
    assert np.allclose(reconstruct_lw(tr, a), np.einsum("kid,id->k", tr.driver, a), atol=1e-12)


def test_interior_run_has_no_local_time():
    sp = DiscretePathSpace(2, 1.0, 4, ball(2, 10.0))
    tr = simulate_rou(sp, np.zeros((4, 2)), 0.05, 1e-3, seed=2)
    assert tr.local_time[-1] == 0.0


def test_reflected_trajectory_stays_in_constraint_set():
    sp = DiscretePathSpace(2, 1.0, 8, ball(2))
    tr = simulate_rou(sp, np.zeros((8, 2)), 1.0, 2e-3, seed=3)
    assert tr.converged
    assert np.all(sp.constraint(tr.states))
    assert tr.local_time[-1] > 0
    assert np.all(np.diff(tr.local_time) >= 0)
    assert identity_residual(tr) < 1e-12
    assert np.allclose(sp.cm_norm(tr.normals), 1.0)
    # local time only grows at reflection events
    grow = np.flatnonzero(np.diff(tr.local_time) > 0)
    assert np.array_equal(grow, tr.event_steps)


def test_same_seed_same_trajectory():
    sp = DiscretePathSpace(2, 1.0, 4, ball(2))
    a = simulate_rou(sp, np.zeros((4, 2)), 0.3, 2e-3, seed=4, stream=7)
    b = simulate_rou(sp, np.zeros((4, 2)), 0.3, 2e-3, seed=4, stream=7)
    assert np.array_equal(a.states, b.states)


@given(st.integers(0, 2 ** 31))
def test_cm_projection_is_nearest_feasible_point(seed):
    gen = np.random.default_rng(seed)
    sp = DiscretePathSpace(2, 1.0, 4, ball(2))
    y = gen.standard_normal((1, 4, 2)) * 1.5
    p, ok = cm_project(sp, y)
    assert ok.all()
    assert sp.constraint(p).all()
    # no feasible competitor near p is closer in the metric
    dist = sp.cm_norm(y[0] - p[0])
    for _ in range(30):
        z = p[0] + 0.05 * gen.standard_normal((4, 2))
        if sp.constraint(z):
            assert sp.cm_norm(y[0] - z) >= dist - 1e-9


def test_cm_projection_leaves_feasible_paths_alone():
    sp = DiscretePathSpace(2, 1.0, 4, ball(2))
    y = np.full((1, 4, 2), 0.3)
    p, _ = cm_project(sp, y)
    assert np.array_equal(p, y)


def test_multi_touch_detector():
    dom = ball(2)
    state = np.array([[0.2, 0.0], [1.0, 0.0], [0.5, 0.1], [0.0, 1.0]])
    assert count_touches(dom, state) == 2
    state[3] = [0.0, 0.9]
    assert count_touches(dom, state) == 1


def test_locus_vacuous_without_events():
    sp = DiscretePathSpace(2, 1.0, 4)
    tr = simulate_rou(sp, np.zeros((4, 2)), 0.1, 1e-3, seed=5)
    rep = check_reflection_locus(tr, ball(2))
    assert rep.n_events == 0 and rep.fraction == 1.0 and rep.passed


def test_unconstrained_marginal():
    sp = DiscretePathSpace(2, 1.0, 4)
    x0 = np.full((4, 2), 0.5)
    ens = simulate_ensemble(sp, x0, 1.0, 2e-3, seed=6, n_traj=4000, directions=_dirs(4, 2),
                            chunk=4000)
    assert float(ens.local_time.max()) == 0.0
    assert check_ou_marginal(ens, x0)["passed"]
    for a in ens.directions:
        assert check_decomposition(ens, a).qv_ratio == pytest.approx(1.0, abs=0.02)


def test_reflected_decomposition_small():
    sp = DiscretePathSpace(2, 1.0, 8, ball(2))
    ens = simulate_ensemble(sp, np.zeros((8, 2)), 1.0, 2e-3, seed=7, n_traj=300,
                            directions=_dirs(8, 2), chunk=300)
    assert ens.violations == 0 and ens.converged
    assert ens.n_events > 0
    for a in ens.directions:
        assert check_decomposition(ens, a, min_increments=50).qv_pass


def test_one_dimensional_stationary_law():
    # one grid time: a 1-d OU process reflected below the level 1
    sp = DiscretePathSpace(1, 1.0, 1, halfspace(1, level=1.0))
    ens = simulate_ensemble(sp, np.zeros((1, 1)), 8.0, 2e-3, seed=8, n_traj=3000,
                            directions=np.ones((1, 1, 1)), chunk=3000)
    x, p = cf.reflected_ou_stationary(level=1.0)
    cdf = integrate.cumulative_trapezoid(p, x, initial=0.0)
    sample = ens.final_states[:, 0, 0]
    assert sample.max() <= 1.0
    res = stats.kstest(sample, lambda s: np.interp(s, x, cdf))
    assert res.pvalue > 0.01


def test_penalization_is_reported_not_chosen():
    sp = DiscretePathSpace(2, 1.0, 4, ball(2))
    out = compare_methods(sp, np.zeros((4, 2)), 0.5, 2e-3, seed=9, n_traj=50)
    assert out["mean_final_gap"] >= 0
    assert math.isfinite(out["local_time_penalization"])
