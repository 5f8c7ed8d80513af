import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathbv import closedforms as cf
from pathbv.geometry import ball, halfspace
from pathbv.mcverify import (PreconditionError, band_probabilities, bernoulli_estimate,
                             hw_scaling, log_step_stay, mann_kendall_increasing,
                             sample_estimate, segment_stay, stay_prefix, verify_band_bound,
                             verify_exit_density, verify_gradient_mass, verify_psi_quadratic,
                             verify_stay_bound, z_value)

N = 20_000


def test_z_value():
    assert z_value(0.99) == pytest.approx(2.5758, abs=1e-4)


def test_estimates_contain_their_mean():
    e = bernoulli_estimate(30, 1000, seed=1)
    assert e.ci[0] < e.mean < e.ci[1]
    zero = bernoulli_estimate(0, 1000, seed=1)
    assert zero.half_width > 0           # Wilson interval, not a degenerate zero width
    s = sample_estimate(np.arange(10.0), seed=1)
    assert s.mean == pytest.approx(4.5)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30))
def test_stay_prefix_is_cumulative_product(vals):
    qv = np.abs(np.asarray(vals))[None, :] + 0.01
    pref = stay_prefix(qv, 0.0, 0.1)
    assert pref[0, 0] == 1.0
    assert np.all(np.diff(pref[0]) <= 1e-15)
    assert pref[0, -1] == pytest.approx(math.exp(log_step_stay(qv, 0.0, 0.1).sum()), rel=1e-9)


def test_segment_stay_splits_the_product():
    qv = np.abs(np.random.default_rng(0).standard_normal((4, 9))) + 0.05
    whole = stay_prefix(qv, 0.0, 0.1)[:, -1]
    assert segment_stay(qv, 0.0, 0.1, 0, 4) * segment_stay(qv, 0.0, 0.1, 4, 8) == \
        pytest.approx(whole, rel=1e-12)


def test_stay_bound_d1_matches_reflection_principle():
    dom = halfspace(1, level=1.0)
    v = verify_stay_bound(dom, np.array([0.9]), 1.0, n_paths=N, seed=3)
    exact = cf.halfline_stay(0.1, 1.0)
    assert exact == pytest.approx(0.0797, abs=1e-4)
    assert abs(v.estimate.mean - exact) <= v.estimate.half_width + v.allowance
    assert v.bound == pytest.approx(0.1)
    assert v.passed


def test_stay_bound_disk_plug_in():
    v = verify_stay_bound(ball(2), np.array([0.9, 0.0]), 1.0, n_paths=N, seed=4)
    assert v.bound == pytest.approx(0.1)
    assert v.passed


def test_stay_bound_on_boundary_is_zero():
    v = verify_stay_bound(ball(2), np.array([1.0, 0.0]), 1.0, n_paths=2000, seed=4)
    assert v.bound == pytest.approx(0.0, abs=1e-12)
    assert v.estimate.mean <= v.allowance + 1e-12


def test_same_seed_same_record():
    a = verify_stay_bound(ball(2), np.array([0.8, 0.0]), 1.0, n_paths=3000, seed=11).record("b")
    b = verify_stay_bound(ball(2), np.array([0.8, 0.0]), 1.0, n_paths=3000, seed=11).record("b")
    assert a == b


def test_half_width_scales_as_inverse_root_n():
    ratio = hw_scaling(ball(2), np.array([0.8, 0.0]), 1.0, n_paths=4000, seed=2)
    # quadrupling n halves the half-width
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_exit_density_of_interval_against_series():
    t = np.geomspace(0.02, 2.0, 8)
    rep = verify_exit_density(ball(1), np.zeros(1), 0.0, t, n_paths=N, n_steps=512, seed=5)
    exact = cf.interval_exit_cdf(0.0, -1.0, 1.0, np.asarray(rep.t_grid))
    assert rep.monotone
    for f, hw, e in zip(rep.cdf, rep.cdf_half_width, exact):
        assert abs(f - e) <= hw + 0.01
    exact_c1 = np.max(np.diff(exact) / np.diff(np.log(rep.t_grid)))
    assert rep.c1 >= exact_c1 - 0.02


def test_exit_density_requires_start_inside():
    with pytest.raises(PreconditionError):
        verify_exit_density(ball(1), np.array([0.95]), 0.1, [0.1, 1.0], n_paths=10)


def test_band_probabilities_d1_against_running_minimum():
    # inside (-1, 1) from 0: staying inside while coming within e of an end
    levels = np.array([0.05, 0.1, 0.2])
    ests, _ = band_probabilities(ball(1), np.zeros(1), levels, 1.0, N, 256, seed=6)
    exact = cf.interval_min_cdf(0.0, -1.0, 1.0, 1.0, levels)
    for e, ex in zip(ests, exact):
        assert abs(e.mean - ex) <= e.half_width + 0.005


def test_band_bound_disk_centre():
    v = verify_band_bound(ball(2), np.zeros(2), 0.1, 0.1, 1.0, c1=0.35, n_paths=N, seed=7)
    assert v.passed
    small = verify_band_bound(ball(2), np.zeros(2), 1e-3, 1e-3, 1.0, c1=0.35, n_paths=N,
                              seed=7)
    assert small.estimate.mean <= small.estimate.half_width + small.allowance


def test_gradient_mass_d1_is_linear_in_inverse_m():
    m = [2, 4, 8, 16]
    rep = verify_gradient_mass(ball(1), 1, m, c1=0.35, n_paths=N, seed=8)
    exact = [mm * cf.interval_min_cdf(0.0, -1.0, 1.0, 1.0, 1 / mm) for mm in m]
    for v, hw, e in zip(rep.values, rep.half_widths, exact):
        assert abs(v - e) <= hw + 0.02
    assert rep.extra["bounded"]


def test_psi_is_dominated_by_band_probability():
    rep = verify_psi_quadratic(ball(2), 0.5, [0.1, 0.2], 1, n_paths=N, seed=9, min_slope=0.0)
    ests, _ = band_probabilities(ball(2), np.zeros(2), [0.2], 1.0, N, 256, seed=9)
    assert rep.values[-1] <= ests[0].mean + ests[0].half_width


def test_mann_kendall():
    assert mann_kendall_increasing([1, 2, 3, 4, 5, 6]) < 0.01
    assert mann_kendall_increasing([6, 5, 4, 3, 2, 1]) > 0.9
