import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from pathbv.capacity import (RieszKernel, SolverOptions, ball_distance_density, capacity_value,
                             check_singular_capacity, discretize, fibonacci_sphere,
                             intrinsic_dimension, is_degenerate, kernel_matrix,
                             minimize_energy, minimize_quadratic, quadratic_energy,
                             riesz_energy, self_energy)
from pathbv.geometry import ball, notch


def simplex_grid(step):
    """All points of the 2-simplex on a grid of the given step."""
    m = int(round(1 / step))
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = i + j <= m
    a, b = i[keep] / m, j[keep] / m
    return np.c_[a, b, 1 - a - b]


def brute_force_min(K, step=1e-3):
    W = simplex_grid(step)
    vals = np.einsum("ni,ij,nj->n", W, K, W)
    k = int(np.argmin(vals))
    return vals[k], W[k]


def test_two_point_energy_plug_in():
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert riesz_energy(x, [0.5, 0.5], RieszKernel(1.0)) == pytest.approx(0.5)


def test_single_point_is_degenerate():
    x = np.array([[0.3, 0.1]])
    assert riesz_energy(x, [1.0], RieszKernel(1.0)) == 0.0
    assert is_degenerate(x, [1.0])


def test_coincident_points_have_infinite_energy():
    x = np.array([[0.0, 0.0], [0.0, 0.0]])
    assert riesz_energy(x, [0.5, 0.5], RieszKernel(1.0)) == math.inf


def test_weights_must_be_on_simplex():
    with pytest.raises(ValueError):
        riesz_energy(np.eye(2), [0.7, 0.7], RieszKernel(1.0))


def test_uniform_sphere_energy_near_one():
    # independent uniform points: the off-diagonal sum is unbiased for (1 - 1/n) times
    # the continuum energy, which is 1 on the unit sphere
    v = np.random.default_rng(7).standard_normal((512, 3))
    pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    e = riesz_energy(pts, np.full(512, 1 / 512), RieszKernel(1.0))
    assert e == pytest.approx(1.0, abs=2e-2)


def test_distance_density_is_normalised():
    for k in (1, 2, 3, 5):
        val, _ = integrate.quad(ball_distance_density, 0, 2, args=(k,))
        assert val == pytest.approx(1.0, abs=1e-8)


def test_self_energy_of_a_disk():
    # mean inverse distance of two uniform points in the unit disk is 16 / (3 pi)
    assert self_energy(RieszKernel(1.0), 1.0, 2) == pytest.approx(16 / (3 * math.pi), rel=1e-8)
    assert self_energy(RieszKernel(2.0), 1.0, 2) == math.inf


def test_two_point_solution_is_symmetric():
    x = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
    for beta in (0.5, 1.0, 2.0):
        sol = minimize_energy(x, RieszKernel(beta), SolverOptions(intrinsic_dim=2, radius=0.5))
        assert sol.weights == pytest.approx([0.5, 0.5], abs=1e-9)


def test_collinear_three_points_against_grid_search():
    x = np.array([[0.0], [0.5], [1.0]])
    opts = SolverOptions(intrinsic_dim=1, radius=0.2)
    sol = minimize_energy(x, RieszKernel(0.5), opts)
    K = kernel_matrix(x, RieszKernel(0.5), 1, 0.2)
    val, w = brute_force_min(K)
    assert sol.energy == pytest.approx(val, abs=1e-4)
    assert sol.weights == pytest.approx(w, abs=5e-3)
    assert sol.weights[0] == pytest.approx(sol.weights[2], abs=1e-8)


def test_random_three_point_clouds_against_grid_search():
    gen = np.random.default_rng(2024)
    for _ in range(20):
        x = gen.uniform(-1, 1, (3, 3))
        beta = gen.uniform(0.2, 1.8)
        K = kernel_matrix(x, RieszKernel(beta), 2)
        sol = minimize_energy(x, RieszKernel(beta), SolverOptions(intrinsic_dim=2))
        val, _ = brute_force_min(K)
        assert sol.energy == pytest.approx(val, abs=1e-4)
        assert sol.energy <= val + 1e-12


def test_objective_matches_quadratic_energy():
    x = fibonacci_sphere(64)
    sol = minimize_energy(x, RieszKernel(1.0), SolverOptions(intrinsic_dim=2))
    assert quadratic_energy(x, sol.weights, RieszKernel(1.0), 2) == pytest.approx(sol.energy)


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_solver_beats_any_feasible_point(v):
    x = fibonacci_sphere(12)
    K = kernel_matrix(x, RieszKernel(1.0), 2)
    w, E, *_ = minimize_quadratic(K)
    trial = np.zeros(12)
    trial[:4] = np.asarray(v) + 1e-3
    trial /= trial.sum()
    assert E <= trial @ K @ trial + 1e-12


@given(st.integers(0, 2 ** 31))
def test_capacity_monotone_under_inclusion(seed):
    gen = np.random.default_rng(seed)
    x = gen.uniform(-1, 1, (12, 2))
    opts = SolverOptions(intrinsic_dim=2, radius=0.05)
    small = minimize_energy(x[:6], RieszKernel(1.0), opts).capacity
    big = minimize_energy(x, RieszKernel(1.0), opts).capacity
    assert big >= small * (1 - 1e-8)


def test_unit_sphere_capacity():
    c512 = capacity_value("sphere:d=3,R=1", 1.0, 512)
    c2048 = capacity_value("sphere:d=3,R=1", 1.0, 2048)
    assert abs(c512 - 1.0) <= 0.03
    assert abs(c2048 - 1.0) <= 0.015


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
def test_scaling_law(beta):
    k = RieszKernel(beta)
    opts = SolverOptions(intrinsic_dim=2)
    a = minimize_energy(fibonacci_sphere(256), k, opts)
    b = minimize_energy(fibonacci_sphere(256, 2.0), k, opts)
    slack = 10 * (a.gap * a.capacity ** 2 * 2 ** beta + b.gap * b.capacity ** 2) + 1e-12
    assert abs(b.capacity - 2 ** beta * a.capacity) <= slack


def test_empty_and_negative_beta():
    assert capacity_value("empty:d=3", 1.0, 10) == 0.0
    assert capacity_value("sphere:d=3,R=1", -1.0, 64) == 1.0


def test_singleton_capacity_decreases():
    vals = [capacity_value("singleton:d=4", 0.0, n) for n in (8, 32, 128, 512)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_beta_at_least_dimension_gives_zero():
    assert capacity_value("circle:R=1", 1.0, 64) == 0.0
    assert capacity_value("circle:R=1", 0.5, 64) > 0


def test_intrinsic_dimension_of_a_line_and_a_plane():
    gen = np.random.default_rng(0)
    line = np.c_[gen.uniform(0, 1, 400), np.zeros((400, 2))]
    plane = np.c_[gen.uniform(0, 1, (400, 2)), np.zeros(400)]
    assert intrinsic_dimension(line) == 1
    assert intrinsic_dimension(plane) == 2


def test_unknown_set_id():
    with pytest.raises(KeyError):
        discretize("torus:d=3", 10)


def test_singular_capacity_on_ball_holds():
    rep = check_singular_capacity(ball(4), [(0.2, 500), (0.1, 1000)])
    assert rep.verdict == "holds"


def test_singular_capacity_on_notch_fails():
    # in the plane the singular set has dimension 0 > d - 3, beta = d - 3 < 0
    rep = check_singular_capacity(notch(1.0), [(0.2, 500), (0.1, 1000)])
    assert rep.verdict == "fails"
