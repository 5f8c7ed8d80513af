import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from pathbv.geometry import (CATALOG_EXAMPLES, DimensionError, SingularSetApprox, ball, box,
                             example_spike, exterior_ball_radius, halfspace, in_tube, notch,
                             parse_domain, read_points_csv, rigid_motion, sampled_domain,
                             singular_set, spike_slab, write_points_csv)

coords = st.floats(-3, 3, allow_nan=False)


def test_ball_signed_distance():
    b = ball(2)
    assert b.q(np.zeros(2)) == pytest.approx(1.0)
    assert b.q(np.array([2.0, 0.0])) == pytest.approx(-1.0)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        ball(2).q(np.zeros(3))


def test_spike_point_outside_matches_sampled_boundary():
    dom = example_spike(4)
    x = np.array([0, 0, 0, 1.5])
    qx = float(dom.q(x))
    assert qx < 0
    pts = dom.boundary_sample(400_000, seed=3)
    d_min = cKDTree(pts).query(x)[0]
    assert abs(qx) == pytest.approx(d_min, abs=0.02)
    assert qx == pytest.approx(-0.5 * math.sin(math.pi / 4), abs=1e-6)


@pytest.mark.parametrize("spec", [s for s in CATALOG_EXAMPLES if not s.startswith("csv")])
@given(a=st.lists(coords, min_size=5, max_size=5), b=st.lists(coords, min_size=5, max_size=5))
def test_q_is_one_lipschitz(spec, a, b):
    dom = parse_domain(spec)
    x, y = np.array(a[:dom.dim]), np.array(b[:dom.dim])
    assert abs(dom.q(x) - dom.q(y)) <= np.linalg.norm(x - y) + 1e-9


@given(angle=st.floats(0, 2 * math.pi), shift=st.lists(st.floats(-0.3, 0.3), min_size=2,
                                                        max_size=2),
       x=st.lists(coords, min_size=2, max_size=2))
def test_rigid_motion_invariance(angle, shift, x):
    base = notch(1.0)
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    b = np.array(shift)
    moved = rigid_motion(base, R, b)
    x = np.array(x)
    assert moved.q(R @ x + b) == pytest.approx(float(base.q(x)), abs=1e-9)


def test_rigid_motion_preserves_exterior_radius():
    base = notch(1.0)
    R = Rotation.from_euler("z", 0.7).as_matrix()[:2, :2]
    moved = rigid_motion(base, R, np.array([0.1, -0.2]))
    y = np.array([1.0, 1.7])
    r0 = exterior_ball_radius(base, y).radius
    r1 = exterior_ball_radius(moved, R @ y + np.array([0.1, -0.2])).radius
    assert r1 == pytest.approx(r0, abs=1e-4)


@pytest.mark.parametrize("dom", [ball(2), ball(3, 2.0), box(2), halfspace(3)],
                         ids=["ball2", "ball3", "box2", "halfspace3"])
def test_convex_domains_have_infinite_radius(dom):
    pts = dom.boundary_sample(50, seed=1)
    # box corners are fine too: convexity puts every boundary point on a supporting plane
    for y in pts[:20]:
        assert exterior_ball_radius(dom, y).radius == math.inf


def test_spike_tip_radius_zero():
    assert exterior_ball_radius(example_spike(4), np.array([0, 0, 0, 1.0])).radius == 0.0


def _brute_exterior_radius(dom, y, normal, radii, n_grid=121):
    """Largest radius on a grid whose ball centred at y + rho n avoids O."""
    best = 0.0
    u = np.linspace(-1, 1, n_grid)
    disk = np.stack(np.meshgrid(u, u), -1).reshape(-1, 2)
    disk = disk[np.linalg.norm(disk, axis=1) <= 1]
    for rho in radii:
        c = y + rho * normal
        if np.all(dom.q(c + rho * disk) <= 1e-9 * max(rho, 1)):
            best = rho
        else:
            break
    return best


def test_notch_radii_against_grid_of_balls():
    dom = notch(1.0)
    radii = np.arange(0.01, 3.0, 0.01)
    for y, n in [((1.0, 1.7), (1.0, 0.0)), ((2.3, 1.0), (0.0, 1.0)), ((1.0, 1.05), (1.0, 0.0))]:
        brute = _brute_exterior_radius(dom, np.array(y), np.array(n), radii)
        got = exterior_ball_radius(dom, np.array(y)).radius
        assert got == pytest.approx(brute, abs=0.011)
    assert exterior_ball_radius(dom, np.array([1.0, 1.0])).radius == 0.0


def test_notch_singular_set_near_corner():
    s = singular_set(notch(1.0), 0.1, 4000, seed=0)
    assert not s.empty
    assert np.linalg.norm(s.points - 1.0, axis=1).max() <= 0.1 + 1e-6


def test_ball_singular_set_empty():
    assert singular_set(ball(3), 0.1, 500, seed=0).empty


def test_spike_singular_set_clusters_at_tip():
    s = singular_set(example_spike(4), 0.1, 4000, seed=0)
    tip = np.array([0, 0, 0, 1.0])
    assert not s.empty
    assert np.linalg.norm(s.points - tip, axis=1).max() <= 0.1 + 1e-6


def test_spike_slab_singular_set_is_a_cube_face():
    s = singular_set(spike_slab(5), 0.1, 8000, seed=0)
    assert not s.empty
    spread = s.points.max(axis=0) - s.points.min(axis=0)
    assert (spread > 0.5).sum() >= 2


def test_in_tube_examples():
    empty = SingularSetApprox(0.1, np.zeros((0, 4)), 0.1)
    assert in_tube(empty, np.ones(4)) is False
    one = SingularSetApprox(0.1, np.array([[0, 0, 0, 1.0]]), 0.1)
    assert in_tube(one, np.array([0, 0, 0, 1.05])) is True
    assert in_tube(one, np.zeros(4)) is False


def test_parse_domain_rejects_unknown():
    with pytest.raises(KeyError):
        parse_domain("torus:d=3")
    with pytest.raises(KeyError):
        parse_domain("ball:d=2,radius=1")


def test_csv_domain_round_trip(tmp_path):
    pts = ball(2).boundary_sample(2000, seed=4)
    path = tmp_path / "circle.csv"
    write_points_csv(path, pts)
    assert np.allclose(read_points_csv(path), pts)
    dom = parse_domain(f"csv:{path}")
    assert dom.q(np.zeros(2)) == pytest.approx(1.0, abs=0.01)
    assert dom.q(np.array([0.5, 0.0])) == pytest.approx(0.5, abs=0.01)
    assert dom.q(np.array([1.5, 0.0])) == pytest.approx(-0.5, abs=0.01)
    assert sampled_domain(pts).dim == 2
