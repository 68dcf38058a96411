"""Geometry and car-following kernel tests.

Closed-form oracles are evaluated independently inside each test so a kernel
bug cannot hide behind a shared helper.
"""

import importlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bida import kernels
from bida.kernels import _pure


def test_wrap_angle_basics():
    assert kernels.wrap_angle(0.0) == 0.0
    assert kernels.wrap_angle(math.pi) == pytest.approx(math.pi, abs=1e-15)
    assert kernels.wrap_angle(-math.pi) == pytest.approx(math.pi, abs=1e-15)
    assert kernels.wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2, abs=1e-12)
    assert kernels.wrap_angle(-3 * math.pi / 2) == pytest.approx(math.pi / 2, abs=1e-12)
    assert kernels.wrap_angle(2 * math.pi) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_wrap_angle_range_and_identity(a):
    w = kernels.wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-9)
    assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-9)


IDM_ARGS = dict(v0=30.0, t_headway=1.5, s0=2.0, a_max=1.5, b_comf=2.0,
                delta=4.0, b_emergency=8.0)


def idm(v, gap, lead):
    return kernels.idm_accel(v, gap, lead, IDM_ARGS["v0"], IDM_ARGS["t_headway"],
                             IDM_ARGS["s0"], IDM_ARGS["a_max"], IDM_ARGS["b_comf"],
                             IDM_ARGS["delta"], IDM_ARGS["b_emergency"])


def test_idm_equal_speed_following():
    # v=20 behind a leader at 20 with a 40 m gap: the approach term vanishes,
    # desired gap is s0 + v*T = 32, so a = a_max*(1 - (20/30)^4 - (32/40)^2).
    expected = 1.5 * (1.0 - (20.0 / 30.0) ** 4 - (32.0 / 40.0) ** 2)
    assert idm(20.0, 40.0, 20.0) == pytest.approx(expected, abs=1e-12)


def test_idm_free_road_sentinel():
    a = idm(20.0, 1e6, 20.0)
    free = 1.5 * (1.0 - (20.0 / 30.0) ** 4)
    assert a == pytest.approx(free, abs=1e-6)


def test_idm_receding_leader_floors_dynamic_gap():
    # Leader pulling away fast: vT + v*dv/(2*sqrt(ab)) < 0, floored at 0,
    # so the desired gap collapses to s0 alone.
    expected = 1.5 * (1.0 - (10.0 / 30.0) ** 4 - (2.0 / 20.0) ** 2)
    assert idm(10.0, 20.0, 30.0) == pytest.approx(expected, abs=1e-12)


def test_idm_clamped_to_emergency_braking():
    assert idm(30.0, 0.0, 0.0) == -8.0
    assert idm(30.0, 1.0, 0.0) == -8.0


def test_idm_never_exceeds_bounds():
    rng = np.random.default_rng(7)
    for _ in range(500):
        v = rng.uniform(0, 40)
        gap = rng.uniform(0, 200)
        lead = rng.uniform(0, 40)
        a = idm(v, gap, lead)
        assert -8.0 <= a <= 1.5
        assert math.isfinite(a)


def test_bicycle_step_straight_closed_form():
    # Position advances with the pre-step speed; speed updates afterwards.
    x, y, yaw, v = kernels.bicycle_step(0.0, 0.0, 0.0, 10.0, 1.0, 0.0, 2.7, 0.05)
    assert (x, y, yaw) == (0.5, 0.0, 0.0)
    assert v == pytest.approx(10.05, abs=1e-12)


def test_bicycle_step_constant_accel_profile():
    # v=10 accelerating at +2 for 0.5 s: v -> 11; displacement is the Euler
    # sum of pre-step speeds, dt*(n*v0 + a*dt*n*(n-1)/2).
    x, y, yaw, v = 0.0, 0.0, 0.0, 10.0
    for _ in range(10):
        x, y, yaw, v = kernels.bicycle_step(x, y, yaw, v, 2.0, 0.0, 2.7, 0.05)
    assert v == pytest.approx(11.0, abs=1e-12)
    assert x == pytest.approx(0.05 * (10 * 10.0 + 2.0 * 0.05 * 45), abs=1e-12)


def test_bicycle_step_yaw_rate():
    # Constant steer at constant speed: yaw rate = v/L * tan(steer).
    steer, v, L, dt = 0.1, 12.0, 2.7, 0.05
    yaw = 0.0
    x = y = 0.0
    vv = v
    for _ in range(40):
        x, y, yaw, vv = kernels.bicycle_step(x, y, yaw, vv, 0.0, steer, L, dt)
    assert yaw == pytest.approx(40 * dt * v / L * math.tan(steer), abs=1e-9)


def test_bicycle_step_speed_floor():
    _, _, _, v = kernels.bicycle_step(0.0, 0.0, 0.0, 0.1, -8.0, 0.0, 2.7, 0.05)
    assert v == 0.0


def test_obb_corners_axis_aligned():
    c = kernels.obb_corners(0.0, 0.0, 0.0, 4.8, 2.0)
    pts = [(c[0], c[1]), (c[2], c[3]), (c[4], c[5]), (c[6], c[7])]
    assert pts == [(2.4, 1.0), (2.4, -1.0), (-2.4, -1.0), (-2.4, 1.0)]


def test_obb_corners_rotation():
    c = kernels.obb_corners(1.0, 2.0, math.pi / 2, 4.0, 2.0)
    pts = sorted((round(c[2 * i], 9), round(c[2 * i + 1], 9)) for i in range(4))
    assert pts == [(0.0, 0.0), (0.0, 4.0), (2.0, 0.0), (2.0, 4.0)]


def test_obb_overlap_touching_counts():
    assert kernels.obb_overlap(0, 0, 0, 4.8, 2.0, 4.8, 0, 0, 4.8, 2.0)
    assert not kernels.obb_overlap(0, 0, 0, 4.8, 2.0, 4.8 + 1e-9, 0, 0, 4.8, 2.0)


def test_obb_overlap_rotated_cross():
    assert kernels.obb_overlap(0, 0, 0, 6.0, 1.0, 0, 0, math.pi / 2, 6.0, 1.0)
    # Thin diagonal bar near a box corner: bounding circles intersect but SAT
    # must still separate them.
    assert not kernels.obb_overlap(0, 0, 0, 4.0, 2.0, 3.4, 2.6, math.pi / 4, 4.0, 0.4)


def _point_in_obb(px, py, x, y, yaw, length, width):
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = px - x, py - y
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return abs(lx) <= length / 2 and abs(ly) <= width / 2


@settings(max_examples=150, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi),
       st.floats(-math.pi, math.pi))
def test_obb_overlap_vs_point_sampling(bx, by, yaw_a, yaw_b):
    a = (0.0, 0.0, yaw_a, 4.8, 2.0)
    b = (bx, by, yaw_b, 4.8, 2.0)
    overlap = kernels.obb_overlap(*a, *b)
    # Sample a grid of points inside box B; any hit inside A proves overlap.
    hit = False
    for u in np.linspace(-0.5, 0.5, 13):
        for w in np.linspace(-0.5, 0.5, 7):
            c, s = math.cos(yaw_b), math.sin(yaw_b)
            px = bx + c * u * 4.8 - s * w * 2.0
            py = by + s * u * 4.8 + c * w * 2.0
            if _point_in_obb(px, py, *a):
                hit = True
                break
        if hit:
            break
    if hit:
        assert overlap
    if not overlap:
        assert kernels.obb_distance(*a, *b) == 0.0 or not hit


def test_obb_distance_axis_aligned_gap():
    d = kernels.obb_distance(0, 0, 0, 4.8, 2.0, 10.0, 0, 0, 4.8, 2.0)
    assert d == pytest.approx(10.0 - 4.8, abs=1e-12)


def test_obb_distance_diagonal_corner_to_corner():
    d = kernels.obb_distance(0, 0, 0, 4.8, 2.0, 10.0, 10.0, 0, 4.8, 2.0)
    assert d == pytest.approx(math.hypot(10 - 4.8, 10 - 2.0), abs=1e-12)


def test_obb_distance_zero_when_overlapping():
    assert kernels.obb_distance(0, 0, 0, 4.8, 2.0, 1.0, 0.5, 0.3, 4.8, 2.0) == 0.0


def _perimeter_points(x, y, yaw, length, width, n):
    c = kernels.obb_corners(x, y, yaw, length, width)
    pts = []
    for i in range(4):
        ax, ay = c[2 * i], c[2 * i + 1]
        bx2, by2 = c[2 * ((i + 1) % 4)], c[2 * ((i + 1) % 4) + 1]
        for t in np.linspace(0.0, 1.0, n, endpoint=False):
            pts.append((ax + t * (bx2 - ax), ay + t * (by2 - ay)))
    return pts


@settings(max_examples=60, deadline=None)
@given(st.floats(-12, 12), st.floats(-12, 12), st.floats(-math.pi, math.pi),
       st.floats(-math.pi, math.pi))
def test_obb_distance_vs_boundary_sampling(bx, by, yaw_a, yaw_b):
    a = (0.0, 0.0, yaw_a, 4.8, 2.0)
    b = (bx, by, yaw_b, 4.8, 2.0)
    d = kernels.obb_distance(*a, *b)
    if d == 0.0:
        return
    sampled = min(
        kernels.point_obb_distance(px, py, *b)
        for px, py in _perimeter_points(*a, 80)
    )
    # Sampling only overestimates; spacing bounds the overestimate.
    assert d <= sampled + 1e-9
    assert d >= sampled - 0.1


def test_point_obb_distance_cases():
    assert kernels.point_obb_distance(0.0, 0.0, 0, 0, 0, 4.8, 2.0) == 0.0
    assert kernels.point_obb_distance(5.0, 0.0, 0, 0, 0, 4.8, 2.0) == pytest.approx(2.6, abs=1e-12)
    assert kernels.point_obb_distance(0.0, 3.0, 0, 0, math.pi / 2, 4.8, 2.0) == pytest.approx(0.6, abs=1e-9)


def _arrays(rows):
    xs, ys, yaws, ls, ws = zip(*rows)
    return (np.array(xs, float), np.array(ys, float), np.array(yaws, float),
            np.array(ls, float), np.array(ws, float))


def test_collision_pairs_basic():
    far = _arrays([(0, 0, 0, 4.8, 2.0), (100, 0, 0, 4.8, 2.0)])
    assert kernels.collision_pairs(*far) == []
    same = _arrays([(0, 0, 0, 4.8, 2.0), (0, 0, 0, 4.8, 2.0)])
    assert kernels.collision_pairs(*same) == [(0, 1)]
    chain = _arrays([(0, 0, 0, 4.8, 2.0), (4.0, 0, 0, 4.8, 2.0), (100, 0, 0, 4.8, 2.0)])
    assert kernels.collision_pairs(*chain) == [(0, 1)]


def test_min_clearance_near_exact_far_bounded():
    near = _arrays([(0, 0, 0, 4.8, 2.0), (5.8, 0, 0, 4.8, 2.0)])
    assert kernels.min_clearance(0, *near) == pytest.approx(1.0, abs=1e-12)
    far = _arrays([(0, 0, 0, 4.8, 2.0), (100, 0, 0, 4.8, 2.0)])
    d = kernels.min_clearance(0, *far)
    assert d >= kernels.FAR_CLEARANCE
    assert d <= 100.0 - 4.8  # lower bound never exceeds the true clearance


def test_min_clearance_alone_is_infinite():
    alone = _arrays([(0, 0, 0, 4.8, 2.0)])
    assert math.isinf(kernels.min_clearance(0, *alone))


# ---------------------------------------------------------------------------
# Backend equivalence

_core = None
try:  # compiled twin may be absent in pure-Python installs
    _core = importlib.import_module("bida.kernels._core")
except ImportError:
    pass


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_backends_bit_identical():
    rng = np.random.default_rng(123)
    for _ in range(300):
        v, gap, lead = rng.uniform(0, 40), rng.uniform(0, 300), rng.uniform(0, 40)
        assert _pure.idm_accel(v, gap, lead, 30, 1.5, 2, 1.5, 2, 4, 8) == \
            _core.idm_accel(v, gap, lead, 30, 1.5, 2, 1.5, 2, 4, 8)
        args = (rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-7, 7),
                rng.uniform(0, 30), rng.uniform(-8, 3), rng.uniform(-0.6, 0.6),
                2.7, 0.05)
        assert _pure.bicycle_step(*args) == tuple(_core.bicycle_step(*args))
        ba = (rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-4, 4),
              rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4))
        a_box = (ba[0], ba[1], ba[2], 4.8, 2.0)
        b_box = (ba[3], ba[4], ba[5], 4.8, 2.0)
        assert _pure.obb_distance(*a_box, *b_box) == _core.obb_distance(*a_box, *b_box)
        assert _pure.obb_overlap(*a_box, *b_box) == _core.obb_overlap(*a_box, *b_box)
        assert _pure.wrap_angle(ba[0] * 3) == _core.wrap_angle(ba[0] * 3)


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
def test_backends_array_kernels_identical():
    rng = np.random.default_rng(9)
    n = 14
    xs = rng.uniform(-60, 60, n)
    ys = rng.uniform(-6, 6, n)
    yaws = rng.uniform(-math.pi, math.pi, n)
    ls = np.full(n, 4.8)
    ws = np.full(n, 2.0)
    assert _pure.collision_pairs(xs, ys, yaws, ls, ws) == \
        _core.collision_pairs(xs, ys, yaws, ls, ws)
    for i in range(n):
        assert _pure.min_clearance(i, xs, ys, yaws, ls, ws) == \
            _core.min_clearance(i, xs, ys, yaws, ls, ws)
