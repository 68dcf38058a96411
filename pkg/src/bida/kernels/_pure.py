"""Pure-Python reference implementation of the hot numeric kernels.

The compiled core (``_core.pyx``) mirrors these functions line for line: same
formulas, same operation order, so both backends agree to machine precision.
Keep the two files in sync when editing.
"""

from __future__ import annotations

import math

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def idm_accel(
    v: float,
    gap: float,
    lead_speed: float,
    v0: float,
    t_headway: float,
    s0: float,
    a_max: float,
    b_comf: float,
    delta: float,
    b_emergency: float,
) -> float:
    """Car-following acceleration (intelligent driver model).

    The dynamic part of the desired gap is floored at zero so a faster
    leader never triggers phantom braking. Output is clamped to
    [-b_emergency, a_max]; gap is floored at 0.1 m so overlapping agents
    produce a hard (but finite) brake instead of a singularity.
    """
    if gap < 0.1:
        gap = 0.1
    ratio = v / v0 if v0 > 0.0 else 0.0
    dynamic = v * t_headway + v * (v - lead_speed) / (2.0 * math.sqrt(a_max * b_comf))
    if dynamic < 0.0:
        dynamic = 0.0
    s_star = s0 + dynamic
    a = a_max * (1.0 - ratio**delta - (s_star / gap) * (s_star / gap))
    if a < -b_emergency:
        a = -b_emergency
    elif a > a_max:
        a = a_max
    return a


def bicycle_step(
    x: float,
    y: float,
    yaw: float,
    v: float,
    accel: float,
    steer: float,
    wheelbase: float,
    dt: float,
) -> tuple[float, float, float, float]:
    """One explicit-Euler step of the kinematic bicycle model.

    Position advances with the pre-step speed and heading; speed never goes
    negative.
    """
    nx = x + v * math.cos(yaw) * dt
    ny = y + v * math.sin(yaw) * dt
    nyaw = wrap_angle(yaw + v / wheelbase * math.tan(steer) * dt)
    nv = v + accel * dt
    if nv < 0.0:
        nv = 0.0
    return nx, ny, nyaw, nv


def point_segment_distance(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> float:
    dx = bx - ax
    dy = by - ay
    seg2 = dx * dx + dy * dy
    if seg2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / seg2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    else:
        t = 0.0
    cx = ax + t * dx - px
    cy = ay + t * dy - py
    return math.sqrt(cx * cx + cy * cy)


def obb_corners(
    x: float, y: float, yaw: float, length: float, width: float
) -> list[float]:
    """Corner coordinates [x0,y0,...,x3,y3] in perimeter order."""
    c = math.cos(yaw)
    s = math.sin(yaw)
    hl = 0.5 * length
    hw = 0.5 * width
    ux = c * hl
    uy = s * hl
    vx = -s * hw
    vy = c * hw
    return [
        x + ux + vx,
        y + uy + vy,
        x + ux - vx,
        y + uy - vy,
        x - ux - vx,
        y - uy - vy,
        x - ux + vx,
        y - uy + vy,
    ]


def _separated_on_axis(
    ax: float,
    ay: float,
    dx: float,
    dy: float,
    c1: float,
    s1: float,
    hl1: float,
    hw1: float,
    c2: float,
    s2: float,
    hl2: float,
    hw2: float,
) -> bool:
    center = abs(dx * ax + dy * ay)
    r1 = hl1 * abs(ax * c1 + ay * s1) + hw1 * abs(-ax * s1 + ay * c1)
    r2 = hl2 * abs(ax * c2 + ay * s2) + hw2 * abs(-ax * s2 + ay * c2)
    return center > r1 + r2


def obb_overlap(
    x1: float,
    y1: float,
    yaw1: float,
    l1: float,
    w1: float,
    x2: float,
    y2: float,
    yaw2: float,
    l2: float,
    w2: float,
) -> bool:
    """Separating-axis overlap test for two oriented rectangles.

    Touching boundaries count as overlap (closed boxes).
    """
    c1 = math.cos(yaw1)
    s1 = math.sin(yaw1)
    c2 = math.cos(yaw2)
    s2 = math.sin(yaw2)
    hl1 = 0.5 * l1
    hw1 = 0.5 * w1
    hl2 = 0.5 * l2
    hw2 = 0.5 * w2
    dx = x2 - x1
    dy = y2 - y1
    if _separated_on_axis(c1, s1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(-s1, c1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(c2, s2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _separated_on_axis(-s2, c2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    return True


def obb_distance(
    x1: float,
    y1: float,
    yaw1: float,
    l1: float,
    w1: float,
    x2: float,
    y2: float,
    yaw2: float,
    l2: float,
    w2: float,
) -> float:
    """Euclidean clearance between two oriented rectangles (0 if overlapping)."""
    if obb_overlap(x1, y1, yaw1, l1, w1, x2, y2, yaw2, l2, w2):
        return 0.0
    ca = obb_corners(x1, y1, yaw1, l1, w1)
    cb = obb_corners(x2, y2, yaw2, l2, w2)
    best = math.inf
    for i in range(4):
        px = ca[2 * i]
        py = ca[2 * i + 1]
        for j in range(4):
            k = (j + 1) % 4
            d = point_segment_distance(
                px, py, cb[2 * j], cb[2 * j + 1], cb[2 * k], cb[2 * k + 1]
            )
            if d < best:
                best = d
    for i in range(4):
        px = cb[2 * i]
        py = cb[2 * i + 1]
        for j in range(4):
            k = (j + 1) % 4
            d = point_segment_distance(
                px, py, ca[2 * j], ca[2 * j + 1], ca[2 * k], ca[2 * k + 1]
            )
            if d < best:
                best = d
    return best


def point_obb_distance(
    px: float, py: float, x: float, y: float, yaw: float, length: float, width: float
) -> float:
    """Distance from a point to an oriented rectangle (0 inside)."""
    c = math.cos(yaw)
    s = math.sin(yaw)
    rx = px - x
    ry = py - y
    lx = abs(c * rx + s * ry) - 0.5 * length
    ly = abs(-s * rx + c * ry) - 0.5 * width
    if lx < 0.0:
        lx = 0.0
    if ly < 0.0:
        ly = 0.0
    return math.sqrt(lx * lx + ly * ly)


def collision_pairs(xs, ys, yaws, lengths, widths) -> list[tuple[int, int]]:
    """Indices (i, j), i < j, of overlapping rectangle pairs.

    Broad phase by bounding-circle distance, then the exact axis test.
    """
    n = len(xs)
    out: list[tuple[int, int]] = []
    for i in range(n):
        ri = 0.5 * math.sqrt(lengths[i] * lengths[i] + widths[i] * widths[i])
        for j in range(i + 1, n):
            dx = xs[j] - xs[i]
            dy = ys[j] - ys[i]
            rj = 0.5 * math.sqrt(lengths[j] * lengths[j] + widths[j] * widths[j])
            if dx * dx + dy * dy > (ri + rj) * (ri + rj):
                continue
            if obb_overlap(
                xs[i], ys[i], yaws[i], lengths[i], widths[i],
                xs[j], ys[j], yaws[j], lengths[j], widths[j],
            ):
                out.append((i, j))
    return out


FAR_CLEARANCE = 30.0


def min_clearance(idx: int, xs, ys, yaws, lengths, widths) -> float:
    """Smallest rectangle clearance from agent ``idx`` to every other agent.

    Beyond FAR_CLEARANCE the bounding-circle lower bound stands in for the
    exact distance; at that range the safety reward is flat to ~1e-3.
    """
    n = len(xs)
    ri = 0.5 * math.sqrt(lengths[idx] * lengths[idx] + widths[idx] * widths[idx])
    best = math.inf
    for j in range(n):
        if j == idx:
            continue
        dx = xs[j] - xs[idx]
        dy = ys[j] - ys[idx]
        rj = 0.5 * math.sqrt(lengths[j] * lengths[j] + widths[j] * widths[j])
        bound = math.sqrt(dx * dx + dy * dy) - ri - rj
        if bound > FAR_CLEARANCE:
            d = bound
        else:
            d = obb_distance(
                xs[idx], ys[idx], yaws[idx], lengths[idx], widths[idx],
                xs[j], ys[j], yaws[j], lengths[j], widths[j],
            )
        if d < best:
            best = d
    return best
