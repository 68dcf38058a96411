# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_pure.py``.

Same formulas in the same operation order so both backends agree to machine
precision. Keep in sync with the pure module when editing.
"""

from libc.math cimport M_PI, cos, sin, tan, sqrt, fabs, fmod, pow, INFINITY

cdef double TWO_PI = 2.0 * M_PI
FAR_CLEARANCE = 30.0
cdef double _FAR = 30.0


cdef inline double _wrap(double a) nogil:
    a = fmod(a + M_PI, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - M_PI


def wrap_angle(double a):
    """Wrap an angle into (-pi, pi]."""
    return _wrap(a)


cdef inline double _idm(double v, double gap, double lead_speed, double v0,
                        double t_headway, double s0, double a_max,
                        double b_comf, double delta, double b_emergency) nogil:
    cdef double ratio, dynamic, s_star, a
    if gap < 0.1:
        gap = 0.1
    ratio = v / v0 if v0 > 0.0 else 0.0
    dynamic = v * t_headway + v * (v - lead_speed) / (2.0 * sqrt(a_max * b_comf))
    if dynamic < 0.0:
        dynamic = 0.0
    s_star = s0 + dynamic
    a = a_max * (1.0 - pow(ratio, delta) - (s_star / gap) * (s_star / gap))
    if a < -b_emergency:
        a = -b_emergency
    elif a > a_max:
        a = a_max
    return a


def idm_accel(double v, double gap, double lead_speed, double v0,
              double t_headway, double s0, double a_max, double b_comf,
              double delta, double b_emergency):
    """Car-following acceleration (intelligent driver model), clamped."""
    return _idm(v, gap, lead_speed, v0, t_headway, s0, a_max, b_comf, delta, b_emergency)


def bicycle_step(double x, double y, double yaw, double v, double accel,
                 double steer, double wheelbase, double dt):
    """One explicit-Euler step of the kinematic bicycle model."""
    cdef double nx = x + v * cos(yaw) * dt
    cdef double ny = y + v * sin(yaw) * dt
    cdef double nyaw = _wrap(yaw + v / wheelbase * tan(steer) * dt)
    cdef double nv = v + accel * dt
    if nv < 0.0:
        nv = 0.0
    return nx, ny, nyaw, nv


cdef inline double _pt_seg(double px, double py, double ax, double ay,
                           double bx, double by) nogil:
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double seg2 = dx * dx + dy * dy
    cdef double t, cx, cy
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
    return sqrt(cx * cx + cy * cy)


def point_segment_distance(double px, double py, double ax, double ay,
                           double bx, double by):
    return _pt_seg(px, py, ax, ay, bx, by)


cdef inline void _corners(double x, double y, double yaw, double length,
                          double width, double* out) nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double hl = 0.5 * length
    cdef double hw = 0.5 * width
    cdef double ux = c * hl
    cdef double uy = s * hl
    cdef double vx = -s * hw
    cdef double vy = c * hw
    out[0] = x + ux + vx
    out[1] = y + uy + vy
    out[2] = x + ux - vx
    out[3] = y + uy - vy
    out[4] = x - ux - vx
    out[5] = y - uy - vy
    out[6] = x - ux + vx
    out[7] = y - uy + vy


def obb_corners(double x, double y, double yaw, double length, double width):
    """Corner coordinates [x0,y0,...,x3,y3] in perimeter order."""
    cdef double buf[8]
    _corners(x, y, yaw, length, width, buf)
    return [buf[0], buf[1], buf[2], buf[3], buf[4], buf[5], buf[6], buf[7]]


cdef inline bint _sep_axis(double ax, double ay, double dx, double dy,
                           double c1, double s1, double hl1, double hw1,
                           double c2, double s2, double hl2, double hw2) nogil:
    cdef double center = fabs(dx * ax + dy * ay)
    cdef double r1 = hl1 * fabs(ax * c1 + ay * s1) + hw1 * fabs(-ax * s1 + ay * c1)
    cdef double r2 = hl2 * fabs(ax * c2 + ay * s2) + hw2 * fabs(-ax * s2 + ay * c2)
    return center > r1 + r2


cdef inline bint _overlap(double x1, double y1, double yaw1, double l1, double w1,
                          double x2, double y2, double yaw2, double l2, double w2) nogil:
    cdef double c1 = cos(yaw1)
    cdef double s1 = sin(yaw1)
    cdef double c2 = cos(yaw2)
    cdef double s2 = sin(yaw2)
    cdef double hl1 = 0.5 * l1
    cdef double hw1 = 0.5 * w1
    cdef double hl2 = 0.5 * l2
    cdef double hw2 = 0.5 * w2
    cdef double dx = x2 - x1
    cdef double dy = y2 - y1
    if _sep_axis(c1, s1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _sep_axis(-s1, c1, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _sep_axis(c2, s2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    if _sep_axis(-s2, c2, dx, dy, c1, s1, hl1, hw1, c2, s2, hl2, hw2):
        return False
    return True


def obb_overlap(double x1, double y1, double yaw1, double l1, double w1,
                double x2, double y2, double yaw2, double l2, double w2):
    """Separating-axis overlap test for two oriented rectangles (closed)."""
    return _overlap(x1, y1, yaw1, l1, w1, x2, y2, yaw2, l2, w2)


cdef double _distance(double x1, double y1, double yaw1, double l1, double w1,
                      double x2, double y2, double yaw2, double l2, double w2) nogil:
    cdef double ca[8]
    cdef double cb[8]
    cdef double best, d, px, py
    cdef int i, j, k
    if _overlap(x1, y1, yaw1, l1, w1, x2, y2, yaw2, l2, w2):
        return 0.0
    _corners(x1, y1, yaw1, l1, w1, ca)
    _corners(x2, y2, yaw2, l2, w2, cb)
    best = INFINITY
    for i in range(4):
        px = ca[2 * i]
        py = ca[2 * i + 1]
        for j in range(4):
            k = (j + 1) % 4
            d = _pt_seg(px, py, cb[2 * j], cb[2 * j + 1], cb[2 * k], cb[2 * k + 1])
            if d < best:
                best = d
    for i in range(4):
        px = cb[2 * i]
        py = cb[2 * i + 1]
        for j in range(4):
            k = (j + 1) % 4
            d = _pt_seg(px, py, ca[2 * j], ca[2 * j + 1], ca[2 * k], ca[2 * k + 1])
            if d < best:
                best = d
    return best


def obb_distance(double x1, double y1, double yaw1, double l1, double w1,
                 double x2, double y2, double yaw2, double l2, double w2):
    """Euclidean clearance between two oriented rectangles (0 if overlapping)."""
    return _distance(x1, y1, yaw1, l1, w1, x2, y2, yaw2, l2, w2)


def point_obb_distance(double px, double py, double x, double y, double yaw,
                       double length, double width):
    """Distance from a point to an oriented rectangle (0 inside)."""
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double rx = px - x
    cdef double ry = py - y
    cdef double lx = fabs(c * rx + s * ry) - 0.5 * length
    cdef double ly = fabs(-s * rx + c * ry) - 0.5 * width
    if lx < 0.0:
        lx = 0.0
    if ly < 0.0:
        ly = 0.0
    return sqrt(lx * lx + ly * ly)


def collision_pairs(double[:] xs, double[:] ys, double[:] yaws,
                    double[:] lengths, double[:] widths):
    """Indices (i, j), i < j, of overlapping rectangle pairs."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, j
    cdef double ri, rj, dx, dy
    out = []
    for i in range(n):
        ri = 0.5 * sqrt(lengths[i] * lengths[i] + widths[i] * widths[i])
        for j in range(i + 1, n):
            dx = xs[j] - xs[i]
            dy = ys[j] - ys[i]
            rj = 0.5 * sqrt(lengths[j] * lengths[j] + widths[j] * widths[j])
            if dx * dx + dy * dy > (ri + rj) * (ri + rj):
                continue
            if _overlap(xs[i], ys[i], yaws[i], lengths[i], widths[i],
                        xs[j], ys[j], yaws[j], lengths[j], widths[j]):
                out.append((i, j))
    return out


def min_clearance(Py_ssize_t idx, double[:] xs, double[:] ys, double[:] yaws,
                  double[:] lengths, double[:] widths):
    """Smallest rectangle clearance from agent ``idx`` to every other agent.

    Beyond FAR_CLEARANCE the bounding-circle lower bound stands in for the
    exact distance (the safety reward is flat there).
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t j
    cdef double ri = 0.5 * sqrt(lengths[idx] * lengths[idx] + widths[idx] * widths[idx])
    cdef double best = INFINITY
    cdef double dx, dy, rj, bound, d
    for j in range(n):
        if j == idx:
            continue
        dx = xs[j] - xs[idx]
        dy = ys[j] - ys[idx]
        rj = 0.5 * sqrt(lengths[j] * lengths[j] + widths[j] * widths[j])
        bound = sqrt(dx * dx + dy * dy) - ri - rj
        if bound > _FAR:
            d = bound
        else:
            d = _distance(xs[idx], ys[idx], yaws[idx], lengths[idx], widths[idx],
                          xs[j], ys[j], yaws[j], lengths[j], widths[j])
        if d < best:
            best = d
    return best
