"""Reference trajectories and low-level tracking for the ego vehicle.

A meta-action maps to a short reference trajectory: a closed-form
longitudinal speed profile composed with a quintic lateral blend onto the
target lane (highway) or onto the fixed turn path (T-intersection). A
finite-horizon LQR on the linearized error dynamics converts the reference
into per-tick acceleration and steering commands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bida import kernels
from bida.actions import HighwayAction, ScenarioKind, TIntersectionAction
from bida.world import WHEELBASE, VehicleState, WorldState

LANE_CHANGE_TIME = 3.0
ALIGN_TIME = 1.5
NOMINAL_ACCEL = 2.0

CREEP_SPEED = 2.0
PROCEED_ACCEL = 1.0
PROCEED_FAST_ACCEL = 2.0
TURN_LAT_COMFORT = 2.5  # m/s^2 cap on the arc for the normal entry action
TURN_LAT_FAST = 3.6  # below the 4.0 hard limit: leaves room for re-alignment blends

# Peak acceleration of a rest-to-rest quintic of displacement D over time T
# is QUINTIC_PEAK_ACCEL * D / T^2.
QUINTIC_PEAK_ACCEL = 10.0 / math.sqrt(3.0)
# peak |accel| of a blend that only cancels a unit initial lateral velocity
# is QUINTIC_PEAK_VEL / T (extremum of -36t + 96t^2 - 60t^3 on [0, 1])
QUINTIC_PEAK_VEL = 3.94
ALIGN_LAT_CAP = 3.5  # m/s^2 allowed during a lateral re-alignment

LQR_HORIZON = 10
LQR_Q = (1.0, 0.5, 0.2)  # e_y, e_heading, e_v weights
LQR_R = (0.05, 0.05)  # accel, steer weights
SPEED_QUANTUM = 0.05  # m/s grid for gain memoization


class HorizonExhausted(RuntimeError):
    """Tracker queried past the end of its reference trajectory."""


class InfeasibleManeuver(Exception):
    """The requested maneuver has no realizable trajectory."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class FeasibilityLimits:
    max_curvature: float = 0.25
    max_lat_accel: float = 4.0
    accel_bounds: tuple[float, float] = (-8.0, 3.0)


DEFAULT_LIMITS = FeasibilityLimits()


@dataclass(frozen=True)
class ControlCommand:
    accel: float
    steer: float


class QuinticPoly:
    """x(t) with prescribed position/velocity/acceleration at both ends."""

    def __init__(self, x0, v0, a0, xe, ve, ae, duration):
        self.duration = duration
        self.c0 = x0
        self.c1 = v0
        self.c2 = 0.5 * a0
        T = duration
        A = np.array([
            [T ** 3, T ** 4, T ** 5],
            [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
            [6 * T, 12 * T ** 2, 20 * T ** 3],
        ])
        b = np.array([
            xe - (x0 + v0 * T + 0.5 * a0 * T * T),
            ve - (v0 + a0 * T),
            ae - a0,
        ])
        self.c3, self.c4, self.c5 = np.linalg.solve(A, b)

    def value(self, t):
        if t >= self.duration:
            t = self.duration
        return (self.c0 + self.c1 * t + self.c2 * t ** 2 + self.c3 * t ** 3
                + self.c4 * t ** 4 + self.c5 * t ** 5)

    def first(self, t):
        if t >= self.duration:
            return 0.0
        return (self.c1 + 2 * self.c2 * t + 3 * self.c3 * t ** 2
                + 4 * self.c4 * t ** 3 + 5 * self.c5 * t ** 4)

    def second(self, t):
        if t >= self.duration:
            return 0.0
        return (2 * self.c2 + 6 * self.c3 * t + 12 * self.c4 * t ** 2
                + 20 * self.c5 * t ** 3)


def _blend_to_zero(d0: float, dd0: float, duration: float) -> QuinticPoly:
    return QuinticPoly(d0, dd0, 0.0, 0.0, 0.0, 0.0, duration)


def _blend_time(d0: float, dd0: float, floor: float) -> float:
    """Shortest duration keeping the blend's peak lateral accel inside
    ALIGN_LAT_CAP.

    The quintic accel is a superposition of an offset basis (peak
    QUINTIC_PEAK_ACCEL * |d0| / T^2) and a velocity basis (peak
    QUINTIC_PEAK_VEL * |dd0| / T). When the initial velocity points away
    from the target both peaks land in the early reversal phase and add;
    solve a/T^2 + b/T = cap for T. When it already points toward the
    target the phases oppose, so each term alone must fit.
    """
    a = QUINTIC_PEAK_ACCEL * abs(d0)
    b = QUINTIC_PEAK_VEL * abs(dd0)
    cap = ALIGN_LAT_CAP
    if a < 1e-12:
        need = b / cap
    elif d0 * dd0 > 0.0:
        need = 2.0 * a / (math.sqrt(b * b + 4.0 * a * cap) - b)
    else:
        need = max(math.sqrt(a / cap), b / cap)
    return max(floor, need)


def _align_time(d0: float, dd0: float = 0.0) -> float:
    return _blend_time(d0, dd0, ALIGN_TIME)


def _change_time(d0: float, lane_width: float, dd0: float = 0.0) -> float:
    progress = min(max(1.0 - abs(d0) / lane_width, 0.0), 0.9)
    base = max(LANE_CHANGE_TIME * (1.0 - progress), 1.0)
    return _blend_time(d0, dd0, base)


def _speed_at(v0: float, rate: float, cap: float, t: float) -> tuple[float, float, float]:
    """(speed, distance, instantaneous accel) after time t.

    ``rate`` is an unsigned magnitude applied toward ``cap``; the profile
    saturates there and coasts.
    """
    if rate <= 0.0 or v0 == cap:
        return v0, v0 * t, 0.0
    a = rate if cap > v0 else -rate
    t_star = (cap - v0) / a
    if t < t_star:
        return v0 + a * t, v0 * t + 0.5 * a * t * t, a
    d_star = v0 * t_star + 0.5 * a * t_star * t_star
    return cap, d_star + cap * (t - t_star), 0.0


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled reference: pose, speed, curvature, accel per tick."""

    dt: float
    xs: np.ndarray
    ys: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    curvatures: np.ndarray
    accels: np.ndarray
    meta_action: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.xs)) * self.dt

    @property
    def duration(self) -> float:
        return (len(self.xs) - 1) * self.dt

    def sample(self, t: float) -> tuple[float, float, float, float, float, float]:
        """(x, y, heading, speed, curvature, accel) at time t, interpolated."""
        if t < 0.0 or t > self.duration + 1e-9:
            raise HorizonExhausted(f"t={t:.3f} outside [0, {self.duration:.3f}]")
        pos = min(t / self.dt, len(self.xs) - 1.0)
        i = int(pos)
        j = min(i + 1, len(self.xs) - 1)
        f = pos - i
        h0 = self.headings[i]
        heading = kernels.wrap_angle(h0 + f * kernels.wrap_angle(self.headings[j] - h0))
        return (
            self.xs[i] + f * (self.xs[j] - self.xs[i]),
            self.ys[i] + f * (self.ys[j] - self.ys[i]),
            heading,
            self.speeds[i] + f * (self.speeds[j] - self.speeds[i]),
            self.curvatures[i] + f * (self.curvatures[j] - self.curvatures[i]),
            self.accels[i] + f * (self.accels[j] - self.accels[i]),
        )


def _highway_plan(world: WorldState, action: HighwayAction) -> tuple[int, float, float, float]:
    """(target_lane, signed rate, cap, lateral blend time) for one action."""
    ego = world.ego
    geom = world.geometry
    lane = ego.lane_index if ego.lane_index is not None else geom.nearest_lane(ego.y)
    limit = world.scenario.speed_limit
    dd0 = ego.speed * math.sin(ego.heading)
    if action == HighwayAction.CHANGE_LEFT or action == HighwayAction.CHANGE_RIGHT:
        target = lane + 1 if action == HighwayAction.CHANGE_LEFT else lane - 1
        if not (0 <= target < geom.lane_count):
            raise InfeasibleManeuver("no_target_lane")
        d0 = ego.y - geom.lane_center(target)
        return target, 0.0, ego.speed, _change_time(d0, geom.lane_width, dd0)
    d0 = ego.y - geom.lane_center(lane)
    t_lat = _align_time(d0, dd0)
    if action == HighwayAction.ACCELERATE:
        return lane, NOMINAL_ACCEL, limit, t_lat
    if action == HighwayAction.DECELERATE:
        return lane, NOMINAL_ACCEL, 0.0, t_lat
    return lane, 0.0, ego.speed, t_lat


def _turn_plan(world: WorldState, action: TIntersectionAction) -> tuple[float, float]:
    """(signed rate, cap) for the fixed turn path."""
    ego = world.ego
    geom = world.geometry
    path = geom.turn_path
    limit = world.scenario.speed_limit
    s0 = path.project(ego.x, ego.y)
    on_or_before_arc = s0 < path.approach_len + path.arc_len
    if action == TIntersectionAction.STOP:
        return NOMINAL_ACCEL, 0.0
    if action == TIntersectionAction.CREEP:
        return NOMINAL_ACCEL, CREEP_SPEED
    if action == TIntersectionAction.PROCEED:
        cap = min(limit, math.sqrt(TURN_LAT_COMFORT * path.radius)) if on_or_before_arc else limit
        return PROCEED_ACCEL, cap
    cap = min(limit, math.sqrt(TURN_LAT_FAST * path.radius)) if on_or_before_arc else limit
    return PROCEED_FAST_ACCEL, cap


def generate_trajectory(world: WorldState, action: int, duration: float | None = None,
                        limits: FeasibilityLimits = DEFAULT_LIMITS) -> Trajectory:
    """Reference trajectory for a meta-action starting from the current state.

    Deterministic; the lateral component blends the current offset to zero
    with a quintic, the longitudinal component is a saturating constant-rate
    speed profile. Raises InfeasibleManeuver when the target lane is absent
    or the resulting reference violates ``limits``.
    """
    ego = world.ego
    geom = world.geometry
    dt = world.scenario.dt
    if geom.kind == ScenarioKind.HIGHWAY:
        act = HighwayAction(action)
        target, rate, cap, t_lat = _highway_plan(world, act)
        target_y = geom.lane_center(target)
        d0 = ego.y - target_y
        dd0 = ego.speed * math.sin(ego.heading)
        quintic = _blend_to_zero(d0, dd0, t_lat)
        total = duration if duration is not None else max(t_lat, 1.0)
        n = max(int(round(total / dt)), 1) + 1
        xs = np.empty(n)
        ys = np.empty(n)
        headings = np.empty(n)
        speeds = np.empty(n)
        accels = np.empty(n)
        for k in range(n):
            t = k * dt
            v_t, s_t, a_t = _speed_at(ego.speed, rate, cap, t)
            d = quintic.value(t)
            dd = quintic.first(t)
            xs[k] = ego.x + s_t
            ys[k] = target_y + d
            headings[k] = math.atan2(dd, v_t) if (abs(dd) > 1e-12 or v_t > 1e-12) else 0.0
            speeds[k] = math.sqrt(v_t * v_t + dd * dd)
            accels[k] = a_t
    else:
        act = TIntersectionAction(action)
        rate, cap = _turn_plan(world, act)
        path = geom.turn_path
        s0 = path.project(ego.x, ego.y)
        base0 = path.pose(s0)
        d0 = path.lateral_offset(ego.x, ego.y)
        dd0 = ego.speed * math.sin(ego.heading - base0[2])
        quintic = _blend_to_zero(d0, dd0, _align_time(d0, dd0))
        total = duration if duration is not None else max(_align_time(d0, dd0), 1.0)
        n = max(int(round(total / dt)), 1) + 1
        xs = np.empty(n)
        ys = np.empty(n)
        headings = np.empty(n)
        speeds = np.empty(n)
        accels = np.empty(n)
        for k in range(n):
            t = k * dt
            v_t, s_t, a_t = _speed_at(ego.speed, rate, cap, t)
            bx, by, bh, bk = path.pose(s0 + s_t)
            d = quintic.value(t)
            dd = quintic.first(t)
            tang = v_t * (1.0 - bk * d)
            xs[k] = bx - math.sin(bh) * d
            ys[k] = by + math.cos(bh) * d
            if abs(dd) > 1e-12 or abs(tang) > 1e-12:
                headings[k] = kernels.wrap_angle(bh + math.atan2(dd, max(tang, 1e-9)))
            else:
                headings[k] = bh
            speeds[k] = math.sqrt(tang * tang + dd * dd)
            accels[k] = a_t
    curvatures = np.zeros(n)
    for k in range(n - 1):
        ds = max(speeds[k] * dt, 1e-9)
        curvatures[k] = kernels.wrap_angle(headings[k + 1] - headings[k]) / ds
    if n > 1:
        curvatures[n - 1] = curvatures[n - 2]
    traj = Trajectory(dt=dt, xs=xs, ys=ys, headings=headings, speeds=speeds,
                      curvatures=curvatures, accels=accels, meta_action=int(action))
    ok, reason = check_feasibility(traj, limits, geom)
    if not ok:
        raise InfeasibleManeuver(reason)
    return traj


def check_feasibility(traj: Trajectory, limits: FeasibilityLimits = DEFAULT_LIMITS,
                      geometry=None) -> tuple[bool, str | None]:
    """Closed-bound kinematic and drivable-region screening of a reference."""
    eps = 1e-9
    for k in range(len(traj.xs)):
        kappa = abs(traj.curvatures[k])
        if kappa > limits.max_curvature + eps:
            return False, "curvature"
        if traj.speeds[k] ** 2 * kappa > limits.max_lat_accel + eps:
            return False, "lateral_accel"
        a = traj.accels[k]
        if a < limits.accel_bounds[0] - eps or a > limits.accel_bounds[1] + eps:
            return False, "accel"
        if geometry is not None and not geometry.contains(traj.xs[k], traj.ys[k]):
            return False, "offroad"
    return True, None


# ---------------------------------------------------------------------------
# LQR tracking

_GAIN_CACHE: dict[tuple[int, int], np.ndarray] = {}


def lqr_gain(ref_speed: float, dt: float, wheelbase: float = WHEELBASE) -> np.ndarray:
    """Finite-horizon LQR gain for the [e_y, e_heading, e_v] error model.

    The scheduling speed is snapped to a grid and the gain computed from the
    snapped value, so memoization never changes the result.
    """
    q = int(round(ref_speed / SPEED_QUANTUM))
    key = (q, int(round(dt * 1e6)))
    hit = _GAIN_CACHE.get(key)
    if hit is not None:
        return hit
    v = q * SPEED_QUANTUM
    A = np.array([
        [1.0, dt * v, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    B = np.array([
        [0.0, 0.0],
        [0.0, dt * v / wheelbase],
        [dt, 0.0],
    ])
    Q = np.diag(LQR_Q)
    R = np.diag(LQR_R)
    P = Q.copy()
    K = np.zeros((2, 3))
    for _ in range(LQR_HORIZON):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
    _GAIN_CACHE[key] = K
    return K


def track_step(traj: Trajectory, t: float, vehicle: VehicleState,
               wheelbase: float = WHEELBASE) -> ControlCommand:
    """One tick of reference tracking: feedforward plus LQR feedback."""
    xr, yr, hr, vr, kr, ar = traj.sample(t)
    e_y = -math.sin(hr) * (vehicle.x - xr) + math.cos(hr) * (vehicle.y - yr)
    e_h = kernels.wrap_angle(vehicle.heading - hr)
    e_v = vehicle.speed - vr
    K = lqr_gain(vr, traj.dt, wheelbase)
    steer_ff = math.atan(wheelbase * kr)
    err = np.array([e_y, e_h, e_v])
    accel = ar - float(K[0] @ err)
    steer = steer_ff - float(K[1] @ err)
    accel = max(-8.0, min(3.0, accel))
    steer = max(-0.6, min(0.6, steer))
    return ControlCommand(accel=accel, steer=steer)


# ---------------------------------------------------------------------------
# Closed-form nominal advance (used by the one-step prediction model)


def advance_nominal(world: WorldState, action: int, delta: float) -> VehicleState:
    """Ego state after one decision period under the action's nominal profile.

    Constant-rate saturating speed profile along the lane or turn path and a
    quintic lateral blend, all evaluated in closed form. Deterministic.
    """
    ego = world.ego
    geom = world.geometry
    if geom.kind == ScenarioKind.HIGHWAY:
        act = HighwayAction(action)
        target, rate, cap, t_lat = _highway_plan(world, act)
        target_y = geom.lane_center(target)
        v1, s_adv, _ = _speed_at(ego.speed, rate, cap, delta)
        d0 = ego.y - target_y
        dd0 = ego.speed * math.sin(ego.heading)
        quintic = _blend_to_zero(d0, dd0, t_lat)
        d1 = quintic.value(delta)
        dd1 = quintic.first(delta)
        heading = math.atan2(dd1, v1) if (abs(dd1) > 1e-12 or v1 > 1e-12) else 0.0
        new_y = target_y + d1
        lane_index = target if abs(d1) <= 0.2 else None
        return VehicleState(
            id=ego.id, x=ego.x + s_adv, y=new_y, heading=heading, speed=v1,
            accel=0.0, steer=0.0, lane_index=lane_index, length=ego.length,
            width=ego.width, role=ego.role, target_speed=ego.target_speed,
        )
    act = TIntersectionAction(action)
    rate, cap = _turn_plan(world, act)
    path = geom.turn_path
    s0 = path.project(ego.x, ego.y)
    base0 = path.pose(s0)
    d0 = path.lateral_offset(ego.x, ego.y)
    dd0 = ego.speed * math.sin(ego.heading - base0[2])
    v1, s_adv, _ = _speed_at(ego.speed, rate, cap, delta)
    quintic = _blend_to_zero(d0, dd0, _align_time(d0, dd0))
    d1 = quintic.value(delta)
    dd1 = quintic.first(delta)
    bx, by, bh, bk = path.pose(s0 + s_adv)
    tang = max(v1 * (1.0 - bk * d1), 1e-9)
    heading = kernels.wrap_angle(bh + math.atan2(dd1, tang)) if v1 > 1e-12 else bh
    return VehicleState(
        id=ego.id, x=bx - math.sin(bh) * d1, y=by + math.cos(bh) * d1,
        heading=heading, speed=v1, accel=0.0, steer=0.0, lane_index=None,
        length=ego.length, width=ego.width, role=ego.role,
        target_speed=ego.target_speed,
    )
