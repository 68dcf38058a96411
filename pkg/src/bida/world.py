"""Deterministic fixed-step 2D traffic microsimulation.

Two scenario families: a straight multi-lane highway and an unsignalized
T-intersection where the ego turns left from a side road onto the main road.
Surrounding vehicles follow IDM longitudinally (with MOBIL lane changes on
the highway), walkers cross on straight paths, and every vehicle integrates
with the same kinematic bicycle model. All randomness flows through a seeded
generator at spawn time; stepping is fully deterministic.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from bida import kernels
from bida.actions import ScenarioKind

VEHICLE_LENGTH = 4.8
VEHICLE_WIDTH = 2.0
WHEELBASE = 2.7
B_EMERGENCY = 8.0

WALKER_SPEED = 1.4
WALKER_RADIUS = 0.3

EGO_STEER_MAX = 0.6
EGO_ACCEL_BOUNDS = (-8.0, 3.0)

# SVs re-evaluate MOBIL once per second, phase-offset by id so the fleet
# never flips lanes in lockstep.
MOBIL_PERIOD_S = 1.0

NO_LEADER_GAP = 1e6  # sentinel: free road (paired with lead_speed = own speed)

LANE_CORRIDOR_HALF = 1.9  # m, lateral half-width for leader/follower scans
LANE_LOCK_POS_TOL = 0.2  # m
LANE_LOCK_HEADING_TOL = 0.05  # rad

# T-intersection fixed geometry (meters, main road along x, side road south).
T_MAIN_EAST_Y = -1.75
T_MAIN_WEST_Y = 1.75
T_SIDE_CENTER_X = 1.75
T_TURN_RADIUS = 6.0
T_PATH_START_Y = -40.0
T_CONFLICT_BOX = (-6.0, 4.0, -3.5, 3.5)  # xmin, xmax, ymin, ymax
T_GOAL_X = -8.5
T_WALKER_MARGIN = 1.0


class ConfigError(ValueError):
    """Raised when a scenario configuration cannot be realized."""


class Role(str, enum.Enum):
    EGO = "ego"
    SV = "sv"


class LaneChange(enum.IntEnum):
    STAY = 0
    LEFT = 1
    RIGHT = 2


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_kind: ScenarioKind
    lane_count: int
    lane_width: float
    sv_count: int
    speed_limit: float
    sv_speed_range: tuple[float, float]
    sim_frequency: float = 20.0
    walker_count: int = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.sv_speed_range
        if self.lane_count < 1 or self.lane_width <= 0:
            raise ConfigError("lane_count must be >= 1 and lane_width positive")
        if not (0 <= lo <= hi <= self.speed_limit + 1e-9):
            raise ConfigError("sv_speed_range must satisfy 0 <= low <= high <= speed_limit")
        if self.sv_count < 0 or self.walker_count < 0:
            raise ConfigError("agent counts must be nonnegative")
        if self.sim_frequency <= 0:
            raise ConfigError("sim_frequency must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.sim_frequency


def highway_config(
    lane_count: int = 5,
    sv_count: int = 10,
    rng_seed: int = 0,
    speed_limit: float = 120 / 3.6,
    sv_speed_range: tuple[float, float] = (80 / 3.6, 120 / 3.6),
) -> ScenarioConfig:
    return ScenarioConfig(
        scenario_kind=ScenarioKind.HIGHWAY,
        lane_count=lane_count,
        lane_width=3.5,
        sv_count=sv_count,
        speed_limit=speed_limit,
        sv_speed_range=sv_speed_range,
        rng_seed=rng_seed,
    )


def t_intersection_config(
    sv_count: int = 6,
    walker_count: int = 2,
    rng_seed: int = 0,
    speed_limit: float = 60 / 3.6,
    sv_speed_range: tuple[float, float] = (30 / 3.6, 60 / 3.6),
) -> ScenarioConfig:
    return ScenarioConfig(
        scenario_kind=ScenarioKind.T_INTERSECTION,
        lane_count=2,
        lane_width=3.5,
        sv_count=sv_count,
        speed_limit=speed_limit,
        sv_speed_range=sv_speed_range,
        walker_count=walker_count,
        rng_seed=rng_seed,
    )


@dataclass
class VehicleState:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    steer: float = 0.0
    lane_index: int | None = 0
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    role: Role = Role.SV
    target_speed: float = 0.0  # IDM desired speed (SVs)
    target_lane: int | None = None  # set while a lane change is in progress
    braking_for_ego: bool = False  # last accel was bound by an ego-induced constraint

    def copy(self) -> "VehicleState":
        return dataclasses.replace(self)


@dataclass
class WalkerState:
    id: int
    x: float
    y: float
    heading: float
    speed: float = WALKER_SPEED
    radius: float = WALKER_RADIUS

    def copy(self) -> "WalkerState":
        return dataclasses.replace(self)


@dataclass(frozen=True)
class TurnPath:
    """Left-turn reference path: side-road straight, quarter arc, main-road straight."""

    approach_x: float = T_SIDE_CENTER_X
    start_y: float = T_PATH_START_Y
    arc_start_y: float = T_MAIN_EAST_Y - 2.5  # -4.25
    radius: float = T_TURN_RADIUS
    exit_y: float = T_MAIN_WEST_Y

    @property
    def center(self) -> tuple[float, float]:
        return (self.approach_x - self.radius, self.arc_start_y)

    @property
    def approach_len(self) -> float:
        return self.arc_start_y - self.start_y

    @property
    def arc_len(self) -> float:
        return self.radius * math.pi / 2.0

    def pose(self, s: float) -> tuple[float, float, float, float]:
        """(x, y, heading, curvature) at arclength ``s`` from the path start."""
        if s < 0.0:
            s = 0.0
        if s <= self.approach_len:
            return (self.approach_x, self.start_y + s, math.pi / 2.0, 0.0)
        s2 = s - self.approach_len
        cx, cy = self.center
        if s2 <= self.arc_len:
            phi = s2 / self.radius
            x = cx + self.radius * math.cos(phi)
            y = cy + self.radius * math.sin(phi)
            heading = kernels.wrap_angle(math.pi / 2.0 + phi)
            return (x, y, heading, 1.0 / self.radius)
        d = s2 - self.arc_len
        return (cx - d, cy + self.radius, math.pi, 0.0)

    def project(self, x: float, y: float) -> float:
        """Monotone arclength of the nearest path point (clamped at 0)."""
        cx, cy = self.center
        ang = math.atan2(y - cy, x - cx)
        if ang < 0.0:
            s = y - self.start_y
        elif ang <= math.pi / 2.0:
            s = self.approach_len + ang * self.radius
        else:
            s = self.approach_len + self.arc_len + (cx - x)
        return max(s, 0.0)

    def lateral_offset(self, x: float, y: float) -> float:
        """Signed offset from the path, positive to the left of travel."""
        s = self.project(x, y)
        bx, by, heading, _ = self.pose(s)
        return -math.sin(heading) * (x - bx) + math.cos(heading) * (y - by)


@dataclass(frozen=True)
class MapGeometry:
    """Lane centerlines, drivable region and goal description for a scenario."""

    kind: ScenarioKind
    lane_count: int
    lane_width: float
    lane_ys: tuple[float, ...]
    lane_headings: tuple[float, ...]
    drivable_boxes: tuple[tuple[float, float, float, float], ...]
    goal_lane: int | None = None  # highway
    turn_path: TurnPath | None = None  # T-intersection
    conflict_box: tuple[float, float, float, float] | None = None
    goal_s: float = 0.0  # path arclength at which the T goal is reached

    @staticmethod
    def highway(lane_count: int, lane_width: float, goal_lane: int) -> "MapGeometry":
        half = lane_width / 2.0
        return MapGeometry(
            kind=ScenarioKind.HIGHWAY,
            lane_count=lane_count,
            lane_width=lane_width,
            lane_ys=tuple(i * lane_width for i in range(lane_count)),
            lane_headings=tuple(0.0 for _ in range(lane_count)),
            drivable_boxes=((-1e9, 1e9, -half, (lane_count - 1) * lane_width + half),),
            goal_lane=goal_lane,
        )

    @staticmethod
    def t_intersection(lane_width: float) -> "MapGeometry":
        path = TurnPath()
        goal_s = path.approach_len + path.arc_len + (path.center[0] - T_GOAL_X)
        return MapGeometry(
            kind=ScenarioKind.T_INTERSECTION,
            lane_count=2,
            lane_width=lane_width,
            lane_ys=(T_MAIN_EAST_Y, T_MAIN_WEST_Y),
            lane_headings=(0.0, math.pi),
            drivable_boxes=(
                (-1e9, 1e9, -3.5, 3.5),
                (0.0, 3.5, -1e9, -3.5),
            ),
            turn_path=path,
            conflict_box=T_CONFLICT_BOX,
            goal_s=goal_s,
        )

    def lane_center(self, index: int) -> float:
        return self.lane_ys[index]

    def nearest_lane(self, y: float) -> int:
        best = 0
        best_d = abs(y - self.lane_ys[0])
        for i in range(1, len(self.lane_ys)):
            d = abs(y - self.lane_ys[i])
            if d < best_d:
                best = i
                best_d = d
        return best

    def contains(self, x: float, y: float) -> bool:
        for xmin, xmax, ymin, ymax in self.drivable_boxes:
            if xmin <= x <= xmax and ymin <= y <= ymax:
                return True
        return False


@dataclass
class WorldState:
    time: float
    ego: VehicleState
    svs: list[VehicleState]
    walkers: list[WalkerState]
    scenario: ScenarioConfig
    geometry: MapGeometry
    collisions: list[tuple[int, int]] = field(default_factory=list)

    def copy(self) -> "WorldState":
        return WorldState(
            time=self.time,
            ego=self.ego.copy(),
            svs=[v.copy() for v in self.svs],
            walkers=[w.copy() for w in self.walkers],
            scenario=self.scenario,
            geometry=self.geometry,
            collisions=list(self.collisions),
        )

    def vehicles(self) -> list[VehicleState]:
        return [self.ego, *self.svs]


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 30.0
    time_headway: float = 1.5
    min_gap: float = 2.0
    max_accel: float = 1.5
    comfort_decel: float = 2.0
    exponent: float = 4.0


@dataclass(frozen=True)
class MobilParams:
    politeness: float = 0.3
    accel_threshold: float = 0.1
    safe_decel: float = 4.0


DEFAULT_IDM = IdmParams()
DEFAULT_MOBIL = MobilParams()


def idm_acceleration(
    v: float,
    gap: float,
    lead_speed: float,
    params: IdmParams = DEFAULT_IDM,
    b_emergency: float = B_EMERGENCY,
) -> float:
    """IDM longitudinal acceleration, clamped to [-b_emergency, max_accel]."""
    return kernels.idm_accel(
        v,
        gap,
        lead_speed,
        params.desired_speed,
        params.time_headway,
        params.min_gap,
        params.max_accel,
        params.comfort_decel,
        params.exponent,
        b_emergency,
    )


@dataclass(frozen=True)
class LaneNeighborInfo:
    """Bumper gaps and speeds around a slot in one lane (sentinels if absent)."""

    leader_gap: float = NO_LEADER_GAP
    leader_speed: float = 0.0
    follower_gap: float = NO_LEADER_GAP
    follower_speed: float = 0.0
    follower_desired_speed: float = 0.0


@dataclass(frozen=True)
class MobilNeighbors:
    current: LaneNeighborInfo
    left: LaneNeighborInfo | None = None  # None: lane does not exist
    right: LaneNeighborInfo | None = None


def _mobil_incentive(
    vehicle: VehicleState,
    cur: LaneNeighborInfo,
    tgt: LaneNeighborInfo,
    idm: IdmParams,
    mobil: MobilParams,
) -> bool:
    own_idm = dataclasses.replace(idm, desired_speed=vehicle.target_speed or idm.desired_speed)

    def accel(v: float, gap: float, lead: float, desired: float) -> float:
        p = dataclasses.replace(idm, desired_speed=desired)
        return idm_acceleration(v, gap, lead, p)

    v = vehicle.speed
    a_c = idm_acceleration(v, cur.leader_gap, cur.leader_speed, own_idm)
    a_c_new = idm_acceleration(v, tgt.leader_gap, tgt.leader_speed, own_idm)

    # New follower: currently trails the target lane's leader, would trail us.
    if tgt.follower_gap >= NO_LEADER_GAP:
        a_n = a_n_new = 0.0
    else:
        gap_now = tgt.follower_gap + vehicle.length + tgt.leader_gap
        a_n = accel(tgt.follower_speed, gap_now, tgt.leader_speed, tgt.follower_desired_speed)
        a_n_new = accel(tgt.follower_speed, tgt.follower_gap, v, tgt.follower_desired_speed)
        if a_n_new < -mobil.safe_decel:
            return False

    # Old follower gains our slot.
    if cur.follower_gap >= NO_LEADER_GAP:
        a_o = a_o_new = 0.0
    else:
        a_o = accel(cur.follower_speed, cur.follower_gap, v, cur.follower_desired_speed)
        gap_after = cur.follower_gap + vehicle.length + cur.leader_gap
        a_o_new = accel(cur.follower_speed, gap_after, cur.leader_speed, cur.follower_desired_speed)

    imposed = (a_n - a_n_new) + (a_o - a_o_new)
    return a_c_new - a_c > mobil.politeness * imposed + mobil.accel_threshold


def mobil_decision(
    vehicle: VehicleState,
    neighbors: MobilNeighbors,
    idm: IdmParams = DEFAULT_IDM,
    mobil: MobilParams = DEFAULT_MOBIL,
) -> LaneChange:
    """Lane-change decision; Stay unless safety and incentive both hold.

    Left wins when both directions qualify.
    """
    if neighbors.left is not None and _mobil_incentive(vehicle, neighbors.current, neighbors.left, idm, mobil):
        return LaneChange.LEFT
    if neighbors.right is not None and _mobil_incentive(vehicle, neighbors.current, neighbors.right, idm, mobil):
        return LaneChange.RIGHT
    return LaneChange.STAY


# ---------------------------------------------------------------------------
# Spawning


def spawn_scenario(config: ScenarioConfig) -> WorldState:
    """Build the initial world for a scenario; deterministic in rng_seed."""
    rng = np.random.default_rng(config.rng_seed)
    if config.scenario_kind == ScenarioKind.HIGHWAY:
        world = _spawn_highway(config, rng)
    else:
        world = _spawn_t_intersection(config, rng)
    world.collisions = check_collision(world)
    return world


def _spawn_highway(config: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    goal_lane = min(2, config.lane_count - 1)
    geom = MapGeometry.highway(config.lane_count, config.lane_width, goal_lane)
    lo, hi = config.sv_speed_range
    ego = VehicleState(
        id=0,
        x=0.0,
        y=geom.lane_center(0),
        heading=0.0,
        speed=0.5 * (lo + hi),
        lane_index=0,
        role=Role.EGO,
    )
    svs: list[VehicleState] = []
    placed: list[tuple[int, float]] = [(0, 0.0)]  # (lane, x) incl. ego
    for k in range(1, config.sv_count + 1):
        for attempt in range(1000):
            lane = int(rng.integers(0, config.lane_count))
            x = float(rng.uniform(-80.0, 320.0))
            speed = float(rng.uniform(lo, hi))
            if all(other_lane != lane or abs(other_x - x) >= 22.0 for other_lane, other_x in placed):
                placed.append((lane, x))
                svs.append(
                    VehicleState(
                        id=k,
                        x=x,
                        y=geom.lane_center(lane),
                        heading=0.0,
                        speed=speed,
                        lane_index=lane,
                        target_speed=speed,
                    )
                )
                break
        else:
            raise ConfigError(f"could not place SV {k} without overlap in 1000 attempts")
    return WorldState(time=0.0, ego=ego, svs=svs, walkers=[], scenario=config, geometry=geom)


def _spawn_t_intersection(config: ScenarioConfig, rng: np.random.Generator) -> WorldState:
    geom = MapGeometry.t_intersection(config.lane_width)
    lo, hi = config.sv_speed_range
    ego = VehicleState(
        id=0,
        x=T_SIDE_CENTER_X,
        y=-6.5,
        heading=math.pi / 2.0,
        speed=0.0,
        lane_index=None,
        role=Role.EGO,
    )
    svs: list[VehicleState] = []
    placed: dict[int, list[float]] = {0: [], 1: []}
    for k in range(1, config.sv_count + 1):
        eastbound = k % 2 == 1
        lane = 0 if eastbound else 1
        for attempt in range(1000):
            if eastbound:
                x = float(rng.uniform(-170.0, -18.0))
            else:
                x = float(rng.uniform(18.0, 170.0))
            speed = float(rng.uniform(lo, hi))
            if all(abs(x - ox) >= 25.0 for ox in placed[lane]):
                placed[lane].append(x)
                svs.append(
                    VehicleState(
                        id=k,
                        x=x,
                        y=geom.lane_center(lane),
                        heading=geom.lane_headings[lane],
                        speed=speed,
                        lane_index=lane,
                        target_speed=speed,
                    )
                )
                break
        else:
            raise ConfigError(f"could not place SV {k} without overlap in 1000 attempts")
    walkers: list[WalkerState] = []
    for i in range(config.walker_count):
        crossing_x = (9.0 + 4.0 * (i // 2)) * (1.0 if i % 2 == 0 else -1.0)
        from_south = (i // 2) % 2 == 0
        if from_south:
            y0 = float(rng.uniform(-7.0, -4.5))
            heading = math.pi / 2.0
        else:
            y0 = float(rng.uniform(4.5, 7.0))
            heading = -math.pi / 2.0
        walkers.append(WalkerState(id=1001 + i, x=crossing_x, y=y0, heading=heading))
    return WorldState(time=0.0, ego=ego, svs=svs, walkers=walkers, scenario=config, geometry=geom)


# ---------------------------------------------------------------------------
# Collision queries


def check_collision(world: WorldState) -> list[tuple[int, int]]:
    """Colliding agent-id pairs, each reported once as (low id, high id)."""
    vehicles = world.vehicles()
    xs = np.array([v.x for v in vehicles])
    ys = np.array([v.y for v in vehicles])
    yaws = np.array([v.heading for v in vehicles])
    lengths = np.array([v.length for v in vehicles])
    widths = np.array([v.width for v in vehicles])
    pairs = [
        (min(vehicles[i].id, vehicles[j].id), max(vehicles[i].id, vehicles[j].id))
        for i, j in kernels.collision_pairs(xs, ys, yaws, lengths, widths)
    ]
    for w in world.walkers:
        for v in vehicles:
            if kernels.point_obb_distance(w.x, w.y, v.x, v.y, v.heading, v.length, v.width) <= w.radius:
                pairs.append((min(v.id, w.id), max(v.id, w.id)))
    return sorted(pairs)


def ego_clearance(world: WorldState) -> float:
    """Smallest clearance from the ego body to any other agent (inf if alone)."""
    ego = world.ego
    best = math.inf
    if world.svs:
        vehicles = world.vehicles()
        xs = np.array([v.x for v in vehicles])
        ys = np.array([v.y for v in vehicles])
        yaws = np.array([v.heading for v in vehicles])
        lengths = np.array([v.length for v in vehicles])
        widths = np.array([v.width for v in vehicles])
        best = float(kernels.min_clearance(0, xs, ys, yaws, lengths, widths))
    for w in world.walkers:
        d = kernels.point_obb_distance(w.x, w.y, ego.x, ego.y, ego.heading, ego.length, ego.width)
        best = min(best, max(d - w.radius, 0.0))
    return best


def ego_offroad(world: WorldState) -> bool:
    """True when any ego body corner leaves the drivable region."""
    ego = world.ego
    corners = kernels.obb_corners(ego.x, ego.y, ego.heading, ego.length, ego.width)
    geom = world.geometry
    for i in range(4):
        if not geom.contains(corners[2 * i], corners[2 * i + 1]):
            return True
    return False


def ego_in_conflict_region(world: WorldState) -> bool:
    box = world.geometry.conflict_box
    if box is None:
        return False
    xmin, xmax, ymin, ymax = box
    ego = world.ego
    return kernels.obb_overlap(
        ego.x, ego.y, ego.heading, ego.length, ego.width,
        0.5 * (xmin + xmax), 0.5 * (ymin + ymax), 0.0, xmax - xmin, ymax - ymin,
    )


# ---------------------------------------------------------------------------
# Surrounding-vehicle behavior


def _direction_sign(heading: float) -> float:
    """+1 for eastbound-like lanes, -1 for westbound (lanes run along x)."""
    return 1.0 if abs(kernels.wrap_angle(heading)) < math.pi / 2.0 else -1.0


def _corridor_leader(
    sv: VehicleState,
    agents: list[VehicleState],
    lane_y: float,
    direction: float,
) -> tuple[float, float, VehicleState | None]:
    """Nearest agent ahead of ``sv`` within the corridor of ``lane_y``.

    Returns (bumper gap, leader speed along sv's direction, leader) with
    sentinels when the corridor is free.
    """
    best_gap = NO_LEADER_GAP
    best_speed = sv.speed
    best: VehicleState | None = None
    for other in agents:
        if other.id == sv.id:
            continue
        if abs(other.y - lane_y) > LANE_CORRIDOR_HALF:
            continue
        ahead = (other.x - sv.x) * direction
        if ahead <= 0.0:
            continue
        gap = ahead - 0.5 * (other.length + sv.length)
        if gap < best_gap:
            best_gap = gap
            best_speed = other.speed * math.cos(other.heading - sv.heading)
            best = other
    return best_gap, best_speed, best


def _corridor_follower(
    sv_y_ref: float,
    x_ref: float,
    length_ref: float,
    agents: list[VehicleState],
    lane_y: float,
    direction: float,
    exclude_id: int,
) -> tuple[float, VehicleState | None]:
    best_gap = NO_LEADER_GAP
    best: VehicleState | None = None
    for other in agents:
        if other.id == exclude_id:
            continue
        if abs(other.y - lane_y) > LANE_CORRIDOR_HALF:
            continue
        behind = (x_ref - other.x) * direction
        if behind <= 0.0:
            continue
        gap = behind - 0.5 * (other.length + length_ref)
        if gap < best_gap:
            best_gap = gap
            best = other
    return best_gap, best


def _neighbors_for_lane(
    sv: VehicleState,
    agents: list[VehicleState],
    geom: MapGeometry,
    lane: int,
) -> LaneNeighborInfo:
    lane_y = geom.lane_center(lane)
    direction = _direction_sign(geom.lane_headings[lane])
    leader_gap, leader_speed, _ = _corridor_leader(sv, agents, lane_y, direction)
    follower_gap, follower = _corridor_follower(
        sv.y, sv.x, sv.length, agents, lane_y, direction, sv.id
    )
    return LaneNeighborInfo(
        leader_gap=leader_gap,
        leader_speed=leader_speed,
        follower_gap=follower_gap,
        follower_speed=follower.speed if follower else 0.0,
        follower_desired_speed=(follower.target_speed or DEFAULT_IDM.desired_speed) if follower else 0.0,
    )


def mobil_neighbors(sv: VehicleState, world: WorldState) -> MobilNeighbors:
    geom = world.geometry
    agents = world.vehicles()
    lane = sv.lane_index if sv.lane_index is not None else geom.nearest_lane(sv.y)
    current = _neighbors_for_lane(sv, agents, geom, lane)
    left = (
        _neighbors_for_lane(sv, agents, geom, lane + 1)
        if lane + 1 < geom.lane_count
        else None
    )
    right = _neighbors_for_lane(sv, agents, geom, lane - 1) if lane - 1 >= 0 else None
    return MobilNeighbors(current=current, left=left, right=right)


def _sv_longitudinal(
    sv: VehicleState, world: WorldState, idm: IdmParams
) -> tuple[float, bool]:
    """IDM acceleration for one SV plus whether an ego constraint was binding.

    Candidates: the corridor leader in the current (and mid-change target)
    lane, a virtual stopped leader at a crossing walker, and -- at the
    T-intersection -- a virtual stopped leader at the conflict-region entry
    while the ego occupies it. The most restrictive candidate wins.
    """
    geom = world.geometry
    agents = world.vehicles()
    own = dataclasses.replace(idm, desired_speed=sv.target_speed or idm.desired_speed)
    lane = sv.lane_index if sv.lane_index is not None else geom.nearest_lane(sv.y)
    lanes = [lane]
    if sv.target_lane is not None and sv.target_lane != lane:
        lanes.append(sv.target_lane)

    candidates: list[tuple[float, bool]] = []
    direction = _direction_sign(sv.heading)
    for li in lanes:
        gap, speed, leader = _corridor_leader(sv, agents, geom.lane_center(li), direction)
        a = idm_acceleration(sv.speed, gap, speed, own)
        candidates.append((a, leader is not None and leader.role == Role.EGO))

    if geom.kind == ScenarioKind.T_INTERSECTION:
        for w in world.walkers:
            lane_y = geom.lane_center(lane)
            if abs(w.y - lane_y) > geom.lane_width / 2.0 + w.radius + 0.5:
                continue
            ahead = (w.x - sv.x) * direction
            if 0.0 < ahead <= 40.0:
                gap = ahead - 0.5 * sv.length - w.radius - T_WALKER_MARGIN
                a = idm_acceleration(sv.speed, max(gap, 0.1), 0.0, own)
                candidates.append((a, False))
        if ego_in_conflict_region(world):
            xmin, xmax, _, _ = geom.conflict_box
            entry = xmin if direction > 0 else xmax
            ahead = (entry - sv.x) * direction
            if ahead > -2.0:
                gap = ahead - 0.5 * sv.length - 1.0
                a = idm_acceleration(sv.speed, max(gap, 0.1), 0.0, own)
                candidates.append((a, True))

    accel, from_ego = min(candidates, key=lambda c: c[0])
    return accel, from_ego and accel < 0.0


def _sv_steering(sv: VehicleState, geom: MapGeometry) -> float:
    """Lane-keeping / lane-change steering: critically damped lateral loop."""
    lane = sv.target_lane if sv.target_lane is not None else (
        sv.lane_index if sv.lane_index is not None else geom.nearest_lane(sv.y)
    )
    lane_y = geom.lane_center(lane)
    phi = geom.lane_headings[lane]
    # Lanes run along x, so the signed left-of-travel offset reduces to this.
    offset = math.cos(phi) * (sv.y - lane_y)
    heading_err = kernels.wrap_angle(sv.heading - phi)
    v = max(sv.speed, 2.0)
    wn = 0.8
    k1 = wn * wn * WHEELBASE / (v * v)
    k2 = 2.0 * wn * WHEELBASE / v
    steer = -k1 * offset - k2 * heading_err
    return max(-0.25, min(0.25, steer))


def _maybe_lock_lane(v: VehicleState, geom: MapGeometry) -> None:
    lane = v.target_lane if v.target_lane is not None else geom.nearest_lane(v.y)
    if (
        abs(v.y - geom.lane_center(lane)) <= LANE_LOCK_POS_TOL
        and abs(kernels.wrap_angle(v.heading - geom.lane_headings[lane])) <= LANE_LOCK_HEADING_TOL
    ):
        v.lane_index = lane
        v.target_lane = None
    else:
        v.lane_index = None


# ---------------------------------------------------------------------------
# Stepping


def step_world(world: WorldState, ego_control, dt: float, idm: IdmParams = DEFAULT_IDM,
               mobil: MobilParams = DEFAULT_MOBIL) -> WorldState:
    """Advance the world one simulation tick.

    ``ego_control`` is anything with ``accel``/``steer`` attributes or an
    (accel, steer) pair. SV decisions are computed synchronously from the
    pre-step snapshot; collisions are flagged, never fatal here.
    """
    if hasattr(ego_control, "accel"):
        ego_accel, ego_steer = ego_control.accel, ego_control.steer
    else:
        ego_accel, ego_steer = ego_control
    ego_accel = max(EGO_ACCEL_BOUNDS[0], min(EGO_ACCEL_BOUNDS[1], ego_accel))
    ego_steer = max(-EGO_STEER_MAX, min(EGO_STEER_MAX, ego_steer))

    geom = world.geometry
    step_index = round(world.time / dt)
    period_steps = max(round(MOBIL_PERIOD_S / dt), 1)

    # Decide all SVs from the same snapshot.
    decisions: list[tuple[float, bool, float, int | None]] = []
    for sv in world.svs:
        accel, from_ego = _sv_longitudinal(sv, world, idm)
        target_lane = sv.target_lane
        if (
            geom.kind == ScenarioKind.HIGHWAY
            and target_lane is None
            and sv.lane_index is not None
            and step_index % period_steps == sv.id % period_steps
        ):
            change = mobil_decision(sv, mobil_neighbors(sv, world), idm, mobil)
            if change == LaneChange.LEFT:
                target_lane = sv.lane_index + 1
            elif change == LaneChange.RIGHT:
                target_lane = sv.lane_index - 1
        steer = _sv_steering(
            dataclasses.replace(sv, target_lane=target_lane), geom
        )
        decisions.append((accel, from_ego, steer, target_lane))

    new_svs = []
    for sv, (accel, from_ego, steer, target_lane) in zip(world.svs, decisions):
        nx, ny, nyaw, nv = kernels.bicycle_step(
            sv.x, sv.y, sv.heading, sv.speed, accel, steer, WHEELBASE, dt
        )
        nsv = dataclasses.replace(
            sv, x=nx, y=ny, heading=nyaw, speed=nv, accel=accel, steer=steer,
            target_lane=target_lane, braking_for_ego=from_ego,
        )
        _maybe_lock_lane(nsv, geom)
        new_svs.append(nsv)

    ego = world.ego
    ex, ey, eyaw, ev = kernels.bicycle_step(
        ego.x, ego.y, ego.heading, ego.speed, ego_accel, ego_steer, WHEELBASE, dt
    )
    new_ego = dataclasses.replace(
        ego, x=ex, y=ey, heading=eyaw, speed=ev, accel=ego_accel, steer=ego_steer
    )
    _maybe_lock_lane(new_ego, geom)

    new_walkers = [
        dataclasses.replace(
            w,
            x=w.x + w.speed * math.cos(w.heading) * dt,
            y=w.y + w.speed * math.sin(w.heading) * dt,
        )
        for w in world.walkers
    ]

    out = WorldState(
        time=world.time + dt,
        ego=new_ego,
        svs=new_svs,
        walkers=new_walkers,
        scenario=world.scenario,
        geometry=geom,
    )
    out.collisions = check_collision(out)
    return out


def predict_transition(world: WorldState, ego_action: int, delta: float) -> WorldState:
    """One decision-period lookahead under the constant-velocity traffic model.

    Other agents hold speed and heading; the ego follows the chosen
    meta-action's nominal kinematic profile. Deterministic.
    """
    from bida import motion  # deferred: motion owns the nominal ego profiles

    new_svs = [
        dataclasses.replace(
            sv,
            x=sv.x + sv.speed * math.cos(sv.heading) * delta,
            y=sv.y + sv.speed * math.sin(sv.heading) * delta,
            accel=0.0,
            braking_for_ego=False,
        )
        for sv in world.svs
    ]
    new_walkers = [
        dataclasses.replace(
            w,
            x=w.x + w.speed * math.cos(w.heading) * delta,
            y=w.y + w.speed * math.sin(w.heading) * delta,
        )
        for w in world.walkers
    ]
    new_ego = motion.advance_nominal(world, ego_action, delta)
    out = WorldState(
        time=world.time + delta,
        ego=new_ego,
        svs=new_svs,
        walkers=new_walkers,
        scenario=world.scenario,
        geometry=world.geometry,
    )
    out.collisions = check_collision(out)
    return out
