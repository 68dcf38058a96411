"""Decision-level POMDP over the traffic world.

One decision step = one meta-action executed for a fixed period through the
trajectory generator and tracker, with surrounding traffic reacting every
simulation tick. Rewards combine task outcome, clearance-based safety,
flow efficiency, control smoothness, and the braking imposed on others.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from bida import motion
from bida.actions import HighwayAction, ScenarioKind, action_set
from bida.kernels import wrap_angle
from bida.world import (
    ScenarioConfig,
    WorldState,
    ego_clearance,
    ego_offroad,
    spawn_scenario,
    step_world,
)

OBS_EGO_DIM = 5
OBS_AGENT_SLOTS = 6
OBS_AGENT_DIM = 4
OBS_DIM = OBS_EGO_DIM + OBS_AGENT_SLOTS * OBS_AGENT_DIM  # 29
REL_CLAMP = 100.0  # m, relative-position saturation

DECISION_PERIOD = 0.5
MAX_EPISODE_TIME = 30.0

GOAL_LANE_TOL = 0.2
GOAL_HEADING_TOL = 0.05
TURN_GOAL_LAT_TOL = 0.3
TURN_GOAL_HEADING_TOL = 0.1


class TerminalStatus(str, enum.Enum):
    RUNNING = "running"
    COLLIDED = "collided"
    TASK_COMPLETE = "task_complete"
    INFEASIBLE = "infeasible"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class RewardConfig:
    w_success: float = 1.0
    w_safety: float = 0.5
    w_efficiency: float = 0.3
    w_comfort: float = 0.1
    w_interaction: float = 0.2
    gamma: float = 0.99
    v_target: float | None = None  # None: scenario speed limit

    def __post_init__(self) -> None:
        weights = (self.w_success, self.w_safety, self.w_efficiency,
                   self.w_comfort, self.w_interaction)
        if any(w < 0 for w in weights):
            raise ValueError("reward weights must be nonnegative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass(frozen=True)
class RewardBreakdown:
    success: float
    safety: float
    efficiency: float
    comfort: float
    interaction: float
    total: float
    # Intermediates kept for instrumentation and tests.
    d_min: float = math.inf
    n_offroad: float = 0.0
    accel_change: float = 0.0
    steer_change: float = 0.0
    attributed_decels: tuple[float, ...] = ()


@dataclass(frozen=True)
class PeriodStats:
    """Aggregates tracked tick-by-tick across one decision period."""

    min_clearance: float
    offroad: bool


def observe(world: WorldState) -> np.ndarray:
    """Fixed-length feature vector: ego block plus K nearest-agent blocks."""
    ego = world.ego
    geom = world.geometry
    limit = world.scenario.speed_limit
    if geom.kind == ScenarioKind.HIGHWAY:
        lane = geom.nearest_lane(ego.y)
        offset = (ego.y - geom.lane_center(lane)) / geom.lane_width
        ref_heading = 0.0
        lane_norm = lane / max(geom.lane_count - 1, 1)
        span = geom.lane_count * geom.lane_width
        goal_dist = (geom.lane_center(geom.goal_lane) - ego.y) / span
    else:
        path = geom.turn_path
        s = path.project(ego.x, ego.y)
        offset = path.lateral_offset(ego.x, ego.y) / geom.lane_width
        ref_heading = path.pose(s)[2]
        lane_norm = geom.nearest_lane(ego.y) / max(geom.lane_count - 1, 1)
        goal_dist = max(geom.goal_s - s, 0.0) / geom.goal_s
    heading_err = wrap_angle(ego.heading - ref_heading) / (math.pi / 2.0)
    out = np.empty(OBS_DIM)
    out[0] = ego.speed / limit
    out[1] = offset
    out[2] = heading_err
    out[3] = lane_norm
    out[4] = goal_dist

    cos_h = math.cos(ego.heading)
    sin_h = math.sin(ego.heading)
    entries: list[tuple[float, int, float, float, float, float]] = []
    for sv in world.svs:
        dx = sv.x - ego.x
        dy = sv.y - ego.y
        rx = cos_h * dx + sin_h * dy
        ry = -sin_h * dx + cos_h * dy
        rel_speed = sv.speed * math.cos(sv.heading - ego.heading) - ego.speed
        entries.append((math.hypot(dx, dy), sv.id, rx, ry, rel_speed, 0.0))
    for w in world.walkers:
        dx = w.x - ego.x
        dy = w.y - ego.y
        rx = cos_h * dx + sin_h * dy
        ry = -sin_h * dx + cos_h * dy
        rel_speed = w.speed * math.cos(w.heading - ego.heading) - ego.speed
        entries.append((math.hypot(dx, dy), w.id, rx, ry, rel_speed, 1.0))
    entries.sort(key=lambda e: (e[0], e[1]))

    for slot in range(OBS_AGENT_SLOTS):
        base = OBS_EGO_DIM + OBS_AGENT_DIM * slot
        if slot < len(entries):
            _, _, rx, ry, rel_speed, is_walker = entries[slot]
            out[base] = max(-REL_CLAMP, min(REL_CLAMP, rx)) / REL_CLAMP
            out[base + 1] = max(-REL_CLAMP, min(REL_CLAMP, ry)) / REL_CLAMP
            out[base + 2] = rel_speed / limit
            out[base + 3] = is_walker
        else:
            out[base] = 1.0
            out[base + 1] = 1.0
            out[base + 2] = 0.0
            out[base + 3] = 0.0
    return out


def compute_reward(
    prev: WorldState,
    action: int,
    next_world: WorldState,
    status: TerminalStatus,
    cfg: RewardConfig = RewardConfig(),
    stats: PeriodStats | None = None,
) -> RewardBreakdown:
    """Five-component decision-step reward.

    ``stats`` carries period-aggregated clearance/offroad; without it the
    end-of-period state is used.
    """
    if status == TerminalStatus.COLLIDED:
        success = -10.0
    elif status == TerminalStatus.TASK_COMPLETE:
        success = 10.0
    elif status == TerminalStatus.INFEASIBLE:
        success = -5.0
    else:
        success = 0.0

    d_min = stats.min_clearance if stats is not None else ego_clearance(next_world)
    offroad = stats.offroad if stats is not None else ego_offroad(next_world)
    n_offroad = -1.0 if offroad else 0.0
    safety = -1.0 / (1.0 + 0.2 * d_min * d_min) + n_offroad

    v_target = cfg.v_target if cfg.v_target is not None else next_world.scenario.speed_limit
    efficiency = min(max(next_world.ego.speed / v_target, 0.0), 1.0)

    accel_change = next_world.ego.accel - prev.ego.accel
    steer_change = next_world.ego.steer - prev.ego.steer
    comfort = -0.5 * abs(accel_change) - 0.2 * abs(steer_change)

    decels = tuple(sv.accel for sv in next_world.svs
                   if sv.braking_for_ego and sv.accel < 0.0)
    interaction = sum(decels)

    total = (cfg.w_success * success + cfg.w_safety * safety
             + cfg.w_efficiency * efficiency + cfg.w_comfort * comfort
             + cfg.w_interaction * interaction)
    return RewardBreakdown(
        success=success, safety=safety, efficiency=efficiency, comfort=comfort,
        interaction=interaction, total=total, d_min=d_min, n_offroad=n_offroad,
        accel_change=accel_change, steer_change=steer_change,
        attributed_decels=decels,
    )


def goal_reached(world: WorldState) -> bool:
    ego = world.ego
    geom = world.geometry
    if geom.kind == ScenarioKind.HIGHWAY:
        gy = geom.lane_center(geom.goal_lane)
        return (abs(ego.y - gy) <= GOAL_LANE_TOL
                and abs(wrap_angle(ego.heading)) < GOAL_HEADING_TOL)
    path = geom.turn_path
    s = path.project(ego.x, ego.y)
    return (s >= geom.goal_s
            and abs(path.lateral_offset(ego.x, ego.y)) <= TURN_GOAL_LAT_TOL
            and abs(wrap_angle(ego.heading - math.pi)) < TURN_GOAL_HEADING_TOL)


def terminal_status(world: WorldState, planner_feasible: bool, elapsed: float,
                    max_time: float = MAX_EPISODE_TIME) -> TerminalStatus:
    """Episode status with fixed priority: collision, goal, infeasible, timeout."""
    if any(pair[0] == 0 for pair in world.collisions):
        return TerminalStatus.COLLIDED
    if goal_reached(world):
        return TerminalStatus.TASK_COMPLETE
    if not planner_feasible:
        return TerminalStatus.INFEASIBLE
    if elapsed >= max_time - 1e-9:
        return TerminalStatus.TIMEOUT
    return TerminalStatus.RUNNING


def action_feasible(world: WorldState, action: int) -> bool:
    """Structural screening: the action's target must exist on the map."""
    if world.geometry.kind != ScenarioKind.HIGHWAY:
        return True
    ego = world.ego
    lane = ego.lane_index if ego.lane_index is not None else world.geometry.nearest_lane(ego.y)
    if action == HighwayAction.CHANGE_LEFT:
        return lane + 1 < world.geometry.lane_count
    if action == HighwayAction.CHANGE_RIGHT:
        return lane - 1 >= 0
    return True


@dataclass
class StepResult:
    observation: np.ndarray
    reward: RewardBreakdown
    done: bool
    status: TerminalStatus
    ticks: list[WorldState] = field(default_factory=list)


def execute_action(
    world: WorldState,
    action: int,
    reward_cfg: RewardConfig = RewardConfig(),
    decision_period: float = DECISION_PERIOD,
    max_time: float = MAX_EPISODE_TIME,
    record_ticks: bool = False,
) -> tuple[WorldState, RewardBreakdown, TerminalStatus, list[WorldState]]:
    """Run one meta-action to completion: plan a reference, track it tick by
    tick while traffic reacts, and score the period.

    Returns the input world unchanged when the action cannot be realized.
    """
    action = int(action)
    feasible = action_feasible(world, action)
    traj = None
    if feasible:
        try:
            traj = motion.generate_trajectory(world, action)
        except motion.InfeasibleManeuver:
            feasible = False
    if not feasible:
        status = TerminalStatus.INFEASIBLE
        stats = PeriodStats(ego_clearance(world), ego_offroad(world))
        breakdown = compute_reward(world, action, world, status, reward_cfg, stats)
        return world, breakdown, status, []

    prev = world
    dt = world.scenario.dt
    steps = max(int(round(decision_period * world.scenario.sim_frequency)), 1)
    min_clear = math.inf
    offroad_any = False
    ticks: list[WorldState] = []
    for k in range(steps):
        cmd = motion.track_step(traj, k * dt, world.ego)
        world = step_world(world, cmd, dt)
        min_clear = min(min_clear, ego_clearance(world))
        offroad_any = offroad_any or ego_offroad(world)
        if record_ticks:
            ticks.append(world)
        if any(pair[0] == 0 for pair in world.collisions):
            break

    status = terminal_status(world, True, world.time, max_time)
    stats = PeriodStats(min_clear, offroad_any)
    breakdown = compute_reward(prev, action, world, status, reward_cfg, stats)
    return world, breakdown, status, ticks


class DrivingEnv:
    """Decision-period environment loop shared by training, search and eval."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        reward: RewardConfig = RewardConfig(),
        decision_period: float = DECISION_PERIOD,
        max_time: float = MAX_EPISODE_TIME,
        record_ticks: bool = False,
    ):
        self.scenario = scenario
        self.reward_cfg = reward
        self.decision_period = decision_period
        self.max_time = max_time
        self.record_ticks = record_ticks
        self.steps_per_decision = max(int(round(decision_period * scenario.sim_frequency)), 1)
        self.actions = action_set(scenario.scenario_kind)
        self._world: WorldState | None = None
        self._done = True

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def obs_dim(self) -> int:
        return OBS_DIM

    @property
    def world(self) -> WorldState:
        if self._world is None:
            raise RuntimeError("environment not reset")
        return self._world

    @property
    def done(self) -> bool:
        return self._done

    def reset(self, seed: int | None = None) -> np.ndarray:
        cfg = self.scenario if seed is None else replace(self.scenario, rng_seed=seed)
        self._world = spawn_scenario(cfg)
        self._done = False
        return observe(self._world)

    def step(self, action: int) -> StepResult:
        if self._done or self._world is None:
            raise RuntimeError("episode finished; call reset() first")
        world, breakdown, status, ticks = execute_action(
            self._world, action, self.reward_cfg, self.decision_period,
            self.max_time, self.record_ticks)
        self._world = world
        self._done = status != TerminalStatus.RUNNING
        return StepResult(observe(world), breakdown, self._done, status, ticks)
