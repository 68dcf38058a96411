"""Decision agents evaluated by the benchmark harness.

Four policies over the same meta-action interface: the full stack (learned
priors and values guiding tree search with rolling re-planning), the same
tree with uniform priors and random-rollout leaf estimates, the bare greedy
network policy, and a hand-written car-following/gap-acceptance rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from bida import mdp
from bida.actions import HighwayAction, ScenarioKind, TIntersectionAction
from bida.nets import NetworkParams, forward
from bida.search import (
    DegenerateRoot,
    PolicyValueModel,
    SearchConfig,
    SearchTrace,
    fallback_action,
    plan_model,
    structural_feasibility,
)
from bida.motion import LANE_CHANGE_TIME
from bida.world import (
    DEFAULT_IDM,
    DEFAULT_MOBIL,
    NO_LEADER_GAP,
    T_GOAL_X,
    VEHICLE_LENGTH,
    WorldState,
    idm_acceleration,
    mobil_neighbors,
)


@dataclass(frozen=True)
class Decision:
    action: int
    root_visits: tuple[int, ...] | None = None
    root_values: tuple[float, ...] | None = None


class Agent(Protocol):
    name: str

    def begin_episode(self, seed: int) -> None: ...

    def decide(self, world: WorldState) -> Decision: ...


def _trace_decision(action: int, trace: SearchTrace | None) -> Decision:
    if trace is None:
        return Decision(action)
    return Decision(action, tuple(trace.root_visits), tuple(trace.root_values))


@dataclass
class BidaAgent:
    """Prior-guided search over the learned policy and value networks."""

    policy: NetworkParams
    value_net: NetworkParams
    search_cfg: SearchConfig = SearchConfig()
    reward_cfg: mdp.RewardConfig = mdp.RewardConfig()
    name: str = "bida"

    def begin_episode(self, seed: int) -> None:
        pass

    def decide(self, world: WorldState) -> Decision:
        model = PolicyValueModel(self.policy, self.value_net, self.reward_cfg,
                                 self.search_cfg.decision_period)
        try:
            action, trace = plan_model(model, world, self.search_cfg,
                                       feasible=structural_feasibility(world))
        except DegenerateRoot:
            return Decision(fallback_action(world))
        return _trace_decision(action, trace)


@dataclass
class _RolloutModel:
    """Same transition dynamics, uniform priors, sampled-rollout leaf values."""

    inner: PolicyValueModel
    rng: np.random.Generator
    gamma: float = 0.99
    rollout_depth: int = 6

    def actions(self, world: WorldState) -> Sequence[int]:
        return self.inner.actions(world)

    def transition(self, world: WorldState, action: int):
        return self.inner.transition(world, action)

    def priors(self, world: WorldState) -> np.ndarray:
        n = len(self.inner.actions(world))
        return np.full(n, 1.0 / n)

    def value(self, world: WorldState) -> float:
        total, discount = 0.0, 1.0
        state = world
        for _ in range(self.rollout_depth):
            acts = self.inner.actions(state)
            action = int(self.rng.integers(len(acts)))
            state, reward, terminal = self.inner.transition(state, action)
            total += discount * reward
            if terminal:
                break
            discount *= self.gamma
        return total


@dataclass
class PlainMctsAgent:
    """Search without learned guidance; leaf values from random rollouts."""

    search_cfg: SearchConfig = SearchConfig()
    reward_cfg: mdp.RewardConfig = mdp.RewardConfig()
    rollout_depth: int = 6
    name: str = "mcts"
    _rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def begin_episode(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def decide(self, world: WorldState) -> Decision:
        inner = PolicyValueModel(None, None, self.reward_cfg,
                                 self.search_cfg.decision_period)
        model = _RolloutModel(inner, self._rng, self.search_cfg.gamma,
                              self.rollout_depth)
        try:
            action, trace = plan_model(model, world, self.search_cfg,
                                       feasible=structural_feasibility(world))
        except DegenerateRoot:
            return Decision(fallback_action(world))
        return _trace_decision(action, trace)


@dataclass
class RawPolicyAgent:
    """Greedy argmax over the policy network; no search, no masking."""

    policy: NetworkParams
    name: str = "policy"

    def begin_episode(self, seed: int) -> None:
        pass

    def decide(self, world: WorldState) -> Decision:
        probs = forward(self.policy, mdp.observe(world))
        return Decision(int(np.argmax(probs)))


def time_to_conflict_box(x: float, y: float, vx: float, vy: float,
                         box: tuple[float, float, float, float]) -> float:
    """Entry time of a constant-velocity point into an axis-aligned box.

    Zero when already inside; inf when the ray never enters.
    """
    xmin, xmax, ymin, ymax = box
    t_enter, t_exit = -math.inf, math.inf
    for p, v, lo, hi in ((x, vx, xmin, xmax), (y, vy, ymin, ymax)):
        if abs(v) < 1e-12:
            if not lo <= p <= hi:
                return math.inf
            continue
        t0, t1 = (lo - p) / v, (hi - p) / v
        if t0 > t1:
            t0, t1 = t1, t0
        t_enter = max(t_enter, t0)
        t_exit = min(t_exit, t1)
    if t_enter > t_exit or t_exit < 0.0:
        return math.inf
    return max(t_enter, 0.0)


@dataclass
class RuleBasedAgent:
    """Car-following lane selection on the highway; creep-and-accept gaps
    at the junction."""

    gap_accept_s: float = 4.0
    creep_zone_m: float = 3.0
    name: str = "rule"

    def begin_episode(self, seed: int) -> None:
        pass

    def decide(self, world: WorldState) -> Decision:
        if world.scenario.scenario_kind == ScenarioKind.HIGHWAY:
            return Decision(self._highway(world))
        return Decision(self._junction(world))

    def _longitudinal(self, world: WorldState) -> int:
        nb = mobil_neighbors(world.ego, world).current
        accel = idm_acceleration(world.ego.speed, nb.leader_gap, nb.leader_speed)
        if accel < -1.0:
            return int(HighwayAction.DECELERATE)
        limit = world.scenario.speed_limit
        if accel > 0.5 and world.ego.speed < limit - 0.5:
            return int(HighwayAction.ACCELERATE)
        return int(HighwayAction.MAINTAIN)

    def _corridor_clear(self, world: WorldState, target_lane: int) -> bool:
        """Reject a change when a vehicle already inside the lateral band
        the ego will sweep cannot outlast the maneuver.

        Mid-change vehicles are bucketed by target lane in the neighbor
        scan, so a car converging on the ego's path can look like an empty
        slot; this screens by actual lateral position instead.
        """
        ego = world.ego
        ty = world.geometry.lane_center(target_lane)
        lo, hi = sorted((ego.y, ty))
        span = max(abs(ty - ego.y), 1e-6)
        for sv in world.svs:
            if not (lo - 1.0 <= sv.y <= hi + 1.0):
                continue
            gap = abs(sv.x - ego.x) - VEHICLE_LENGTH
            closing = (ego.speed - sv.speed) if sv.x >= ego.x else (sv.speed - ego.speed)
            # time until the ego's lateral sweep reaches the vehicle, plus
            # one second of overlap before it is laterally clear again
            t_reach = LANE_CHANGE_TIME * min(abs(sv.y - ego.y) / span, 1.0)
            window = min(t_reach + 1.0, LANE_CHANGE_TIME)
            if gap - max(closing, 0.0) * window < 4.0:
                return False
        return True

    def _change_safe(self, world: WorldState, target) -> bool:
        """Target-lane slot check: enough front gap, no hard self-braking
        onto the new leader, follower not forced into a hard brake."""
        if target is None:
            return False
        if target.leader_gap < DEFAULT_IDM.min_gap + 2.0:
            return False
        if idm_acceleration(world.ego.speed, target.leader_gap,
                            target.leader_speed) < -2.5:
            return False
        if target.follower_gap < NO_LEADER_GAP:
            if target.follower_gap < DEFAULT_IDM.min_gap:
                return False
            induced = idm_acceleration(target.follower_speed, target.follower_gap,
                                       world.ego.speed)
            if induced < -DEFAULT_MOBIL.safe_decel:
                return False
        return True

    def _highway(self, world: WorldState) -> int:
        ego = world.ego
        geom = world.geometry
        lane = ego.lane_index if ego.lane_index is not None else geom.nearest_lane(ego.y)
        goal = geom.goal_lane
        if lane != goal:
            nb = mobil_neighbors(ego, world)
            if (goal > lane and self._change_safe(world, nb.left)
                    and self._corridor_clear(world, lane + 1)):
                return int(HighwayAction.CHANGE_LEFT)
            if (goal < lane and self._change_safe(world, nb.right)
                    and self._corridor_clear(world, lane - 1)):
                return int(HighwayAction.CHANGE_RIGHT)
        return self._longitudinal(world)

    def _junction(self, world: WorldState) -> int:
        box = world.geometry.conflict_box
        ego = world.ego
        front_y = ego.y + 0.5 * ego.length
        if front_y >= box[2] or ego.x < box[0]:
            # committed into or past the junction: clear it
            return int(TIntersectionAction.PROCEED)
        # widen the gap region across the exit leg so crossing walkers on
        # the far side of the junction delay entry too
        guard = (T_GOAL_X - 5.0, box[1], box[2], box[3])
        ttcs = [
            time_to_conflict_box(
                agent.x, agent.y,
                agent.speed * math.cos(agent.heading),
                agent.speed * math.sin(agent.heading), guard)
            for agent in (list(world.svs) + list(world.walkers))
        ]
        if not ttcs or min(ttcs) > self.gap_accept_s:
            return int(TIntersectionAction.PROCEED)
        if box[2] - front_y > self.creep_zone_m:
            return int(TIntersectionAction.CREEP)
        return int(TIntersectionAction.STOP)


AGENT_KINDS = ("bida", "mcts", "policy", "rule")


def build_agent(kind: str, policy: NetworkParams | None = None,
                value_net: NetworkParams | None = None,
                search_cfg: SearchConfig = SearchConfig(),
                reward_cfg: mdp.RewardConfig = mdp.RewardConfig()) -> Agent:
    """Construct an agent by benchmark name; network-bearing kinds require
    the corresponding checkpoints."""
    if kind == "bida":
        if policy is None or value_net is None:
            raise ValueError("bida agent needs policy and value checkpoints")
        return BidaAgent(policy, value_net, search_cfg, reward_cfg)
    if kind == "mcts":
        return PlainMctsAgent(search_cfg, reward_cfg)
    if kind == "policy":
        if policy is None:
            raise ValueError("policy agent needs a policy checkpoint")
        return RawPolicyAgent(policy)
    if kind == "rule":
        return RuleBasedAgent()
    raise ValueError(f"unknown agent kind: {kind!r}")
