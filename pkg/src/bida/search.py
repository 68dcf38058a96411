"""Network-guided tree search with rolling re-planning.

Each decision builds a fresh tree over predicted futures: edges are scored by
mean return plus a prior-weighted exploration bonus, new leaves are valued by
the value network, and returns are folded back to the root as running means.
The tree is discarded after every executed action and rebuilt from the next
real state.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from bida import mdp, motion
from bida.actions import HighwayAction, ScenarioKind, TIntersectionAction, action_set
from bida.nets import NetworkParams, forward
from bida.world import WorldState, predict_transition


class DegenerateRoot(RuntimeError):
    """Raised when no root action passes the feasibility screen."""


@dataclass(frozen=True)
class SearchConfig:
    iterations: int = 100
    exploration_c: float = 1.0
    horizon: int = 10
    decision_period: float = 0.5
    gamma: float = 0.99
    tie_break: str = "prior_then_index"
    root_selection: str = "max_visit"  # or "max_q"
    init_q_from_value: bool = False
    value_clip: tuple[float, float] | None = (-50.0, 50.0)

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.exploration_c < 0:
            raise ValueError("exploration constant must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.root_selection not in ("max_visit", "max_q"):
            raise ValueError("root_selection must be max_visit or max_q")
        if self.tie_break != "prior_then_index":
            raise ValueError("unknown tie_break rule")


class SearchModel(Protocol):
    """Decision process the tree searches over."""

    def actions(self, state) -> Sequence[int]: ...

    def transition(self, state, action: int) -> tuple[object, float, bool]:
        """Returns (next state, reward, terminal)."""

    def priors(self, state) -> np.ndarray: ...

    def value(self, state) -> float: ...


@dataclass
class Edge:
    prior: float
    q: float = 0.0
    n: int = 0
    reward: float = 0.0
    child: "TreeNode | None" = None
    enabled: bool = True


@dataclass
class TreeNode:
    node_id: int
    state: object
    depth: int
    terminal: bool
    actions: tuple[int, ...]
    edges: list[Edge]
    value_estimate: float = 0.0

    def total_visits(self) -> int:
        return sum(e.n for e in self.edges)


@dataclass
class IterationRecord:
    """One select-expand-backup pass, enough to re-derive every update."""

    path: tuple[tuple[int, int], ...]  # (node_id, action) from root to leaf
    rewards: tuple[float, ...]
    leaf_value: float
    returns: tuple[float, ...]  # value folded into each edge, root to leaf
    edges_after: tuple[tuple[float, int], ...]  # (Q, N) post-update, root to leaf


@dataclass
class SearchTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    root_visits: tuple[int, ...] = ()
    root_values: tuple[float, ...] = ()
    chosen_action: int = -1
    wall_clock_s: float = 0.0


def exploration_bonus(node: TreeNode, action_index: int) -> float:
    total = node.total_visits()
    return math.sqrt(math.log(1.0 + total) / (node.edges[action_index].n + 1.0))


def select_edge(node: TreeNode, c: float) -> int:
    """Highest mean-return-plus-bonus edge; ties prefer prior, then index."""
    best = -1
    best_key = None
    for i, edge in enumerate(node.edges):
        if not edge.enabled:
            continue
        score = edge.q + c * edge.prior * exploration_bonus(node, i)
        key = (score, edge.prior, -i)
        if best_key is None or key > best_key:
            best, best_key = i, key
    if best < 0:
        raise DegenerateRoot("no enabled edge to select")
    return best


def _clamp_value(v: float, cfg: SearchConfig) -> float:
    if cfg.value_clip is None:
        return v
    lo, hi = cfg.value_clip
    return min(max(v, lo), hi)


class _NodeFactory:
    def __init__(self, model: SearchModel, cfg: SearchConfig):
        self.model = model
        self.cfg = cfg
        self.next_id = 0

    def make(self, state, depth: int, terminal: bool) -> TreeNode:
        node_id = self.next_id
        self.next_id += 1
        if terminal:
            return TreeNode(node_id, state, depth, True, (), [], 0.0)
        actions = tuple(self.model.actions(state))
        value = _clamp_value(float(self.model.value(state)), self.cfg)
        priors = np.asarray(self.model.priors(state), dtype=float)
        if priors.shape != (len(actions),):
            raise ValueError("prior vector does not match the action set")
        total = float(priors.sum())
        probs = priors / total if total > 0 else np.full(len(actions), 1.0 / len(actions))
        q0 = value if self.cfg.init_q_from_value else 0.0
        edges = [Edge(prior=float(p), q=q0) for p in probs]
        return TreeNode(node_id, state, depth, False, actions, edges, value)


def expand_and_evaluate(model: SearchModel, node: TreeNode, action_index: int,
                        cfg: SearchConfig,
                        factory: _NodeFactory) -> tuple[TreeNode, float]:
    """Grow one child and report its bootstrap value (0 when terminal)."""
    edge = node.edges[action_index]
    if edge.child is not None:
        raise ValueError("edge already expanded")
    child_state, reward, terminal = model.transition(node.state, node.actions[action_index])
    child = factory.make(child_state, node.depth + 1, terminal)
    edge.child = child
    edge.reward = float(reward)
    leaf_value = 0.0 if terminal else child.value_estimate
    return child, leaf_value


def backpropagate(path: list[tuple[TreeNode, int, float]], leaf_value: float,
                  gamma: float) -> list[float]:
    """Fold the sampled return into every edge on the path (root-first input).

    The leaf edge absorbs its reward plus the raw leaf value; each shallower
    edge discounts the deeper return once. Every edge keeps the running mean
    of the returns folded through it. Returns the applied values, root first.
    """
    applied: list[float] = []
    ret = leaf_value
    for i, (node, action_index, reward) in enumerate(reversed(path)):
        ret = reward + (ret if i == 0 else gamma * ret)
        edge = node.edges[action_index]
        edge.q += (ret - edge.q) / (edge.n + 1)
        edge.n += 1
        applied.append(ret)
    applied.reverse()
    return applied


def _best_root_index(root: TreeNode, rule: str) -> int:
    best = -1
    best_key = None
    for i, edge in enumerate(root.edges):
        if not edge.enabled:
            continue
        if rule == "max_visit":
            key = (edge.n, edge.q, -i)
        else:
            key = (edge.q, edge.n, -i)
        if best_key is None or key > best_key:
            best, best_key = i, key
    if best < 0:
        raise DegenerateRoot("no enabled root edge")
    return best


def plan_model(model: SearchModel, root_state, cfg: SearchConfig = SearchConfig(),
               feasible: Sequence[bool] | None = None) -> tuple[int, SearchTrace]:
    """Fixed-budget search from one root; returns the action and full trace."""
    started = _time.perf_counter()
    factory = _NodeFactory(model, cfg)
    root = factory.make(root_state, 0, False)
    if feasible is not None:
        if len(feasible) != len(root.edges):
            raise ValueError("feasibility mask does not match the action set")
        for edge, ok in zip(root.edges, feasible):
            edge.enabled = bool(ok)
        live = [e.prior for e in root.edges if e.enabled]
        if not live:
            raise DegenerateRoot("every root action is screened out")
        total = sum(live)
        for edge in root.edges:
            if not edge.enabled:
                edge.prior = 0.0
            elif total > 0:
                edge.prior /= total
            else:
                edge.prior = 1.0 / len(live)

    trace = SearchTrace()
    for _ in range(cfg.iterations):
        node = root
        path: list[tuple[TreeNode, int, float]] = []
        leaf_value = 0.0
        while True:
            if node.terminal:
                break
            if node.depth >= cfg.horizon:
                leaf_value = node.value_estimate
                break
            idx = select_edge(node, cfg.exploration_c)
            edge = node.edges[idx]
            if edge.child is None:
                _, leaf_value = expand_and_evaluate(model, node, idx, cfg, factory)
                path.append((node, idx, edge.reward))
                break
            path.append((node, idx, edge.reward))
            node = edge.child
        applied = backpropagate(path, leaf_value, cfg.gamma)
        trace.iterations.append(IterationRecord(
            path=tuple((n.node_id, n.actions[i]) for n, i, _ in path),
            rewards=tuple(r for _, _, r in path),
            leaf_value=leaf_value,
            returns=tuple(applied),
            edges_after=tuple((n.edges[i].q, n.edges[i].n) for n, i, _ in path),
        ))

    best = _best_root_index(root, cfg.root_selection)
    trace.root_visits = tuple(e.n for e in root.edges)
    trace.root_values = tuple(e.q for e in root.edges)
    trace.chosen_action = root.actions[best]
    trace.wall_clock_s = _time.perf_counter() - started
    return root.actions[best], trace


@dataclass
class PolicyValueModel:
    """Search model over traffic worlds: constant-velocity prediction for
    other agents, learned priors and values, decision-period rewards."""

    policy: NetworkParams
    value_net: NetworkParams
    reward_cfg: mdp.RewardConfig = mdp.RewardConfig()
    decision_period: float = mdp.DECISION_PERIOD
    max_time: float = mdp.MAX_EPISODE_TIME

    def actions(self, world: WorldState) -> Sequence[int]:
        return action_set(world.scenario.scenario_kind)

    def priors(self, world: WorldState) -> np.ndarray:
        return forward(self.policy, mdp.observe(world))

    def value(self, world: WorldState) -> float:
        return float(forward(self.value_net, mdp.observe(world))[0])

    def transition(self, world: WorldState, action: int) -> tuple[WorldState, float, bool]:
        feasible = mdp.action_feasible(world, action)
        if feasible:
            try:
                motion.generate_trajectory(world, action)
            except motion.InfeasibleManeuver:
                feasible = False
        if not feasible:
            status = mdp.TerminalStatus.INFEASIBLE
            breakdown = mdp.compute_reward(world, action, world, status, self.reward_cfg)
            return world, breakdown.total, True
        nxt = predict_transition(world, action, self.decision_period)
        status = mdp.terminal_status(nxt, True, nxt.time, self.max_time)
        breakdown = mdp.compute_reward(world, action, nxt, status, self.reward_cfg)
        return nxt, breakdown.total, status != mdp.TerminalStatus.RUNNING


def structural_feasibility(world: WorldState) -> list[bool]:
    return [mdp.action_feasible(world, a)
            for a in action_set(world.scenario.scenario_kind)]


def plan(world: WorldState, policy: NetworkParams, value_net: NetworkParams,
         cfg: SearchConfig = SearchConfig(),
         reward_cfg: mdp.RewardConfig = mdp.RewardConfig(),
         feasible: Sequence[bool] | None = None) -> tuple[int, SearchTrace]:
    model = PolicyValueModel(policy, value_net, reward_cfg,
                             cfg.decision_period, mdp.MAX_EPISODE_TIME)
    mask = structural_feasibility(world) if feasible is None else list(feasible)
    return plan_model(model, world, cfg, feasible=mask)


def fallback_action(world: WorldState) -> int:
    """Safe default when the planner has no usable root edge."""
    if world.scenario.scenario_kind == ScenarioKind.HIGHWAY:
        return int(HighwayAction.DECELERATE)
    return int(TIntersectionAction.STOP)


@dataclass
class RollingStepResult:
    world: WorldState
    action: int
    feasible: bool
    status: mdp.TerminalStatus
    reward: mdp.RewardBreakdown
    trace: SearchTrace | None


def rolling_step(world: WorldState, policy: NetworkParams, value_net: NetworkParams,
                 cfg: SearchConfig = SearchConfig(),
                 reward_cfg: mdp.RewardConfig = mdp.RewardConfig(),
                 feasible: Sequence[bool] | None = None) -> RollingStepResult:
    """One decide-then-execute cycle; the tree never survives the cycle."""
    try:
        action, trace = plan(world, policy, value_net, cfg, reward_cfg, feasible)
    except DegenerateRoot:
        action, trace = fallback_action(world), None
    nxt, breakdown, status, _ = mdp.execute_action(
        world, action, reward_cfg, cfg.decision_period)
    return RollingStepResult(nxt, action, status != mdp.TerminalStatus.INFEASIBLE,
                             status, breakdown, trace)
