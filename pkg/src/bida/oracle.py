"""Built-in correctness checks runnable from the command line.

Each check recomputes an expected quantity from an independent construction
(closed forms, exhaustive enumeration, finite differences) and compares the
library against it. Used by the CLI's oracle-check verb and by the
acceptance tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from bida import mdp
from bida.nets import backward, forward, init_params, Activation, Head, softmax
from bida.search import (
    Edge,
    SearchConfig,
    TreeNode,
    backpropagate,
    exploration_bonus,
    plan_model,
)
from bida.world import highway_config, spawn_scenario


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# toy planning problem with an exactly known optimum


class LatticeMDP:
    """Depth-bounded tree task whose rewards sit on a coarse lattice.

    Rewards are multiples of 0.25 and the horizon discount is 1, so root
    returns are either exactly tied or separated by at least one lattice
    step; optimal root actions are unambiguous for the planner to find.
    """

    def __init__(self, seed: int, depth: int = 3, n_actions: int = 2):
        self.seed = seed
        self.depth = depth
        self.n_actions = n_actions
        rng = np.random.default_rng(seed)
        self.rewards: dict[tuple, tuple[float, ...]] = {}
        for d in range(depth):
            for path in itertools.product(range(n_actions), repeat=d):
                self.rewards[path] = tuple(
                    0.25 * int(rng.integers(-4, 5)) for _ in range(n_actions))
        self._values: dict[tuple, float] = {}

    def optimal_value(self, path: tuple = ()) -> float:
        if len(path) >= self.depth:
            return 0.0
        if path not in self._values:
            self._values[path] = max(
                self.rewards[path][a] + self.optimal_value(path + (a,))
                for a in range(self.n_actions))
        return self._values[path]

    def optimal_roots(self) -> set[int]:
        returns = [self.rewards[()][a] + self.optimal_value((a,))
                   for a in range(self.n_actions)]
        best = max(returns)
        return {a for a, r in enumerate(returns) if r >= best - 1e-12}

    # search-model interface

    def actions(self, state: tuple) -> Sequence[int]:
        return range(self.n_actions)

    def transition(self, state: tuple, action: int):
        nxt = state + (action,)
        return nxt, self.rewards[state][action], len(nxt) >= self.depth

    def priors(self, state: tuple) -> np.ndarray:
        scores = np.array([
            2.0 * (self.rewards[state][a] + self.optimal_value(state + (a,)))
            for a in range(self.n_actions)])
        return softmax(scores)

    def value(self, state: tuple) -> float:
        return self.optimal_value(state)


def greedy_trap_instances(count: int, seed_cap: int = 20_000) -> list[LatticeMDP]:
    """Lattice tasks where following the largest immediate reward loses.

    Scans seeds and keeps instances whose root action with the strictly
    larger one-step reward is absent from the enumeration-optimal set, so a
    planner that merely chases instant reward provably fails on them.
    """
    out: list[LatticeMDP] = []
    for seed in range(seed_cap):
        if len(out) >= count:
            break
        toy = LatticeMDP(seed)
        r0, r1 = toy.rewards[()]
        if r0 == r1:
            continue
        greedy = 0 if r0 > r1 else 1
        if greedy not in toy.optimal_roots():
            out.append(toy)
    if len(out) < count:
        raise RuntimeError(f"only {len(out)} greedy-trap instances in {seed_cap} seeds")
    return out


def check_toy_plan_optimality(seeds: int = 20, iterations: int = 200) -> CheckResult:
    cfg = SearchConfig(iterations=iterations, gamma=1.0, horizon=6)
    failures = []
    for toy in greedy_trap_instances(seeds):
        action, _ = plan_model(toy, (), cfg)
        if action not in toy.optimal_roots():
            failures.append(toy.seed)
    ok = not failures
    detail = "all optimal" if ok else f"suboptimal at seeds {failures}"
    return CheckResult("toy-plan-optimality", ok,
                       f"{seeds} greedy-trap tasks, n={iterations}: {detail}")


# ---------------------------------------------------------------------------
# closed-form point checks


def _approx(a: float, b: float, tol: float = 1e-12) -> bool:
    return abs(a - b) <= tol


def check_reward_points() -> CheckResult:
    world = spawn_scenario(highway_config(sv_count=0))
    cfg = mdp.RewardConfig()
    probes = []

    for status, want in ((mdp.TerminalStatus.COLLIDED, -10.0),
                         (mdp.TerminalStatus.TASK_COMPLETE, 10.0),
                         (mdp.TerminalStatus.INFEASIBLE, -5.0)):
        got = mdp.compute_reward(world, 0, world, status, cfg).success
        probes.append((f"success[{status.value}]", got, want, _approx(got, want)))

    stats = mdp.PeriodStats(min_clearance=2.0, offroad=False)
    got = mdp.compute_reward(world, 0, world, mdp.TerminalStatus.RUNNING, cfg, stats).safety
    probes.append(("safety[d=2]", got, -1.0 / 1.8, _approx(got, -1.0 / 1.8)))

    limit = world.scenario.speed_limit
    half = world.copy()
    half.ego.speed = 0.5 * limit
    got = mdp.compute_reward(world, 0, half, mdp.TerminalStatus.RUNNING, cfg).efficiency
    probes.append(("efficiency[v=0.5vt]", got, 0.5, _approx(got, 0.5)))
    over = world.copy()
    over.ego.speed = 1.5 * limit
    got = mdp.compute_reward(world, 0, over, mdp.TerminalStatus.RUNNING, cfg).efficiency
    probes.append(("efficiency[v>vt]", got, 1.0, _approx(got, 1.0)))

    bad = [p for p in probes if not p[3]]
    detail = "; ".join(f"{n}={g!r} want {w!r}" for n, g, w, _ in (bad or probes[:1]))
    return CheckResult("reward-point-checks", not bad, detail)


def check_selection_bonus() -> CheckResult:
    node = TreeNode(node_id=0, state=None, depth=0, terminal=False,
                    actions=(0, 1), edges=[Edge(prior=0.5), Edge(prior=0.5)])
    node.edges[0].n = 1
    node.edges[1].n = 3
    got = exploration_bonus(node, 0)
    want = math.sqrt(math.log(5.0) / 2.0)
    ok = _approx(got, want)
    return CheckResult("selection-bonus", ok, f"got {got!r}, want sqrt(ln5/2)={want!r}")


def check_incremental_mean() -> CheckResult:
    node = TreeNode(node_id=0, state=None, depth=0, terminal=False,
                    actions=(0,), edges=[Edge(prior=1.0)])
    node.edges[0].q = 2.0
    node.edges[0].n = 3
    backpropagate([(node, 0, 6.0)], leaf_value=0.0, gamma=1.0)
    got, n = node.edges[0].q, node.edges[0].n
    ok = _approx(got, 3.0) and n == 4
    return CheckResult("incremental-mean", ok, f"Q={got!r} (want 3.0), N={n} (want 4)")


# ---------------------------------------------------------------------------
# gradients


def check_gradients(n_nets: int = 10, tol: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(n_nets):
        dims = (int(rng.integers(2, 5)), int(rng.integers(3, 6)), int(rng.integers(2, 4)))
        head = Head.SOFTMAX if rng.random() < 0.5 else Head.LINEAR
        params = init_params(dims, Activation.TANH, head, seed=int(rng.integers(10_000)))
        for b in params.biases:
            b[:] = 0.1 * rng.normal(size=b.shape)
        x = rng.normal(size=dims[0])
        gout = rng.normal(size=dims[-1])

        def loss() -> float:
            return float(np.dot(forward(params, x), gout))

        grads = backward(params, x, gout)
        h = 1e-5
        for li, w in enumerate(params.weights):
            it = np.nditer(w, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = w[idx]
                w[idx] = orig + h
                up = loss()
                w[idx] = orig - h
                dn = loss()
                w[idx] = orig
                num = (up - dn) / (2 * h)
                ana = grads.weights[li][idx]
                denom = max(abs(num), abs(ana), 1e-3)
                worst = max(worst, abs(num - ana) / denom)
    ok = worst < tol
    return CheckResult("gradient-check", ok, f"{n_nets} nets, max rel err {worst:.2e}")


def check_softmax_simplex(n: int = 50, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(n):
        logits = rng.normal(scale=rng.uniform(0.1, 200.0), size=int(rng.integers(2, 8)))
        p = softmax(logits)
        worst = max(worst, abs(float(p.sum()) - 1.0))
        if np.any(p < 0):
            return CheckResult("softmax-simplex", False, "negative probability")
    return CheckResult("softmax-simplex", worst < tol, f"max |sum-1| = {worst:.2e}")


ALL_CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_reward_points,
    check_selection_bonus,
    check_incremental_mean,
    check_softmax_simplex,
    check_gradients,
    check_toy_plan_optimality,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
