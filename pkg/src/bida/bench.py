"""Benchmark harness: runs evaluation episodes for each agent kind, records
traces and per-episode metrics, detects ego-caused emergency braking, and
aggregates runs into the cross-agent comparison table."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from bida import trace as trace_mod
from bida.agents import Agent
from bida.mdp import DrivingEnv, TerminalStatus
from bida.world import ScenarioConfig

INVASIVE_ENTER = -2.0  # m/s^2; ego-attributed deceleration beyond this opens an event
INVASIVE_EXIT = -1.0  # m/s^2; recovery above this closes it


def worker_count() -> int:
    """Episode-level parallelism cap from BIDA_THREADS; serial by default."""
    raw = os.environ.get("BIDA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    seed: int
    outcome: TerminalStatus
    completion_time: float | None  # only for task-complete episodes
    collision: bool
    invasive_count: int
    min_distance: float
    discounted_return: float
    undiscounted_return: float
    decisions: int

    def __post_init__(self) -> None:
        if (self.completion_time is not None) != (self.outcome == TerminalStatus.TASK_COMPLETE):
            raise ValueError("completion time is recorded exactly for task-complete episodes")


def detect_invasive(frames: Sequence[dict]) -> int:
    """Distinct ego-attributed emergency-braking events across a trace.

    An event opens when an ego-attributed vehicle decelerates below the
    entry threshold and stays open until that vehicle recovers above the
    exit threshold, so one continuous excursion counts once.
    """
    active: dict[int, bool] = {}
    count = 0
    for frame in frames:
        for sv in frame.get("svs", []):
            sid = sv["id"]
            if active.get(sid, False):
                if sv["accel"] > INVASIVE_EXIT:
                    active[sid] = False
            elif sv["accel"] < INVASIVE_ENTER and sv.get("brake_ego", False):
                active[sid] = True
                count += 1
    return count


def run_one_episode(env: DrivingEnv, agent: Agent, seed: int, episode: int,
                    gamma: float, max_decisions: int = 120) -> tuple[EpisodeMetrics, list[dict]]:
    env.reset(seed)
    agent.begin_episode(seed)
    frames: list[dict] = []
    disc = total = 0.0
    status = TerminalStatus.RUNNING
    min_dist = math.inf
    k = 0
    while not env.done and k < max_decisions:
        decision = agent.decide(env.world)
        res = env.step(decision.action)
        frames.append(trace_mod.make_frame(k, decision.action, env.world,
                                           res.reward, res.status,
                                           decision.root_visits))
        disc += (gamma ** k) * res.reward.total
        total += res.reward.total
        min_dist = min(min_dist, res.reward.d_min)
        status = res.status
        k += 1
    complete = status == TerminalStatus.TASK_COMPLETE
    metrics = EpisodeMetrics(
        episode=episode,
        seed=seed,
        outcome=status,
        completion_time=float(env.world.time) if complete else None,
        collision=status == TerminalStatus.COLLIDED,
        invasive_count=detect_invasive(frames),
        min_distance=float(min_dist),
        discounted_return=float(disc),
        undiscounted_return=float(total),
        decisions=k,
    )
    return metrics, frames


def run_episodes(env_factory: Callable[[], DrivingEnv],
                 agent_factory: Callable[[], Agent],
                 episodes: int, base_seed: int = 0, gamma: float = 0.99,
                 trace_dir: str | Path | None = None,
                 ) -> tuple[list[EpisodeMetrics], list[list[dict]]]:
    """Seeded evaluation episodes; per-episode results, optionally traced.

    Episodes are independent: each gets a fresh env and agent, so the
    outcome is identical whether they run serially or across workers.
    """

    def one(e: int) -> tuple[EpisodeMetrics, list[dict]]:
        return run_one_episode(env_factory(), agent_factory(), base_seed + e, e, gamma)

    workers = min(worker_count(), episodes)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(episodes)))
    else:
        results = [one(e) for e in range(episodes)]

    metrics = [m for m, _ in results]
    traces = [f for _, f in results]
    if trace_dir is not None:
        out = Path(trace_dir)
        out.mkdir(parents=True, exist_ok=True)
        for e, frames in enumerate(traces):
            trace_mod.write_trace(out / f"trace_ep{e:03d}.jsonl", frames)
    return metrics, traces


# ---------------------------------------------------------------------------
# metrics files


METRICS_COLUMNS = ("episode", "seed", "outcome", "completion_time", "collision",
                   "invasive_count", "min_distance", "discounted_return",
                   "undiscounted_return", "decisions")


def write_metrics_csv(path: str | Path, metrics: Sequence[EpisodeMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for m in metrics:
            writer.writerow([
                m.episode, m.seed, m.outcome.value,
                "" if m.completion_time is None else repr(m.completion_time),
                int(m.collision), m.invasive_count, repr(m.min_distance),
                repr(m.discounted_return), repr(m.undiscounted_return), m.decisions,
            ])


def read_metrics_csv(path: str | Path) -> list[EpisodeMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpisodeMetrics(
                episode=int(row["episode"]),
                seed=int(row["seed"]),
                outcome=TerminalStatus(row["outcome"]),
                completion_time=float(row["completion_time"]) if row["completion_time"] else None,
                collision=bool(int(row["collision"])),
                invasive_count=int(row["invasive_count"]),
                min_distance=float(row["min_distance"]),
                discounted_return=float(row["discounted_return"]),
                undiscounted_return=float(row["undiscounted_return"]),
                decisions=int(row["decisions"]),
            ))
    return out


def write_run_meta(path: str | Path, scenario: ScenarioConfig, agent: str,
                   episodes: int, base_seed: int, gamma: float) -> None:
    meta = {
        "scenario": scenario.scenario_kind.value,
        "lane_count": scenario.lane_count,
        "sv_count": scenario.sv_count,
        "walker_count": scenario.walker_count,
        "agent": agent,
        "episodes": episodes,
        "base_seed": base_seed,
        "gamma": gamma,
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    sv_count: int
    agent: str
    episodes: int
    collisions: int
    invasive: int
    successes: int
    timeouts: int
    infeasibles: int
    mean_completion_time: float | None
    mean_return: float

    def key(self) -> tuple:
        return (self.scenario, self.sv_count, self.agent)


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]


def aggregate(runs: Sequence[tuple[dict, Sequence[EpisodeMetrics]]]) -> ComparisonTable:
    """Fold per-run episode metrics into one row per (scenario, density, agent)."""
    buckets: dict[tuple, list[EpisodeMetrics]] = {}
    meta_by_key: dict[tuple, dict] = {}
    for meta, metrics in runs:
        key = (meta["scenario"], int(meta["sv_count"]), meta["agent"])
        buckets.setdefault(key, []).extend(metrics)
        meta_by_key[key] = meta
    rows = []
    for key in sorted(buckets):
        ms = buckets[key]
        times = [m.completion_time for m in ms if m.completion_time is not None]
        rows.append(ComparisonRow(
            scenario=key[0],
            sv_count=key[1],
            agent=key[2],
            episodes=len(ms),
            collisions=sum(1 for m in ms if m.collision),
            invasive=sum(m.invasive_count for m in ms),
            successes=sum(1 for m in ms if m.outcome == TerminalStatus.TASK_COMPLETE),
            timeouts=sum(1 for m in ms if m.outcome == TerminalStatus.TIMEOUT),
            infeasibles=sum(1 for m in ms if m.outcome == TerminalStatus.INFEASIBLE),
            mean_completion_time=(sum(times) / len(times)) if times else None,
            mean_return=sum(m.discounted_return for m in ms) / len(ms),
        ))
    return ComparisonTable(tuple(rows))


TABLE_COLUMNS = ("scenario", "sv_count", "agent", "episodes", "collisions",
                 "invasive", "successes", "timeouts", "infeasibles",
                 "mean_completion_time", "mean_return")


def write_comparison_csv(path: str | Path, table: ComparisonTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for r in table.rows:
            writer.writerow([
                r.scenario, r.sv_count, r.agent, r.episodes, r.collisions,
                r.invasive, r.successes, r.timeouts, r.infeasibles,
                "" if r.mean_completion_time is None else repr(r.mean_completion_time),
                repr(r.mean_return),
            ])


def load_run_dir(run_dir: str | Path) -> tuple[dict, list[EpisodeMetrics]]:
    run = Path(run_dir)
    meta_path = run / "meta.json"
    metrics_path = run / "metrics.csv"
    if not meta_path.exists() or not metrics_path.exists():
        raise FileNotFoundError(f"{run} must contain meta.json and metrics.csv")
    meta = json.loads(meta_path.read_text())
    return meta, read_metrics_csv(metrics_path)
