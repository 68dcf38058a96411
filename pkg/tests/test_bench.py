"""Benchmark harness: invasive-event detection, metrics records and files,
aggregation, and deterministic parallel evaluation."""

import csv
import dataclasses
import math

import pytest

from bida.agents import RuleBasedAgent
from bida.bench import (
    EpisodeMetrics,
    aggregate,
    detect_invasive,
    load_run_dir,
    read_metrics_csv,
    run_episodes,
    run_one_episode,
    worker_count,
    write_comparison_csv,
    write_metrics_csv,
    write_run_meta,
)
from bida.config import highway_lite
from bida.mdp import DrivingEnv, TerminalStatus
from bida.world import highway_config


# ---------------------------------------------------------------------------
# invasive braking events


def _frame(*svs):
    return {"svs": [{"id": i, "accel": a, "brake_ego": b}
                    for i, (a, b) in enumerate(svs)]}


def test_invasive_none():
    frames = [_frame((-0.5, True), (-1.5, True)), _frame((0.0, False), (-1.9, True))]
    assert detect_invasive(frames) == 0


def test_invasive_single_attributed_dip():
    frames = [_frame((-0.2, False)), _frame((-2.4, True)), _frame((0.1, False))]
    assert detect_invasive(frames) == 1


def test_invasive_unattributed_dip_ignored():
    frames = [_frame((-3.0, False)), _frame((-3.0, False))]
    assert detect_invasive(frames) == 0


def test_invasive_continuous_excursion_counts_once():
    frames = [_frame((-2.5, True)), _frame((-3.0, True)), _frame((-2.1, True)),
              _frame((-1.5, True))]  # still below the exit threshold
    assert detect_invasive(frames) == 1


def test_invasive_hysteresis_separates_events():
    frames = [_frame((-2.5, True)), _frame((-0.5, False)), _frame((-2.5, True))]
    assert detect_invasive(frames) == 2


def test_invasive_thresholds_are_strict():
    # entry needs accel strictly below -2; -1.0 exactly keeps an event open
    assert detect_invasive([_frame((-2.0, True))]) == 0
    frames = [_frame((-2.5, True)), _frame((-1.0, True)), _frame((-2.5, True))]
    assert detect_invasive(frames) == 1


def test_invasive_tracks_vehicles_independently():
    frames = [_frame((-2.5, True), (-2.5, True)), _frame((0.0, False), (-2.2, True))]
    assert detect_invasive(frames) == 2


# ---------------------------------------------------------------------------
# episode metrics


def test_completion_time_invariant():
    with pytest.raises(ValueError):
        EpisodeMetrics(0, 0, TerminalStatus.TIMEOUT, 3.0, False, 0, 1.0, 0.0, 0.0, 4)
    with pytest.raises(ValueError):
        EpisodeMetrics(0, 0, TerminalStatus.TASK_COMPLETE, None, False, 0, 1.0, 0.0, 0.0, 4)


def _metric(episode=0, outcome=TerminalStatus.TASK_COMPLETE, time=6.5,
            collision=False, invasive=0, ret=1.25):
    if outcome != TerminalStatus.TASK_COMPLETE:
        time = None
    return EpisodeMetrics(episode, episode + 100, outcome, time, collision,
                          invasive, 3.75, ret, ret + 0.5, 12)


def test_run_one_episode_consistency():
    env = DrivingEnv(highway_config(lane_count=3, sv_count=2))
    m, frames = run_one_episode(env, RuleBasedAgent(), seed=5, episode=2, gamma=0.99)
    assert m.episode == 2 and m.seed == 5
    assert m.decisions == len(frames)
    assert m.undiscounted_return == pytest.approx(
        sum(f["reward"]["total"] for f in frames))
    assert m.discounted_return == pytest.approx(
        sum(0.99 ** k * f["reward"]["total"] for k, f in enumerate(frames)))
    assert m.min_distance == pytest.approx(min(f["reward"]["d_min"] for f in frames))
    assert isinstance(m.min_distance, float) and not hasattr(m.min_distance, "dtype")
    if m.outcome == TerminalStatus.TASK_COMPLETE:
        assert m.completion_time == pytest.approx(frames[-1]["time"])


# ---------------------------------------------------------------------------
# metrics CSV


def test_metrics_csv_round_trip(tmp_path):
    metrics = [
        _metric(0),
        _metric(1, outcome=TerminalStatus.COLLIDED, collision=True, ret=-9.5),
        _metric(2, outcome=TerminalStatus.TIMEOUT, invasive=3, ret=-0.125),
    ]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, metrics)
    assert read_metrics_csv(path) == metrics


def test_metrics_csv_blank_time_for_incomplete(tmp_path):
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, [_metric(0, outcome=TerminalStatus.TIMEOUT)])
    row = list(csv.DictReader(open(path)))[0]
    assert row["completion_time"] == ""
    assert row["outcome"] == "timeout"


# ---------------------------------------------------------------------------
# evaluation runs


def _factories(sv_count=2):
    scenario = highway_config(lane_count=3, sv_count=sv_count)
    return (lambda: DrivingEnv(scenario)), (lambda: RuleBasedAgent())


def test_run_episodes_deterministic():
    env_f, agent_f = _factories()
    first, _ = run_episodes(env_f, agent_f, episodes=3, base_seed=9)
    second, _ = run_episodes(env_f, agent_f, episodes=3, base_seed=9)
    assert first == second
    assert [m.seed for m in first] == [9, 10, 11]


def test_run_episodes_thread_parity(monkeypatch):
    env_f, agent_f = _factories()
    serial, _ = run_episodes(env_f, agent_f, episodes=4, base_seed=1)
    monkeypatch.setenv("BIDA_THREADS", "3")
    assert worker_count() == 3
    threaded, _ = run_episodes(env_f, agent_f, episodes=4, base_seed=1)
    assert threaded == serial


def test_run_episodes_writes_traces(tmp_path):
    env_f, agent_f = _factories()
    metrics, traces = run_episodes(env_f, agent_f, episodes=2, base_seed=0,
                                   trace_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["trace_ep000.jsonl", "trace_ep001.jsonl"]
    from bida.trace import read_trace

    assert read_trace(tmp_path / "trace_ep000.jsonl") == traces[0]


def test_worker_count_parsing(monkeypatch):
    monkeypatch.delenv("BIDA_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("BIDA_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("BIDA_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("BIDA_THREADS", "lots")
    assert worker_count() == 1


# ---------------------------------------------------------------------------
# aggregation


def _meta(agent="rule", scenario="highway", sv_count=5):
    return {"scenario": scenario, "lane_count": 3, "sv_count": sv_count,
            "walker_count": 0, "agent": agent, "episodes": 3, "base_seed": 0,
            "gamma": 0.99}


def test_aggregate_counts_and_means():
    metrics = [
        _metric(0, time=6.0, ret=2.0),
        _metric(1, outcome=TerminalStatus.COLLIDED, collision=True, invasive=2, ret=-8.0),
        _metric(2, outcome=TerminalStatus.TIMEOUT, ret=0.0),
        _metric(3, time=8.0, ret=4.0, invasive=1),
    ]
    table = aggregate([(_meta(), metrics)])
    assert len(table.rows) == 1
    row = table.rows[0]
    assert (row.scenario, row.sv_count, row.agent) == ("highway", 5, "rule")
    assert row.episodes == 4
    assert row.collisions == 1
    assert row.invasive == 3
    assert row.successes == 2
    assert row.timeouts == 1
    assert row.infeasibles == 0
    assert row.mean_completion_time == pytest.approx(7.0)
    assert row.mean_return == pytest.approx((2.0 - 8.0 + 0.0 + 4.0) / 4)


def test_aggregate_merges_same_cell_and_sorts():
    run_a = (_meta(agent="rule"), [_metric(0)])
    run_b = (_meta(agent="rule"), [_metric(1)])
    run_c = (_meta(agent="bida", sv_count=10), [_metric(0)])
    table = aggregate([run_c, run_a, run_b])
    assert [(r.agent, r.sv_count, r.episodes) for r in table.rows] == [
        ("rule", 5, 2), ("bida", 10, 1)]


def test_aggregate_no_successes_has_no_time():
    metrics = [_metric(0, outcome=TerminalStatus.COLLIDED, collision=True)]
    table = aggregate([(_meta(), metrics)])
    assert table.rows[0].mean_completion_time is None


def test_comparison_csv_blank_for_missing_time(tmp_path):
    metrics = [_metric(0, outcome=TerminalStatus.INFEASIBLE)]
    table = aggregate([(_meta(), metrics)])
    path = tmp_path / "table.csv"
    write_comparison_csv(path, table)
    row = list(csv.DictReader(open(path)))[0]
    assert row["mean_completion_time"] == ""
    assert row["infeasibles"] == "1"


def test_load_run_dir(tmp_path):
    metrics = [_metric(0)]
    write_metrics_csv(tmp_path / "metrics.csv", metrics)
    write_run_meta(tmp_path / "meta.json", highway_lite(), "rule", 1, 0, 0.99)
    meta, loaded = load_run_dir(tmp_path)
    assert meta["agent"] == "rule"
    assert meta["sv_count"] == 5
    assert loaded == metrics


def test_load_run_dir_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_dir(tmp_path)
