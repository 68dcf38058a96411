"""Trace files: frame capture, JSONL round trips, ASCII replay, SVG charts."""

import dataclasses
import json

import pytest

from bida.agents import RuleBasedAgent
from bida.config import highway_lite, t_lite
from bida.mdp import DrivingEnv
from bida.trace import (
    TraceError,
    make_frame,
    read_trace,
    render_trace,
    write_episode_svgs,
    write_trace,
)


def _episode_frames(scenario, seed=0, visits=None, max_k=8):
    env = DrivingEnv(dataclasses.replace(scenario, rng_seed=seed))
    env.reset(seed)
    agent = RuleBasedAgent()
    agent.begin_episode(seed)
    frames = []
    for k in range(max_k):
        action = agent.decide(env.world).action
        res = env.step(action)
        frames.append(make_frame(k, action, env.world, res.reward, res.status, visits))
        if env.done:
            break
    return frames


def test_frame_shape():
    frames = _episode_frames(highway_lite(), visits=[10, 5, 3, 1, 1])
    f = frames[0]
    assert f["k"] == 0
    assert f["scenario"] == "highway"
    assert set(f["reward"]) == {"success", "safety", "efficiency", "comfort",
                                "interaction", "total", "d_min"}
    assert {"x", "y", "heading", "speed"} <= set(f["ego"])
    assert all({"id", "x", "y", "speed", "accel", "brake_ego"} <= set(sv)
               for sv in f["svs"])
    assert f["root_visits"] == [10, 5, 3, 1, 1]
    json.dumps(frames)  # everything must be JSON-native


def test_round_trip_exact(tmp_path):
    frames = _episode_frames(t_lite(), seed=2)
    path = tmp_path / "ep.jsonl"
    write_trace(path, frames)
    assert read_trace(path) == frames


def test_read_skips_blank_lines(tmp_path):
    frames = _episode_frames(highway_lite(), max_k=2)
    path = tmp_path / "ep.jsonl"
    lines = [json.dumps(f) for f in frames]
    path.write_text(lines[0] + "\n\n" + lines[1] + "\n")
    assert len(read_trace(path)) == 2


def test_read_reports_line_numbers(tmp_path):
    frames = _episode_frames(highway_lite(), max_k=1)
    path = tmp_path / "ep.jsonl"
    path.write_text(json.dumps(frames[0]) + "\n{broken\n")
    with pytest.raises(TraceError, match="line 2"):
        read_trace(path)


def test_read_rejects_non_frames(tmp_path):
    path = tmp_path / "ep.jsonl"
    path.write_text("[1, 2, 3]\n")
    with pytest.raises(TraceError, match="line 1"):
        read_trace(path)
    path.write_text('{"k": 0}\n')
    with pytest.raises(TraceError, match="ego"):
        read_trace(path)


def test_render_empty():
    assert render_trace([]) == ""


def test_render_highway_frame():
    frames = _episode_frames(highway_lite(), visits=[9, 0, 0, 1, 2], max_k=1)
    text = render_trace(frames, width=60)
    header, *grid = text.splitlines()
    assert "k=0" in header and "status=running" in header
    assert "visits=[9, 0, 0, 1, 2]" in header
    assert len(grid) == 12
    assert all(len(row) == 60 for row in grid)
    assert any("E" in row for row in grid)


def test_render_junction_has_walkers():
    frames = _episode_frames(t_lite(), seed=3, max_k=1)
    assert frames[0]["walkers"]
    text = render_trace(frames)
    assert "w" in text.split("\n", 1)[1]


def test_render_separates_frames():
    frames = _episode_frames(highway_lite(), max_k=3)
    text = render_trace(frames)
    assert text.count("[k=") == len(frames)


def test_svg_charts(tmp_path):
    frames = _episode_frames(highway_lite(), visits=[10, 2, 4, 1, 3], max_k=4)
    written = write_episode_svgs(frames, tmp_path, tag="demo")
    names = {p.name for p in written}
    assert names == {"demo_speed.svg", "demo_clearance.svg", "demo_visits.svg"}
    for p in written:
        body = p.read_text()
        assert body.startswith("<svg ") and body.rstrip().endswith("</svg>")
    assert "maintain" in (tmp_path / "demo_visits.svg").read_text()


def test_svg_charts_without_visits(tmp_path):
    frames = _episode_frames(highway_lite(), max_k=2)
    written = write_episode_svgs(frames, tmp_path)
    assert {p.name for p in written} == {"ep_speed.svg", "ep_clearance.svg"}
