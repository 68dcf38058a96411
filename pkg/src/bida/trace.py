"""Episode trace files and their renderings.

A trace is JSON-lines, one frame per decision: the post-step world snapshot,
the action taken, the reward breakdown, and the search root statistics when
the agent exposes them. Rendering covers a frame-by-frame ASCII top view and
per-episode SVG charts; no binary formats anywhere.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from bida.actions import ScenarioKind, action_name
from bida.mdp import RewardBreakdown, TerminalStatus
from bida.world import WorldState


class TraceError(ValueError):
    """Malformed trace file; message carries the offending line number."""


def make_frame(k: int, action: int, world: WorldState, reward: RewardBreakdown,
               status: TerminalStatus,
               root_visits: Sequence[int] | None = None) -> dict:
    kind = world.scenario.scenario_kind
    return {
        "k": k,
        "time": world.time,
        "action": int(action),
        "action_name": action_name(kind, action),
        "status": status.value,
        "ego": {
            "x": world.ego.x, "y": world.ego.y,
            "heading": world.ego.heading, "speed": world.ego.speed,
        },
        "svs": [
            {
                "id": sv.id, "x": sv.x, "y": sv.y,
                "heading": sv.heading, "speed": sv.speed,
                "accel": sv.accel, "brake_ego": bool(sv.braking_for_ego),
            }
            for sv in world.svs
        ],
        "walkers": [
            {"id": w.id, "x": w.x, "y": w.y, "heading": w.heading}
            for w in world.walkers
        ],
        "reward": {
            "success": reward.success,
            "safety": reward.safety,
            "efficiency": reward.efficiency,
            "comfort": reward.comfort,
            "interaction": reward.interaction,
            "total": reward.total,
            "d_min": reward.d_min,
        },
        "root_visits": list(root_visits) if root_visits is not None else None,
        "scenario": kind.value,
    }


def write_trace(path: str | Path, frames: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for frame in frames:
            fh.write(json.dumps(frame, sort_keys=True))
            fh.write("\n")


def read_trace(path: str | Path) -> list[dict]:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                frame = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"line {lineno}: {exc}") from exc
            if not isinstance(frame, dict) or "ego" not in frame:
                raise TraceError(f"line {lineno}: frame must be an object with an 'ego' entry")
            frames.append(frame)
    return frames


# ---------------------------------------------------------------------------
# ASCII rendering


def _place(grid: list[list[str]], col: int, row: int, ch: str) -> None:
    if 0 <= row < len(grid) and 0 <= col < len(grid[0]):
        grid[row][col] = ch


def _render_frame(frame: dict, width: int = 72) -> str:
    ego = frame["ego"]
    highway = frame.get("scenario", "highway") == ScenarioKind.HIGHWAY.value
    if highway:
        x_lo, x_hi = ego["x"] - 30.0, ego["x"] + 42.0
        y_lo, y_hi = -3.0, 17.0
    else:
        x_lo, x_hi = -30.0, 30.0
        y_lo, y_hi = -12.0, 8.0
    rows = 12
    sx = (width - 1) / (x_hi - x_lo)
    sy = (rows - 1) / (y_hi - y_lo)
    grid = [[" "] * width for _ in range(rows)]

    def to_cell(x: float, y: float) -> tuple[int, int]:
        # y grows upward; rows grow downward
        return int(round((x - x_lo) * sx)), rows - 1 - int(round((y - y_lo) * sy))

    for sv in frame.get("svs", []):
        c, r = to_cell(sv["x"], sv["y"])
        _place(grid, c, r, str(sv["id"] % 10))
    for w in frame.get("walkers", []):
        c, r = to_cell(w["x"], w["y"])
        _place(grid, c, r, "w")
    c, r = to_cell(ego["x"], ego["y"])
    _place(grid, c, r, "E")

    rew = frame.get("reward", {})
    parts = " ".join(f"{name[:3]}={rew.get(name, 0.0):+.2f}"
                     for name in ("success", "safety", "efficiency", "comfort", "interaction"))
    visits = frame.get("root_visits")
    visits_txt = f" visits={visits}" if visits else ""
    header = (f"[k={frame.get('k', '?')} t={frame.get('time', 0.0):6.2f}s] "
              f"{frame.get('action_name', '?'):>12s} total={rew.get('total', 0.0):+.3f} "
              f"({parts}) status={frame.get('status', '?')}{visits_txt}")
    body = "\n".join("".join(row) for row in grid)
    return header + "\n" + body


def render_trace(frames: Sequence[dict], width: int = 72) -> str:
    """Full plaintext replay; empty input renders to an empty string."""
    return "\n\n".join(_render_frame(f, width) for f in frames)


# ---------------------------------------------------------------------------
# SVG charts


def _svg_header(w: int, h: int) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n')


def _polyline_chart(title: str, xs: Sequence[float], ys: Sequence[float],
                    w: int = 480, h: int = 240) -> str:
    pad = 36
    finite = [v for v in ys if math.isfinite(v)]
    if not xs or not finite:
        return _svg_header(w, h) + f'<text x="{pad}" y="20">{title} (no data)</text>\n</svg>\n'
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(finite), max(finite)
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0
    if y_hi - y_lo < 1e-12:
        y_hi = y_lo + 1.0
    cap = y_hi + 0.05 * (y_hi - y_lo)

    def px(x: float) -> float:
        return pad + (x - x_lo) / (x_hi - x_lo) * (w - 2 * pad)

    def py(y: float) -> float:
        y = min(y, cap)
        return h - pad - (y - y_lo) / (y_hi - y_lo) * (h - 2 * pad)

    pts = " ".join(f"{px(x):.2f},{py(min(y, cap) if math.isfinite(y) else cap):.2f}"
                   for x, y in zip(xs, ys))
    out = _svg_header(w, h)
    out += f'<text x="{pad}" y="20" font-size="13">{title}</text>\n'
    out += (f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>\n'
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="black"/>\n')
    out += f'<text x="{pad}" y="{h - pad + 14}" font-size="10">{x_lo:.1f}</text>\n'
    out += f'<text x="{w - pad - 20}" y="{h - pad + 14}" font-size="10">{x_hi:.1f}</text>\n'
    out += f'<text x="2" y="{h - pad}" font-size="10">{y_lo:.2f}</text>\n'
    out += f'<text x="2" y="{pad}" font-size="10">{y_hi:.2f}</text>\n'
    out += f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>\n'
    return out + "</svg>\n"


def _bar_chart(title: str, labels: Sequence[str], values: Sequence[float],
               w: int = 480, h: int = 240) -> str:
    pad = 36
    out = _svg_header(w, h)
    out += f'<text x="{pad}" y="20" font-size="13">{title}</text>\n'
    if not values or max(values) <= 0:
        return out + "</svg>\n"
    top = max(values)
    slot = (w - 2 * pad) / len(values)
    for i, (label, val) in enumerate(zip(labels, values)):
        bar_h = (h - 2 * pad) * val / top
        x = pad + i * slot
        out += (f'<rect x="{x + 2:.2f}" y="{h - pad - bar_h:.2f}" '
                f'width="{slot - 4:.2f}" height="{bar_h:.2f}" fill="steelblue"/>\n')
        out += (f'<text x="{x + slot / 2:.2f}" y="{h - pad + 14}" font-size="9" '
                f'text-anchor="middle">{label}</text>\n')
        out += (f'<text x="{x + slot / 2:.2f}" y="{h - pad - bar_h - 4:.2f}" font-size="9" '
                f'text-anchor="middle">{val:.0f}</text>\n')
    return out + "</svg>\n"


def write_episode_svgs(frames: Sequence[dict], out_dir: str | Path,
                       tag: str = "ep") -> list[Path]:
    """Per-episode speed, clearance, and root-visit charts; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times = [f["time"] for f in frames]
    written = []

    speed = _polyline_chart("ego speed (m/s)", times,
                            [f["ego"]["speed"] for f in frames])
    p = out / f"{tag}_speed.svg"
    p.write_text(speed)
    written.append(p)

    clearance = _polyline_chart("min clearance (m)", times,
                                [f["reward"]["d_min"] for f in frames])
    p = out / f"{tag}_clearance.svg"
    p.write_text(clearance)
    written.append(p)

    visit_frames = [f for f in frames if f.get("root_visits")]
    if visit_frames:
        n = len(visit_frames[0]["root_visits"])
        totals = [0.0] * n
        for f in visit_frames:
            for i, v in enumerate(f["root_visits"]):
                totals[i] += v
        kind = ScenarioKind(visit_frames[0].get("scenario", "highway"))
        labels = [action_name(kind, i) for i in range(n)]
        p = out / f"{tag}_visits.svg"
        p.write_text(_bar_chart("root visit totals", labels, totals))
        written.append(p)
    return written
