"""Compare the compiled kernel core against the pure-Python reference.

Two measurements per kernel: an in-process micro-benchmark of both backends
on identical inputs, and an end-to-end timing of full simulation episodes in
subprocesses pinned to one backend with BIDA_KERNELS.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--episodes N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from bida.kernels import _pure

try:
    from bida.kernels import _core
except ImportError:
    _core = None


def _scene(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, 250.0, n)
    ys = rng.uniform(-2.0, 12.0, n)
    yaws = rng.uniform(-0.3, 0.3, n)
    lengths = np.full(n, 4.8)
    widths = np.full(n, 2.0)
    return xs, ys, yaws, lengths, widths


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def micro_benchmarks(repeat: int) -> list[tuple[str, float, float]]:
    xs, ys, yaws, lengths, widths = _scene(24)
    rows = []

    def pairs(mod):
        return lambda: mod.collision_pairs(xs, ys, yaws, lengths, widths)

    def clearance(mod):
        def run():
            for i in range(len(xs)):
                mod.min_clearance(i, xs, ys, yaws, lengths, widths)
        return run

    def bicycle(mod):
        def run():
            x = y = yaw = 0.0
            v = 25.0
            for _ in range(2000):
                x, y, yaw, v = mod.bicycle_step(x, y, yaw, v, 0.4, 0.01, 0.05, 2.7)
        return run

    def idm(mod):
        def run():
            for gap in np.linspace(2.0, 120.0, 2000):
                mod.idm_accel(27.0, float(gap), 24.0, 33.3, 1.5, 2.0, 2.0, 3.0,
                              4.0, 8.0)
        return run

    cases = [("collision_pairs", pairs), ("min_clearance", clearance),
             ("bicycle_step x2000", bicycle), ("idm_accel x2000", idm)]
    for name, make in cases:
        t_py = _time(make(_pure), repeat)
        t_cy = _time(make(_core), repeat) if _core is not None else float("nan")
        rows.append((name, t_py, t_cy))
    return rows


_EPISODE_SNIPPET = """
import time
from bida.agents import RuleBasedAgent
from bida.bench import run_one_episode
from bida.kernels import KERNEL_BACKEND
from bida.mdp import DrivingEnv
from bida.world import highway_config

t0 = time.perf_counter()
for seed in range({episodes}):
    env = DrivingEnv(highway_config(lane_count=3, sv_count=8))
    run_one_episode(env, RuleBasedAgent(), seed=seed, episode=seed, gamma=0.99)
print(KERNEL_BACKEND, time.perf_counter() - t0)
"""


def episode_benchmark(backend: str, episodes: int) -> float:
    env = dict(os.environ, BIDA_KERNELS=backend)
    out = subprocess.run(
        [sys.executable, "-c", _EPISODE_SNIPPET.format(episodes=episodes)],
        env=env, capture_output=True, text=True, check=True)
    reported, seconds = out.stdout.split()
    if reported != backend:
        raise RuntimeError(f"subprocess ran {reported}, wanted {backend}")
    return float(seconds)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--episodes", type=int, default=5)
    args = parser.parse_args()

    print(f"{'kernel':24s} {'python':>12s} {'cython':>12s} {'speedup':>9s}")
    for name, t_py, t_cy in micro_benchmarks(args.repeat):
        ratio = t_py / t_cy if t_cy == t_cy and t_cy > 0 else float("nan")
        print(f"{name:24s} {t_py * 1e3:10.3f}ms {t_cy * 1e3:10.3f}ms {ratio:8.1f}x")

    if _core is None:
        print("compiled core unavailable; skipping end-to-end comparison")
        return 0

    print()
    t_py = episode_benchmark("python", args.episodes)
    t_cy = episode_benchmark("cython", args.episodes)
    print(f"{args.episodes} highway episodes, 8 vehicles:")
    print(f"  python backend: {t_py:.2f}s")
    print(f"  cython backend: {t_cy:.2f}s  ({t_py / t_cy:.1f}x)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
