"""Command-line surface: train, evaluate, compare, replay, oracle-check.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 oracle-check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from bida import bench, config as config_mod, trace as trace_mod
from bida.actions import ScenarioKind
from bida.agents import build_agent
from bida.mdp import DrivingEnv
from bida.nets import DimensionError, load_checkpoint, save_checkpoint
from bida.training import Algorithm, train, write_curve_csv
from bida.world import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="bida", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("train", help="train policy and value networks")
    p_train.add_argument("--config", help="experiment config JSON (default: built-in highway)")
    p_train.add_argument("--algo", choices=[a.value for a in Algorithm])
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("evaluate", help="run evaluation episodes for one agent")
    p_eval.add_argument("--config", help="experiment config JSON (default: built-in highway)")
    p_eval.add_argument("--agent", choices=config_mod.AGENT_CHOICES)
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None, help="base episode seed")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--no-traces", action="store_true",
                        help="skip per-episode JSONL trace files")

    p_cmp = sub.add_parser("compare", help="aggregate evaluation runs into one table")
    p_cmp.add_argument("--inputs", nargs="+", required=True, help="evaluation run directories")
    p_cmp.add_argument("--out", required=True, help="output CSV path")

    p_rep = sub.add_parser("replay", help="render a trace file")
    p_rep.add_argument("--trace", required=True)
    p_rep.add_argument("--svg", help="directory for per-episode SVG charts")

    sub.add_parser("oracle-check", help="run built-in correctness oracles")
    return parser


def _load_experiment(path: str | None) -> config_mod.ExperimentConfig:
    if path is None:
        return config_mod.default_experiment()
    return config_mod.load_config(path)


def _load_net(path: str | None, role: str):
    if path is None:
        raise ConfigError(f"config does not name a {role} checkpoint")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{role} checkpoint not found: {p}")
    try:
        return load_checkpoint(p)
    except (DimensionError, ValueError) as exc:
        raise ConfigError(f"bad {role} checkpoint {p}: {exc}") from exc


def cmd_train(args) -> int:
    cfg = _load_experiment(args.config)
    train_cfg = cfg.train
    if args.algo is not None:
        train_cfg = dataclasses.replace(train_cfg, algorithm=Algorithm(args.algo))
    seed = args.seed if args.seed is not None else train_cfg.seeds[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scenario, reward = cfg.scenario, cfg.reward

    def env_factory(s: int) -> DrivingEnv:
        return DrivingEnv(dataclasses.replace(scenario, rng_seed=s), reward)

    result = train(env_factory, train_cfg, seed)
    save_checkpoint(result.policy, out / f"policy_seed{seed}.json")
    save_checkpoint(result.value, out / f"value_seed{seed}.json")
    write_curve_csv(out / f"curve_seed{seed}.csv", result.curve)
    resolved = dataclasses.replace(
        cfg, train=train_cfg,
        policy_checkpoint=str(out / f"policy_seed{seed}.json"),
        value_checkpoint=str(out / f"value_seed{seed}.json"))
    config_mod.save_config(resolved, out / "config.json")
    final = result.final_eval
    print(f"trained {train_cfg.algorithm.value} seed {seed}: "
          f"mean return {final.mean_return:.3f}, success {final.success_rate:.2f}, "
          f"collisions {final.collision_rate:.2f}")
    print(f"checkpoints and curve written to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_experiment(args.config)
    agent_kind = args.agent or cfg.agent
    episodes = args.episodes if args.episodes is not None else cfg.episodes
    base_seed = args.seed if args.seed is not None else cfg.base_seed
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    policy = value_net = None
    if agent_kind in ("bida", "policy"):
        policy = _load_net(cfg.policy_checkpoint, "policy")
    if agent_kind == "bida":
        value_net = _load_net(cfg.value_checkpoint, "value")

    scenario, reward = cfg.scenario, cfg.reward

    def env_factory() -> DrivingEnv:
        return DrivingEnv(scenario, reward)

    def agent_factory():
        return build_agent(agent_kind, policy, value_net, cfg.search, reward)

    metrics, _ = bench.run_episodes(
        env_factory, agent_factory, episodes, base_seed, reward.gamma,
        trace_dir=None if args.no_traces else out)
    bench.write_metrics_csv(out / "metrics.csv", metrics)
    bench.write_run_meta(out / "meta.json", scenario, agent_kind, episodes,
                         base_seed, reward.gamma)
    successes = sum(1 for m in metrics if m.completion_time is not None)
    collisions = sum(1 for m in metrics if m.collision)
    invasive = sum(m.invasive_count for m in metrics)
    print(f"{agent_kind}: {episodes} episodes, {successes} complete, "
          f"{collisions} collisions, {invasive} invasive events")
    print(f"results written to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    runs = []
    for run_dir in args.inputs:
        try:
            runs.append(bench.load_run_dir(run_dir))
        except FileNotFoundError as exc:
            raise ConfigError(str(exc)) from exc
    table = bench.aggregate(runs)
    bench.write_comparison_csv(args.out, table)
    print(f"wrote {len(table.rows)} rows to {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise ConfigError(f"trace file not found: {path}")
    frames = trace_mod.read_trace(path)
    rendering = trace_mod.render_trace(frames)
    if rendering:
        print(rendering)
    if args.svg:
        written = trace_mod.write_episode_svgs(frames, args.svg, tag=path.stem)
        print(f"wrote {len(written)} SVG charts to {args.svg}")
    return EXIT_OK


def cmd_oracle_check() -> int:
    from bida.oracle import run_all

    results = run_all()
    failed = 0
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"[{mark}] {r.name}: {r.detail}")
        failed += 0 if r.passed else 1
    if failed:
        print(f"{failed}/{len(results)} checks failed")
        return EXIT_CHECK_FAILED
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "oracle-check":
            return cmd_oracle_check()
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except trace_mod.TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary maps to exit code 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
