"""Experiment configuration: one JSON document wiring scenario, reward,
search, and training settings to an agent kind and episode budget."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from bida.actions import ScenarioKind
from bida.mdp import RewardConfig
from bida.search import SearchConfig
from bida.training import Algorithm, TrainConfig
from bida.world import ConfigError, ScenarioConfig, highway_config, t_intersection_config

AGENT_CHOICES = ("bida", "mcts", "policy", "rule")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    reward: RewardConfig = RewardConfig()
    search: SearchConfig = SearchConfig()
    train: TrainConfig = TrainConfig()
    agent: str = "bida"
    episodes: int = 50
    base_seed: int = 0
    policy_checkpoint: str | None = None
    value_checkpoint: str | None = None

    def __post_init__(self) -> None:
        if self.agent not in AGENT_CHOICES:
            raise ConfigError(f"agent must be one of {AGENT_CHOICES}, got {self.agent!r}")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")


def highway_lite() -> ScenarioConfig:
    """Three lanes, five surrounding vehicles: the training-scale highway."""
    return highway_config(lane_count=3, sv_count=5)


def t_lite() -> ScenarioConfig:
    """Four surrounding vehicles plus the default crossing walkers."""
    return t_intersection_config(sv_count=4)


def default_experiment(kind: ScenarioKind | str = ScenarioKind.HIGHWAY) -> ExperimentConfig:
    kind = ScenarioKind(kind)
    scenario = highway_lite() if kind == ScenarioKind.HIGHWAY else t_lite()
    return ExperimentConfig(scenario=scenario)


def _scenario_to_dict(sc: ScenarioConfig) -> dict:
    d = dataclasses.asdict(sc)
    d["scenario_kind"] = sc.scenario_kind.value
    d["sv_speed_range"] = list(sc.sv_speed_range)
    return d


def _scenario_from_dict(d: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig(
            scenario_kind=ScenarioKind(d["scenario_kind"]),
            lane_count=int(d["lane_count"]),
            lane_width=float(d["lane_width"]),
            sv_count=int(d["sv_count"]),
            speed_limit=float(d["speed_limit"]),
            sv_speed_range=tuple(float(v) for v in d["sv_speed_range"]),
            sim_frequency=float(d.get("sim_frequency", 20.0)),
            walker_count=int(d.get("walker_count", 0)),
            rng_seed=int(d.get("rng_seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario section: {exc}") from exc


def _simple_to_dict(obj) -> dict:
    d = dataclasses.asdict(obj)
    for key, val in d.items():
        if isinstance(val, tuple):
            d[key] = list(val)
        elif isinstance(val, Algorithm):
            d[key] = val.value
    return d


def _simple_from_dict(cls, d: dict, tuple_fields: tuple[str, ...] = ()):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(d)
    for name in tuple_fields:
        if name in kwargs and kwargs[name] is not None:
            kwargs[name] = tuple(kwargs[name])
    if cls is TrainConfig and "algorithm" in kwargs:
        kwargs["algorithm"] = Algorithm(kwargs["algorithm"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__} section: {exc}") from exc


def to_json_dict(cfg: ExperimentConfig) -> dict:
    return {
        "scenario": _scenario_to_dict(cfg.scenario),
        "reward": _simple_to_dict(cfg.reward),
        "search": _simple_to_dict(cfg.search),
        "train": _simple_to_dict(cfg.train),
        "agent": cfg.agent,
        "episodes": cfg.episodes,
        "base_seed": cfg.base_seed,
        "policy_checkpoint": cfg.policy_checkpoint,
        "value_checkpoint": cfg.value_checkpoint,
    }


def from_json_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict) or "scenario" not in d:
        raise ConfigError("config must be a JSON object with a 'scenario' section")
    return ExperimentConfig(
        scenario=_scenario_from_dict(d["scenario"]),
        reward=_simple_from_dict(RewardConfig, d.get("reward", {})),
        search=_simple_from_dict(SearchConfig, d.get("search", {}),
                                 tuple_fields=("value_clip",)),
        train=_simple_from_dict(TrainConfig, d.get("train", {}),
                                tuple_fields=("seeds", "hidden")),
        agent=d.get("agent", "bida"),
        episodes=int(d.get("episodes", 50)),
        base_seed=int(d.get("base_seed", 0)),
        policy_checkpoint=d.get("policy_checkpoint"),
        value_checkpoint=d.get("value_checkpoint"),
    )


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json_dict(cfg), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_json_dict(data)
