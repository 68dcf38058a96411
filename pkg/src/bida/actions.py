"""Scenario kinds and the per-scenario meta-action enumerations."""

from __future__ import annotations

import enum


class ScenarioKind(str, enum.Enum):
    HIGHWAY = "highway"
    T_INTERSECTION = "t_intersection"


class HighwayAction(enum.IntEnum):
    MAINTAIN = 0
    ACCELERATE = 1
    DECELERATE = 2
    CHANGE_LEFT = 3
    CHANGE_RIGHT = 4


class TIntersectionAction(enum.IntEnum):
    STOP = 0
    CREEP = 1
    PROCEED = 2
    PROCEED_FAST = 3


HIGHWAY_ACTION_NAMES = ("maintain", "accelerate", "decelerate", "change_left", "change_right")
T_ACTION_NAMES = ("stop", "creep", "proceed", "proceed_fast")


def action_set(kind: ScenarioKind) -> list[int]:
    """Contiguous action ids for a scenario, starting at 0."""
    if kind == ScenarioKind.HIGHWAY:
        return [int(a) for a in HighwayAction]
    return [int(a) for a in TIntersectionAction]


def action_names(kind: ScenarioKind) -> tuple[str, ...]:
    return HIGHWAY_ACTION_NAMES if kind == ScenarioKind.HIGHWAY else T_ACTION_NAMES


def action_name(kind: ScenarioKind, action: int) -> str:
    return action_names(kind)[action]
