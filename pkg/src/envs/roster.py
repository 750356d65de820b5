from __future__ import annotations

import logging
import math
from pathlib import Path

from pydantic import BaseModel, ValidationError

from src.envs.references import RefParams, RefTrajectory, ref_generate
from src.errors import ConfigError, UnknownSkillError
from src.models.envs import EnvSpec

logger = logging.getLogger(__name__)

CIRCLE_RADIUS = 0.3
WALK_HZ = 0.5
RUN_HZ = 1.0

_PM_LIMITS = [(-2.0, 2.0), (-2.0, 2.0)]
_PM_FORCE = [(-15.0, 15.0), (-15.0, 15.0)]


def _point_mass(name: str, predicate: str, **extra: object) -> EnvSpec:
    return EnvSpec.model_validate(
        {
            "name": name,
            "kind": "point-mass",
            "dof": 2,
            "action_dim": 2,
            "joint_limits": _PM_LIMITS,
            "action_limits": _PM_FORCE,
            "success_predicate": predicate,
            "rest_pose": [0.0, 0.0],
            **extra,
        }
    )


ROSTER: dict[str, EnvSpec] = {
    spec.name: spec
    for spec in (
        _point_mass("point-mass-stand", "hold"),
        _point_mass(
            "point-mass-walk",
            "speed",
            target_speed=CIRCLE_RADIUS * 2.0 * math.pi * WALK_HZ,
            period=1.0 / WALK_HZ,
            success_threshold=0.2,
        ),
        _point_mass(
            "point-mass-run",
            "speed",
            target_speed=CIRCLE_RADIUS * 2.0 * math.pi * RUN_HZ,
            period=1.0 / RUN_HZ,
            success_threshold=0.3,
        ),
        EnvSpec(
            name="two-link-arm",
            kind="two-link-arm",
            dof=2,
            action_dim=2,
            joint_limits=[(-math.pi, math.pi), (-2.5, 2.5)],
            action_limits=[(-15.0, 15.0), (-15.0, 15.0)],
            success_predicate="reach",
            rest_pose=[0.0, 0.5],
            goal=[0.8, 1.0],
            period=5.0,
            episode_len=250,
        ),
        EnvSpec(
            name="cart-carry",
            kind="cart-carry",
            dof=2,
            action_dim=2,
            joint_limits=[(-3.0, 3.0), (-0.6, 0.6)],
            action_limits=[(-10.0, 10.0), (-5.0, 5.0)],
            success_predicate="carry",
            success_threshold=0.15,
            rest_pose=[0.0, 0.0],
            goal=[2.0, 0.0],
            period=6.0,
            episode_len=300,
        ),
        EnvSpec(
            name="seat-dock",
            kind="seat-dock",
            dof=2,
            action_dim=2,
            joint_limits=[(-1.5, 1.5), (-1.5, 1.5)],
            action_limits=[(-10.0, 10.0), (-10.0, 10.0)],
            success_predicate="dock",
            rest_pose=[0.0, 0.0],
            goal=[0.0, -0.8],
            period=5.0,
            episode_len=250,
        ),
        EnvSpec(
            name="composite-door",
            kind="composite-door",
            dof=3,
            action_dim=3,
            joint_limits=[(-1.0, 3.0), (-1.5, 1.5), (0.0, 1.0)],
            action_limits=[(-15.0, 15.0), (-15.0, 15.0), (-15.0, 15.0)],
            success_predicate="door",
            rest_pose=[0.0, 0.0, 0.0],
            handle=[2.0, 0.0],
            period=10.0,
        ),
    )
}


class CompositeTask(BaseModel):
    """A multi-stage task: the experts it composes and its default stage schedule."""

    env: str
    skills: list[str]
    schedule: str


COMPOSITE_TASKS: dict[str, CompositeTask] = {
    "door": CompositeTask(
        env="composite-door",
        skills=["stand", "walk", "reach"],
        schedule="0.17(S) -> 0.74(W) -> 2.0(R)",
    ),
}

# Reference parameters per (env, skill); anything missing falls back to
# RefParams defaults with the env's period and rest pose.
_REFERENCE_PARAMS: dict[tuple[str, str], dict[str, object]] = {
    ("point-mass-walk", "walk"): {"amplitude": CIRCLE_RADIUS, "frequency": WALK_HZ},
    ("point-mass-run", "run"): {"amplitude": CIRCLE_RADIUS, "frequency": RUN_HZ},
    ("two-link-arm", "reach"): {"goal": [0.8, 1.0], "travel_time": 1.0},
    ("cart-carry", "carry"): {"goal": [2.0, 0.0]},
    ("seat-dock", "sit"): {"goal": [0.0, -0.8]},
    ("composite-door", "walk"): {
        "amplitude": [0.05, 0.05, 0.0],
        "frequency": WALK_HZ,
        "goal": [2.0, 0.0, 0.0],
        "travel_time": 3.0,
    },
    ("composite-door", "reach"): {
        "start": [2.0, 0.0, 0.0],
        "goal": [2.0, 0.0, 1.0],
        "travel_time": 2.0,
    },
}

DEFAULT_SKILL = {
    "point-mass-stand": "stand",
    "point-mass-walk": "walk",
    "point-mass-run": "run",
    "two-link-arm": "reach",
    "cart-carry": "carry",
    "seat-dock": "sit",
}


def get_spec(name: str) -> EnvSpec:
    try:
        return ROSTER[name]
    except KeyError:
        raise ConfigError(f"Unknown environment {name!r}; known: {', '.join(ROSTER)}") from None


def load_spec(path: Path) -> EnvSpec:
    try:
        return EnvSpec.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(f"Invalid environment spec {path}: {exc}") from exc


def resolve_spec(name_or_path: str) -> EnvSpec:
    if name_or_path in ROSTER:
        return ROSTER[name_or_path]
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return load_spec(path)
    return get_spec(name_or_path)


def get_task(name: str) -> CompositeTask:
    try:
        return COMPOSITE_TASKS[name]
    except KeyError:
        raise ConfigError(f"Unknown composite task {name!r}") from None


def reference_params(spec: EnvSpec, skill: str) -> RefParams:
    raw = dict(_REFERENCE_PARAMS.get((spec.name, skill), {}))
    raw.setdefault("period", spec.period)
    raw.setdefault("rest", list(spec.rest_pose))
    return RefParams.model_validate(raw)


def reference_for(
    spec: EnvSpec, skill: str, overrides: dict[str, object] | None = None
) -> RefTrajectory:
    params = reference_params(spec, skill)
    if overrides:
        params = params.model_copy(update=overrides)
    try:
        return ref_generate(skill, spec.dof, spec.dt, params)
    except UnknownSkillError:
        logger.error("No reference generator for skill %r on %s", skill, spec.name)
        raise
