from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import InputShapeError, InvalidActionError
from src.models.envs import EnvSpec
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

DOOR_LATCH = 2


@dataclass(frozen=True, eq=False)
class EnvState:
    q: Array
    qdot: Array
    t: int
    phase: float


@dataclass(frozen=True, eq=False)
class StepResult:
    next: EnvState
    task_reward: float
    done: bool
    fallen: bool


def limits(pairs: list[tuple[float, float]]) -> tuple[Array, Array]:
    arr = np.asarray(pairs, dtype=np.float64)
    return arr[:, 0], arr[:, 1]


def phase_of(spec: EnvSpec, t: int) -> float:
    return float((t * spec.dt / spec.period) % 1.0)


def obs_dim(spec: EnvSpec) -> int:
    return 2 * spec.dof + 2


def observe(spec: EnvSpec, s: EnvState) -> Array:
    """q, qdot and the phase clock as (sin, cos) so it has no seam at 1 -> 0."""

    angle = 2.0 * np.pi * s.phase
    return np.concatenate([s.q, s.qdot, [np.sin(angle), np.cos(angle)]])


def reset(
    spec: EnvSpec,
    rng: SeededRng,
    noise: float | None = None,
    pose: ArrayLike | None = None,
    velocity: ArrayLike | None = None,
) -> EnvState:
    """Start state at the rest pose (or `pose`), perturbed by uniform noise.

    Positions are clipped into the joint limits after perturbation.
    """

    mag = spec.reset_noise if noise is None else float(noise)
    lo, hi = limits(spec.joint_limits)
    base_q = np.asarray(spec.rest_pose if pose is None else pose, dtype=np.float64)
    base_qdot = np.zeros(spec.dof) if velocity is None else np.asarray(velocity, dtype=np.float64)
    if base_q.shape != (spec.dof,) or base_qdot.shape != (spec.dof,):
        raise InputShapeError(f"{spec.name}: reset pose must have {spec.dof} entries")
    if mag > 0.0:
        q = np.clip(base_q + rng.uniform(-mag, mag, size=spec.dof), lo, hi)
        qdot = base_qdot + rng.uniform(-mag, mag, size=spec.dof)
    else:
        q = np.clip(base_q, lo, hi)
        qdot = base_qdot.copy()
    return EnvState(q=q, qdot=qdot, t=0, phase=0.0)


def end_effector(spec: EnvSpec, q: Array) -> Array:
    l1, l2 = spec.link_lengths
    return np.array(
        [
            l1 * np.cos(q[0]) + l2 * np.cos(q[0] + q[1]),
            l1 * np.sin(q[0]) + l2 * np.sin(q[0] + q[1]),
        ]
    )


def near_handle(spec: EnvSpec, q: Array) -> bool:
    return bool(np.linalg.norm(q[:2] - np.asarray(spec.handle)) < spec.handle_radius)


def _accel(spec: EnvSpec, q: Array, qdot: Array, a: Array) -> Array:
    acc = a / spec.mass - spec.damping * qdot
    if spec.gravity:
        acc = acc + np.asarray(spec.gravity, dtype=np.float64)
    if spec.kind == "cart-carry":
        # load tilt: spring back to upright, pushed by cart acceleration
        acc[1] = acc[1] - spec.stiffness * q[1] - spec.coupling * acc[0]
    elif spec.kind == "composite-door" and not near_handle(spec, q):
        acc[DOOR_LATCH] = -spec.damping * qdot[DOOR_LATCH]
    return acc


def is_fallen(spec: EnvSpec, q: Array) -> bool:
    """Leaving the joint box counts as a fall; the door latch has hard stops instead."""

    lo, hi = limits(spec.joint_limits)
    outside = (q < lo) | (q > hi)
    if spec.kind == "composite-door":
        outside[DOOR_LATCH] = False
    return bool(np.any(outside))


def task_reward(spec: EnvSpec, q: Array, qdot: Array) -> float:
    rest = np.asarray(spec.rest_pose)
    goal = np.asarray(spec.goal) if spec.goal else rest
    match spec.success_predicate:
        case "hold":
            return float(np.exp(-np.sum((q - rest) ** 2)))
        case "speed":
            return float(np.exp(-((np.linalg.norm(qdot) - spec.target_speed) ** 2)))
        case "reach":
            dist = np.linalg.norm(end_effector(spec, q) - end_effector(spec, goal))
            return float(np.exp(-4.0 * dist**2))
        case "dock":
            return float(np.exp(-np.sum((q - goal) ** 2) - 0.1 * np.sum(qdot**2)))
        case "carry":
            return float(np.exp(-((q[0] - goal[0]) ** 2) - 4.0 * q[1] ** 2))
        case "door":
            dist = np.linalg.norm(q[:2] - np.asarray(spec.handle))
            return float(0.5 * np.exp(-(dist**2)) + q[DOOR_LATCH])
    raise InputShapeError(f"Unknown success predicate {spec.success_predicate!r}")


def clip_action(spec: EnvSpec, a: ArrayLike) -> Array:
    arr = np.asarray(a, dtype=np.float64)
    if arr.shape != (spec.action_dim,):
        raise InputShapeError(f"{spec.name}: expected action of length {spec.action_dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidActionError(f"{spec.name}: non-finite action {arr!r}")
    lo, hi = limits(spec.action_limits)
    return np.clip(arr, lo, hi)


def step(spec: EnvSpec, s: EnvState, a: ArrayLike) -> StepResult:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""

    act = clip_action(spec, a)
    qdot = s.qdot + spec.dt * _accel(spec, s.q, s.qdot, act)
    q = s.q + spec.dt * qdot
    if spec.kind == "composite-door":
        latch = q[DOOR_LATCH]
        if latch < 0.0 or latch > 1.0:
            q[DOOR_LATCH] = min(max(latch, 0.0), 1.0)
            qdot[DOOR_LATCH] = 0.0

    t = s.t + 1
    nxt = EnvState(q=q, qdot=qdot, t=t, phase=phase_of(spec, t))
    fallen = is_fallen(spec, q)
    done = fallen or t >= spec.episode_len
    return StepResult(next=nxt, task_reward=task_reward(spec, q, qdot), done=done, fallen=fallen)
