from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike

from src.envs.suite import (
    DOOR_LATCH,
    Array,
    EnvState,
    StepResult,
    end_effector,
    observe,
    reset,
    step,
)
from src.errors import InputShapeError
from src.models.documents import CSV_SCHEMA_VERSION
from src.models.envs import EnvSpec
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)

SCHEMA_LINE = f"# schema_version={CSV_SCHEMA_VERSION}"

IMITATION_REWARD = "imitation_reward"
ENTROPY = "entropy"
EXPERT_LABEL = "expert_label"


class Controller(Protocol):
    def __call__(self, state: EnvState) -> Array: ...


Annotator = Callable[[EnvState, Array, StepResult], Mapping[str, float]]


@dataclass(eq=False)
class EpisodeTrace:
    """One episode, one row per step.

    Row k holds the state reached after step k (t = k + 1), the action that
    produced it, the task reward and the fall flag of that step. `extras`
    carries per-step annotations such as imitation reward, policy entropy or
    the routed expert label.
    """

    env: str
    t: Array
    q: Array
    qdot: Array
    actions: Array
    task_rewards: Array
    fallen: Array
    phase: Array
    extras: dict[str, Array] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.shape[0])

    @property
    def ever_fell(self) -> bool:
        return bool(np.any(self.fallen))

    @property
    def task_return(self) -> float:
        return float(np.sum(self.task_rewards))

    def extra(self, name: str) -> Array:
        return self.extras.get(name, np.zeros(len(self)))

    @classmethod
    def from_rows(
        cls,
        env: str,
        rows: list[tuple[EnvState, Array, StepResult]],
        extras: list[Mapping[str, float]] | None = None,
        dof: int = 0,
        action_dim: int = 0,
    ) -> EpisodeTrace:
        if rows:
            q = np.stack([r.next.q for _, _, r in rows])
            qdot = np.stack([r.next.qdot for _, _, r in rows])
            actions = np.stack([a for _, a, _ in rows])
        else:
            q, qdot, actions = np.zeros((0, dof)), np.zeros((0, dof)), np.zeros((0, action_dim))
        cols: dict[str, Array] = {}
        if extras:
            for name in extras[0]:
                cols[name] = np.array([float(e[name]) for e in extras])
        return cls(
            env=env,
            t=np.array([r.next.t for _, _, r in rows], dtype=np.int64),
            q=q,
            qdot=qdot,
            actions=actions,
            task_rewards=np.array([r.task_reward for _, _, r in rows]),
            fallen=np.array([r.fallen for _, _, r in rows], dtype=bool),
            phase=np.array([r.next.phase for _, _, r in rows]),
            extras=cols,
        )


def run_episode(
    spec: EnvSpec,
    controller: Controller,
    rng: SeededRng,
    *,
    noise: float | None = None,
    pose: ArrayLike | None = None,
    velocity: ArrayLike | None = None,
    max_steps: int | None = None,
    annotate: Annotator | None = None,
) -> EpisodeTrace:
    """Drive `controller` from a reset until done or `max_steps`."""

    state = reset(spec, rng, noise=noise, pose=pose, velocity=velocity)
    limit = spec.episode_len if max_steps is None else min(max_steps, spec.episode_len)
    rows: list[tuple[EnvState, Array, StepResult]] = []
    notes: list[Mapping[str, float]] = []
    for _ in range(limit):
        action = np.asarray(controller(state), dtype=np.float64)
        result = step(spec, state, action)
        rows.append((state, action, result))
        if annotate is not None:
            notes.append(annotate(state, action, result))
        state = result.next
        if result.done:
            break
    trace = EpisodeTrace.from_rows(spec.name, rows, notes, spec.dof, spec.action_dim)
    logger.debug("%s episode: %d steps, task return %.4f", spec.name, len(trace), trace.task_return)
    return trace


def task_error(spec: EnvSpec, q: Array, qdot: Array) -> float:
    """Distance from the success region; success needs it strictly below the threshold."""

    rest = np.asarray(spec.rest_pose)
    goal = np.asarray(spec.goal) if spec.goal else rest
    match spec.success_predicate:
        case "hold":
            return float(np.linalg.norm(q - rest))
        case "speed":
            return float(abs(np.linalg.norm(qdot) - spec.target_speed))
        case "reach":
            return float(np.linalg.norm(end_effector(spec, q) - end_effector(spec, goal)))
        case "dock":
            return float(max(np.linalg.norm(q - goal), np.linalg.norm(qdot)))
        case "carry":
            return float(max(abs(q[0] - goal[0]), abs(q[1])))
        case "door":
            return float(1.0 - q[DOOR_LATCH])
    raise InputShapeError(f"Unknown success predicate {spec.success_predicate!r}")


def success(spec: EnvSpec, trace: EpisodeTrace) -> bool:
    """No fall, the full horizon played out, and the task predicate holds at the end."""

    if len(trace) == 0 or trace.ever_fell or len(trace) < spec.episode_len:
        return False
    return task_error(spec, trace.q[-1], trace.qdot[-1]) < spec.success_threshold


def _columns(dof: int, action_dim: int, extras: list[str]) -> list[str]:
    return [
        "t",
        *(f"q{j}" for j in range(dof)),
        *(f"qdot{j}" for j in range(dof)),
        *(f"a{j}" for j in range(action_dim)),
        "task_reward",
        "fallen",
        "phase",
        *extras,
    ]


def write_trace_csv(trace: EpisodeTrace, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    dof = trace.q.shape[1]
    action_dim = trace.actions.shape[1]
    names = list(trace.extras)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"{SCHEMA_LINE} env={trace.env}\n")
        writer = csv.writer(fh)
        writer.writerow(_columns(dof, action_dim, names))
        for k in range(len(trace)):
            writer.writerow(
                [
                    int(trace.t[k]),
                    *(repr(float(v)) for v in trace.q[k]),
                    *(repr(float(v)) for v in trace.qdot[k]),
                    *(repr(float(v)) for v in trace.actions[k]),
                    repr(float(trace.task_rewards[k])),
                    int(trace.fallen[k]),
                    repr(float(trace.phase[k])),
                    *(repr(float(trace.extras[n][k])) for n in names),
                ]
            )


def read_trace_csv(path: Path) -> EpisodeTrace:
    with path.open(newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith(SCHEMA_LINE):
            raise InputShapeError(f"{path}: missing or unsupported schema line {first!r}")
        env = first.split("env=", 1)[1] if "env=" in first else ""
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]

    dof = sum(1 for h in header if h.startswith("q") and h[1:].isdigit())
    action_dim = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
    base = _columns(dof, action_dim, [])
    if header[: len(base)] != base:
        raise InputShapeError(f"{path}: unexpected header {header!r}")
    data = np.array([[float(v) for v in row] for row in rows]).reshape(len(rows), len(header))
    col = {name: data[:, i] for i, name in enumerate(header)}
    return EpisodeTrace(
        env=env,
        t=col["t"].astype(np.int64),
        q=data[:, 1 : 1 + dof],
        qdot=data[:, 1 + dof : 1 + 2 * dof],
        actions=data[:, 1 + 2 * dof : 1 + 2 * dof + action_dim],
        task_rewards=col["task_reward"],
        fallen=col["fallen"].astype(bool),
        phase=col["phase"],
        extras={name: col[name] for name in header[len(base) :]},
    )


def trace_observations(spec: EnvSpec, trace: EpisodeTrace) -> Array:
    """Observation vector for every row of a trace."""

    return np.stack(
        [
            observe(
                spec,
                EnvState(trace.q[k], trace.qdot[k], int(trace.t[k]), float(trace.phase[k])),
            )
            for k in range(len(trace))
        ]
    )
