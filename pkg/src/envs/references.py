from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, get_args

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field, PositiveFloat

from src.errors import InputShapeError, UnknownSkillError
from src.models.documents import CSV_SCHEMA_VERSION

Array = NDArray[np.float64]

Skill = Literal["stand", "walk", "run", "sit", "carry", "reach", "crawl"]
SKILLS: tuple[str, ...] = get_args(Skill)

DEFAULT_FREQUENCY = {"walk": 0.5, "run": 1.0}


@dataclass(frozen=True, eq=False)
class RefTrajectory:
    """Phase-indexed reference states (q*, qdot*) sampled every dt seconds."""

    skill: str
    q: Array
    qdot: Array
    period: float
    dt: float

    def __post_init__(self) -> None:
        if self.q.ndim != 2 or self.q.shape != self.qdot.shape or self.q.shape[0] == 0:
            raise InputShapeError(
                f"Reference frames malformed: q{self.q.shape} qdot{self.qdot.shape}"
            )
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise InputShapeError(f"Reference {self.skill!r} has non-finite frames")

    @property
    def frame_count(self) -> int:
        return int(self.q.shape[0])

    @property
    def dof(self) -> int:
        return int(self.q.shape[1])

    def index_at(self, phase: float) -> int:
        return min(int(np.floor(phase * self.frame_count)), self.frame_count - 1)

    def frame_at(self, phase: float) -> tuple[Array, Array]:
        k = self.index_at(phase)
        return self.q[k], self.qdot[k]


def frame_count_for(period: float, dt: float) -> int:
    return max(1, int(round(period / dt)))


def finite_difference_velocities(q: Array, dt: float) -> Array:
    """Forward differences (q[k+1] - q[k]) / dt; the last frame repeats its predecessor."""

    qdot = np.zeros_like(q)
    if q.shape[0] > 1:
        qdot[:-1] = (q[1:] - q[:-1]) / dt
        qdot[-1] = qdot[-2]
    return qdot


def velocity_consistency_error(traj: RefTrajectory) -> float:
    if traj.frame_count < 2:
        return 0.0
    fd = (traj.q[1:] - traj.q[:-1]) / traj.dt
    return float(np.max(np.abs(traj.qdot[:-1] - fd)))


class RefParams(BaseModel):
    amplitude: float | list[float] = 0.3
    frequency: PositiveFloat | None = None
    phase_offsets: list[float] | None = None
    start: list[float] | None = None
    goal: list[float] | None = None
    travel_time: PositiveFloat | None = None
    keyframes: list[list[float]] | None = None
    period: PositiveFloat | None = None
    rest: list[float] | None = None
    keyframe_scale: float = Field(default=0.5)


def _vec(value: list[float] | None, default: Array, dof: int, name: str) -> Array:
    if value is None:
        return default.copy()
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (dof,):
        raise InputShapeError(f"{name} must have {dof} entries")
    return arr


def _min_jerk(tau: Array) -> tuple[Array, Array]:
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    ds = 30 * tau**2 - 60 * tau**3 + 30 * tau**4
    return s, ds


def _sinusoid(t: Array, p: RefParams, skill: str, start: Array, dof: int) -> tuple[Array, Array]:
    freq = p.frequency if p.frequency is not None else DEFAULT_FREQUENCY[skill]
    omega = 2.0 * np.pi * freq
    offsets = (
        np.asarray(p.phase_offsets, dtype=np.float64)
        if p.phase_offsets is not None
        else np.pi / 2.0 * np.arange(dof)
    )
    if offsets.shape != (dof,):
        raise InputShapeError(f"phase_offsets must have {dof} entries")
    amp = np.asarray(p.amplitude, dtype=np.float64)
    if amp.ndim and amp.shape != (dof,):
        raise InputShapeError(f"amplitude must be a scalar or have {dof} entries")
    arg = omega * t[:, None] + offsets[None, :]
    q = start[None, :] + amp * np.sin(arg)
    qdot = amp * omega * np.cos(arg)

    if p.goal is not None:
        goal = _vec(p.goal, start, dof, "goal")
        travel = p.travel_time or float(t[-1] + (t[1] - t[0] if t.size > 1 else 1.0))
        frac = np.minimum(t / travel, 1.0)
        moving = (t < travel).astype(np.float64)
        q = q + frac[:, None] * (goal - start)[None, :]
        qdot = qdot + moving[:, None] * ((goal - start) / travel)[None, :]
    return q, qdot


def _default_keyframes(skill: str, rest: Array, p: RefParams, goal: Array | None) -> list[Array]:
    d = p.keyframe_scale
    if skill == "sit":
        low = goal if goal is not None else rest - d
        return [rest, low, low]
    if skill == "carry":
        end = goal if goal is not None else rest + d * np.eye(rest.size)[0]
        return [rest, 0.5 * (rest + end), end]
    # crawl: alternate the sign of a small excursion joint by joint
    sign = np.where(np.arange(rest.size) % 2 == 0, 1.0, -1.0)
    return [rest, rest + 0.5 * d * sign, rest, rest - 0.5 * d * sign, rest]


def _keyframe_path(t: Array, period: float, frames: list[Array]) -> tuple[Array, Array]:
    """Smoothstep between evenly spaced keyframes; zero velocity at every keyframe."""

    n_seg = len(frames) - 1
    seg_len = period / n_seg
    idx = np.minimum((t // seg_len).astype(int), n_seg - 1)
    tau = np.clip((t - idx * seg_len) / seg_len, 0.0, 1.0)
    a = np.stack([frames[i] for i in idx])
    b = np.stack([frames[i + 1] for i in idx])
    s = 3 * tau**2 - 2 * tau**3
    ds = (6 * tau - 6 * tau**2) / seg_len
    return a + s[:, None] * (b - a), ds[:, None] * (b - a)


def integrate_velocities(q0: Array, qdot: Array, dt: float) -> Array:
    """Positions q[k+1] = q[k] + dt * qdot[k] from `q0`; forward differences give back qdot."""

    q = np.empty_like(qdot)
    q[0] = q0
    q[1:] = q0[None, :] + dt * np.cumsum(qdot[:-1], axis=0)
    return q


def ref_generate(
    skill: str,
    dof: int,
    dt: float,
    params: RefParams | dict[str, object] | None = None,
) -> RefTrajectory:
    """Synthetic reference motion standing in for a retargeted human clip.

    Velocity frames are the analytic derivatives of the skill's curve at
    each frame time. Positions after the first frame are integrated from
    those velocities, so they track the curve to O(dt) and the forward
    difference of consecutive frames reproduces the stored velocity.
    """

    if skill not in SKILLS:
        raise UnknownSkillError(f"Unknown skill {skill!r}; expected one of {', '.join(SKILLS)}")
    p = params if isinstance(params, RefParams) else RefParams.model_validate(params or {})
    period = p.period or 2.0
    n = frame_count_for(period, dt)
    t = np.arange(n) * dt
    rest = _vec(p.rest, np.zeros(dof), dof, "rest")
    start = _vec(p.start, rest, dof, "start")

    if skill == "stand":
        curve = np.tile(rest, (n, 1))
        qdot = np.zeros((n, dof))
    elif skill in ("walk", "run"):
        curve, qdot = _sinusoid(t, p, skill, start, dof)
    elif skill == "reach":
        goal = _vec(p.goal, start + 0.5, dof, "goal")
        move = p.travel_time or period
        tau = np.minimum(t / move, 1.0)
        s, ds = _min_jerk(tau)
        curve = start[None, :] + s[:, None] * (goal - start)[None, :]
        qdot = (ds / move)[:, None] * (goal - start)[None, :]
    else:
        goal = _vec(p.goal, rest, dof, "goal") if p.goal is not None else None
        frames = (
            [_vec(f, rest, dof, "keyframe") for f in p.keyframes]
            if p.keyframes
            else _default_keyframes(skill, start, p, goal)
        )
        if len(frames) < 2:
            raise InputShapeError("keyframe references need at least two keyframes")
        curve, qdot = _keyframe_path(t, period, frames)

    q = integrate_velocities(curve[0], qdot, dt)
    return RefTrajectory(skill=skill, q=q, qdot=qdot, period=period, dt=dt)


def write_reference_csv(traj: RefTrajectory, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(
            f"# schema_version={CSV_SCHEMA_VERSION} skill={traj.skill} "
            f"period={traj.period!r} dt={traj.dt!r}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(
            ["t", *(f"q{j}" for j in range(traj.dof)), *(f"qdot{j}" for j in range(traj.dof))]
        )
        for k in range(traj.frame_count):
            writer.writerow(
                [k, *(repr(float(v)) for v in traj.q[k]), *(repr(float(v)) for v in traj.qdot[k])]
            )


def read_reference_csv(path: Path) -> RefTrajectory:
    with path.open(newline="", encoding="utf-8") as fh:
        meta_line = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in meta_line if "=" in item)
        if int(meta.get("schema_version", -1)) != CSV_SCHEMA_VERSION:
            raise InputShapeError(f"{path}: unsupported schema {meta.get('schema_version')!r}")
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
    dof = (len(header) - 1) // 2
    data = data.reshape(-1, len(header))
    return RefTrajectory(
        skill=meta["skill"],
        q=data[:, 1 : 1 + dof],
        qdot=data[:, 1 + dof :],
        period=float(meta["period"]),
        dt=float(meta["dt"]),
    )
