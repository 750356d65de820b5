from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from src.envs.references import Array, RefTrajectory, finite_difference_velocities
from src.errors import InputShapeError
from src.models.envs import EnvSpec
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)

DEFAULT_GAMMA_V = 0.1

InitMode = Literal["projection", "previous", "zeros"]


@dataclass(frozen=True, eq=False)
class SkeletonMap:
    """Linear correspondence from a source skeleton onto the target's joint space.

    `correspondence` is (dst_dof, src_dof); `weights` is the diagonal of W.
    """

    correspondence: Array
    weights: Array
    dst_limits: Array
    gamma_v: float = DEFAULT_GAMMA_V

    def __post_init__(self) -> None:
        c = self.correspondence
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise InputShapeError("correspondence must be a finite matrix")
        if self.weights.shape != (c.shape[0],) or np.any(self.weights <= 0.0):
            raise InputShapeError("weights must be positive with one entry per target dof")
        lim = self.dst_limits
        if lim.shape != (c.shape[0], 2) or np.any(lim[:, 0] > lim[:, 1]):
            raise InputShapeError("dst_limits must be (dst_dof, 2) with lo <= hi")
        if self.gamma_v < 0.0:
            raise InputShapeError("gamma_v must be nonnegative")

    @property
    def dst_dof(self) -> int:
        return int(self.correspondence.shape[0])

    @property
    def src_dof(self) -> int:
        return int(self.correspondence.shape[1])

    @classmethod
    def identity(
        cls, dof: int, limits: ArrayLike | None = None, gamma_v: float = DEFAULT_GAMMA_V
    ) -> SkeletonMap:
        lim = np.tile([-np.inf, np.inf], (dof, 1)) if limits is None else np.asarray(limits, float)
        return cls(np.eye(dof), np.ones(dof), lim, gamma_v)

    @classmethod
    def onto(
        cls, spec: EnvSpec, correspondence: ArrayLike, weights: ArrayLike | None = None
    ) -> SkeletonMap:
        c = np.asarray(correspondence, dtype=np.float64)
        w = np.ones(spec.dof) if weights is None else np.asarray(weights, dtype=np.float64)
        return cls(c, w, np.asarray(spec.joint_limits, dtype=np.float64))

    def map_frames(self, q_src: Array) -> Array:
        return q_src @ self.correspondence.T


def _check(vecs: list[Array], dof: int) -> None:
    for v in vecs:
        if v.shape != (dof,):
            raise InputShapeError(f"Expected vectors of length {dof}, got {v.shape}")


def alignment_cost(
    q: ArrayLike, qdot: ArrayLike, q_ref: ArrayLike, qdot_ref: ArrayLike, m: SkeletonMap
) -> float:
    """||q - q_ref||_W^2 + gamma_v ||qdot - qdot_ref||_W^2."""

    vs = [np.asarray(v, dtype=np.float64) for v in (q, qdot, q_ref, qdot_ref)]
    _check(vs, m.dst_dof)
    dq = vs[0] - vs[2]
    dv = vs[1] - vs[3]
    return float(np.sum(m.weights * dq * dq) + m.gamma_v * np.sum(m.weights * dv * dv))


@dataclass(frozen=True, eq=False)
class RetargetResult:
    trajectory: RefTrajectory
    residual: Array
    iterations: Array
    # Per-frame cost after every iteration; filled only on request.
    cost_history: list[list[float]] = field(default_factory=list)


def retarget_ik(
    src: RefTrajectory,
    m: SkeletonMap,
    max_iters: int = 200,
    lr: float = 0.1,
    *,
    tol: float = 1e-10,
    init: InitMode = "projection",
    record_costs: bool = False,
) -> RetargetResult:
    """Per-frame projected gradient descent on the alignment cost.

    Each frame's targets are the source frame pushed through the
    correspondence. Positions are clamped into `dst_limits` after every
    step. The output velocities are forward differences of the optimised
    positions, so the result satisfies the finite-difference consistency
    check exactly.

    With a diagonal W and box limits each frame problem is separable, so
    the clamped target is already its minimiser: `init="projection"` starts
    there and the loop stops after one step with no decrease. `"previous"`
    (warm start from the last frame) and `"zeros"` (cold start) run the
    descent proper and converge on the same point.
    """

    if src.dof != m.src_dof:
        raise InputShapeError(f"Source has {src.dof} coordinates, map expects {m.src_dof}")

    lo, hi = m.dst_limits[:, 0], m.dst_limits[:, 1]
    q_targets = m.map_frames(src.q)
    v_targets = m.map_frames(src.qdot)
    n = src.frame_count
    out_q = np.zeros((n, m.dst_dof))
    residual = np.zeros(n)
    iterations = np.zeros(n, dtype=np.int64)
    history: list[list[float]] = []

    prev_q = np.clip(q_targets[0], lo, hi)
    for k in range(n):
        q_ref, v_ref = q_targets[k], v_targets[k]
        if init == "projection":
            q = np.clip(q_ref, lo, hi)
        elif init == "previous":
            q = prev_q.copy()
        else:
            q = np.clip(np.zeros(m.dst_dof), lo, hi)
        v = v_ref.copy() if init == "projection" else np.zeros(m.dst_dof)

        cost = alignment_cost(q, v, q_ref, v_ref, m)
        costs = [cost]
        it = 0
        while it < max_iters:
            q = np.clip(q - lr * 2.0 * m.weights * (q - q_ref), lo, hi)
            v = v - lr * 2.0 * m.gamma_v * m.weights * (v - v_ref)
            it += 1
            new_cost = alignment_cost(q, v, q_ref, v_ref, m)
            costs.append(new_cost)
            decrease = cost - new_cost
            cost = new_cost
            if decrease < tol:
                break

        out_q[k] = q
        residual[k] = cost
        iterations[k] = it
        prev_q = q
        if record_costs:
            history.append(costs)

    qdot = finite_difference_velocities(out_q, src.dt)
    traj = RefTrajectory(skill=src.skill, q=out_q, qdot=qdot, period=src.period, dt=src.dt)
    logger.debug(
        "retargeted %s: %d frames, max residual %.3e, mean iterations %.1f",
        src.skill,
        n,
        float(residual.max(initial=0.0)),
        float(iterations.mean()) if n else 0.0,
    )
    return RetargetResult(
        trajectory=traj, residual=residual, iterations=iterations, cost_history=history
    )


@dataclass(frozen=True, eq=False)
class SyntheticSkeleton:
    """A richer source skeleton whose motion projects onto a target body.

    `lift` embeds target coordinates into the source space and `nullspace`
    adds source-only motion the correspondence discards, standing in for
    the extra joints of a human body model.
    """

    map: SkeletonMap
    lift: Array
    nullspace: Array

    @classmethod
    def build(cls, spec: EnvSpec, extra_dof: int, rng: SeededRng) -> SyntheticSkeleton:
        dst, src = spec.dof, spec.dof + extra_dof
        mix = rng.normal(size=(dst, src))
        mix[:, :dst] += 2.0 * np.eye(dst)
        lift = np.linalg.pinv(mix)
        nullspace = np.eye(src) - lift @ mix
        return cls(map=SkeletonMap.onto(spec, mix), lift=lift, nullspace=nullspace)

    def source_motion(
        self, ref: RefTrajectory, rng: SeededRng, wobble: float = 0.2
    ) -> RefTrajectory:
        """Lift `ref` into source coordinates plus a smooth motion the map cannot see."""

        src_dof = self.map.src_dof
        t = np.arange(ref.frame_count) * ref.dt
        freq = rng.uniform(0.2, 1.0, size=src_dof)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=src_dof)
        omega = 2.0 * np.pi * freq
        extra_q = wobble * np.sin(omega[None, :] * t[:, None] + phase[None, :])
        q = ref.q @ self.lift.T + extra_q @ self.nullspace.T
        qdot = finite_difference_velocities(q, ref.dt)
        return RefTrajectory(skill=ref.skill, q=q, qdot=qdot, period=ref.period, dt=ref.dt)
