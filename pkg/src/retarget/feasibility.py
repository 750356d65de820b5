from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, NonNegativeFloat

from src.envs.episodes import EpisodeTrace, run_episode
from src.envs.references import Array, RefTrajectory
from src.envs.suite import EnvState, limits
from src.errors import InputShapeError
from src.models.documents import RejectionEntry, RejectionReport
from src.models.envs import EnvSpec
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)


class PDGains(BaseModel):
    """Critically damped for unit mass at kp=100, kd=20."""

    kp: NonNegativeFloat = 100.0
    kd: NonNegativeFloat = 20.0


class _Tracker:
    def __init__(self, traj: RefTrajectory, gains: PDGains) -> None:
        self._traj = traj
        self._gains = gains

    def target(self, t: int) -> tuple[Array, Array]:
        k = min(t, self._traj.frame_count - 1)
        return self._traj.q[k], self._traj.qdot[k]

    def __call__(self, state: EnvState) -> Array:
        q_star, v_star = self.target(state.t + 1)
        return self._gains.kp * (q_star - state.q) + self._gains.kd * (v_star - state.qdot)


def pd_track(spec: EnvSpec, traj: RefTrajectory, gains: PDGains | None = None) -> EpisodeTrace:
    """Replay `traj` with a PD tracker from its first frame, noise-free.

    Each step aims at the next reference frame. The rollout lasts one
    reference period (or the episode length, whichever is shorter).
    """

    if traj.dof != spec.dof:
        raise InputShapeError(f"Trajectory has {traj.dof} dof, {spec.name} has {spec.dof}")
    tracker = _Tracker(traj, gains or PDGains())
    return run_episode(
        spec,
        tracker,
        SeededRng(0),
        noise=0.0,
        pose=traj.q[0],
        velocity=traj.qdot[0],
        max_steps=max(traj.frame_count - 1, 1),
    )


def tracking_error(trace: EpisodeTrace, traj: RefTrajectory) -> float:
    if len(trace) == 0:
        return 0.0
    idx = np.minimum(trace.t, traj.frame_count - 1)
    return float(np.mean(np.linalg.norm(trace.q - traj.q[idx], axis=1)))


def feasibility_filter(
    trajs: Sequence[RefTrajectory],
    spec: EnvSpec,
    threshold: float,
    gains: PDGains | None = None,
) -> tuple[list[RefTrajectory], RejectionReport]:
    """Keep the references a PD tracker can follow without falling.

    Rejection reasons: frames outside the joint box (`out_of_limits`), a
    fall during the tracked rollout (`fallen`), or a mean position error
    above `threshold` (`tracking_error`). Kept references keep input order.
    """

    lo, hi = limits(spec.joint_limits)
    kept: list[RefTrajectory] = []
    entries: list[RejectionEntry] = []
    for i, traj in enumerate(trajs):
        if traj.dof != spec.dof:
            raise InputShapeError(f"Trajectory {i} has {traj.dof} dof, {spec.name} has {spec.dof}")
        if np.any(traj.q < lo) or np.any(traj.q > hi):
            entries.append(
                RejectionEntry(index=i, skill=traj.skill, kept=False, reason="out_of_limits")
            )
            logger.info("Rejected %s reference #%d: outside joint limits", traj.skill, i)
            continue

        trace = pd_track(spec, traj, gains)
        err = tracking_error(trace, traj)
        if trace.ever_fell:
            fell_at = int(trace.t[np.argmax(trace.fallen)])
            entries.append(
                RejectionEntry(
                    index=i,
                    skill=traj.skill,
                    kept=False,
                    reason="fallen",
                    mean_error=err,
                    fell_at=fell_at,
                )
            )
            logger.info("Rejected %s reference #%d: fell at step %d", traj.skill, i, fell_at)
        elif err > threshold:
            entries.append(
                RejectionEntry(
                    index=i, skill=traj.skill, kept=False, reason="tracking_error", mean_error=err
                )
            )
            logger.info(
                "Rejected %s reference #%d: mean tracking error %.4f > %.4f",
                traj.skill,
                i,
                err,
                threshold,
            )
        else:
            entries.append(
                RejectionEntry(index=i, skill=traj.skill, kept=True, reason="ok", mean_error=err)
            )
            kept.append(traj)

    report = RejectionReport(env=spec.name, threshold=threshold, entries=entries)
    return kept, report
