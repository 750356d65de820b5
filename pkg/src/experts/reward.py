from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from src.errors import InputShapeError
from src.models.hyper import JointWeightCfg, RewardHyper
from src.numkit.nets import Array

_BISECT_ITERS = 200


@dataclass(frozen=True, eq=False)
class JointWeights:
    """Per-joint tracking weights `u` (sum = dof) and the squared-error EMA behind them."""

    u: Array
    ema_err: Array
    cfg: JointWeightCfg

    @property
    def dof(self) -> int:
        return int(self.u.shape[0])

    @classmethod
    def uniform(cls, dof: int, cfg: JointWeightCfg | None = None) -> JointWeights:
        return cls(u=np.ones(dof), ema_err=np.zeros(dof), cfg=cfg or JointWeightCfg())


def imitation_reward(
    q: ArrayLike,
    qdot: ArrayLike,
    ref_frame: tuple[ArrayLike, ArrayLike],
    jw: JointWeights,
    h: RewardHyper,
) -> float:
    """w * [exp(-alpha |q - q*|_u^2) + lambda * exp(-beta |qdot - qdot*|_u^2)]."""

    qv = np.asarray(q, dtype=np.float64)
    vv = np.asarray(qdot, dtype=np.float64)
    q_ref = np.asarray(ref_frame[0], dtype=np.float64)
    v_ref = np.asarray(ref_frame[1], dtype=np.float64)
    if not (qv.shape == vv.shape == q_ref.shape == v_ref.shape == jw.u.shape):
        raise InputShapeError(
            f"imitation_reward shapes disagree: q{qv.shape} qdot{vv.shape} "
            f"q*{q_ref.shape} qdot*{v_ref.shape} u{jw.u.shape}"
        )
    pos = float(np.sum(jw.u * (qv - q_ref) ** 2))
    vel = float(np.sum(jw.u * (vv - v_ref) ** 2))
    return h.w_scale * (np.exp(-h.alpha_pos * pos) + h.lambda_vel * np.exp(-h.beta_vel * vel))


def _shift_to_sum(ratio: Array, lo: float, hi: float, total: float) -> Array:
    """clip(ratio + t, lo, hi) with the scalar t chosen so the entries sum to `total`."""

    def mass(t: float) -> float:
        return float(np.sum(np.clip(ratio + t, lo, hi)))

    a, b = lo - float(ratio.max()), hi - float(ratio.min())
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (a + b)
        if mass(mid) < total:
            a = mid
        else:
            b = mid
    u = np.clip(ratio + 0.5 * (a + b), lo, hi)
    free = (u > lo) & (u < hi)
    if np.any(free):
        u[free] += (total - u.sum()) / np.count_nonzero(free)
    return u


def update_joint_weights(jw: JointWeights, sq_err: ArrayLike) -> JointWeights:
    """Fold new squared errors into the EMA and re-derive `u`.

    `u` follows the ratio of each joint's EMA to the mean EMA. When the clamp
    to [u_min, u_max] binds, a common offset restores the sum to dof; with no
    clamping active the ratio already sums to dof and is used as is.
    """

    err = np.asarray(sq_err, dtype=np.float64)
    if err.shape != jw.u.shape or np.any(err < 0.0):
        raise InputShapeError(f"sq_err must be {jw.u.shape} and nonnegative")
    d = jw.cfg.ema_decay
    ema = d * jw.ema_err + (1.0 - d) * err
    mean = float(ema.mean())
    if not jw.cfg.enabled or mean <= 0.0:
        return JointWeights(u=np.ones(jw.dof), ema_err=ema, cfg=jw.cfg)
    ratio = ema / mean
    if np.all((ratio >= jw.cfg.u_min) & (ratio <= jw.cfg.u_max)):
        u = ratio
    else:
        u = _shift_to_sum(ratio, jw.cfg.u_min, jw.cfg.u_max, float(jw.dof))
    return JointWeights(u=u, ema_err=ema, cfg=jw.cfg)
