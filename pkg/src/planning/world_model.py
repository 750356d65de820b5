from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike

from src.errors import InputShapeError, TrainingDivergedError
from src.models.hyper import LossWeights
from src.numkit.nets import Array, DenseNet, NetGrads, backward, forward, zero_grads
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)


@runtime_checkable
class LatentHead(Protocol):
    """Anything mapping a (batch, in) array to (batch, out); DenseNet qualifies."""

    def __call__(self, x: ArrayLike) -> Array: ...


@dataclass(frozen=True, eq=False)
class ImitationBatch:
    """Transitions stored as observations; latents come from the current encoder."""

    obs: Array
    actions: Array
    rewards: Array
    next_obs: Array
    dones: Array

    def __post_init__(self) -> None:
        n = self.obs.shape[0]
        if n == 0:
            raise InputShapeError("ImitationBatch must not be empty")
        shapes_ok = (
            self.actions.shape[0] == n
            and self.rewards.shape == (n,)
            and self.next_obs.shape == self.obs.shape
            and self.dones.shape == (n,)
        )
        if not shapes_ok:
            raise InputShapeError("ImitationBatch fields disagree on batch size")
        for name in ("obs", "actions", "rewards", "next_obs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputShapeError(f"ImitationBatch.{name} has non-finite entries")

    def __len__(self) -> int:
        return int(self.obs.shape[0])


@dataclass(frozen=True, eq=False)
class WorldModel:
    encoder: DenseNet
    dynamics: LatentHead
    reward_head: LatentHead
    value_heads: tuple[LatentHead, ...]
    # (action_dim, 2) box the planners sample in
    action_limits: Array

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim

    @property
    def action_dim(self) -> int:
        return int(self.action_limits.shape[0])

    @classmethod
    def init(
        cls,
        obs_dim: int,
        action_limits: ArrayLike,
        latent_dim: int,
        hidden: list[int],
        value_heads: tuple[DenseNet, ...],
        rng: SeededRng,
    ) -> WorldModel:
        limits = np.asarray(action_limits, dtype=np.float64)
        a_dim = limits.shape[0]
        return cls(
            encoder=DenseNet.init([obs_dim, *hidden, latent_dim], rng.spawn("encoder")),
            dynamics=DenseNet.init(
                [latent_dim + a_dim, *hidden, latent_dim], rng.spawn("dynamics")
            ),
            reward_head=DenseNet.init(
                [latent_dim + a_dim, *hidden, 1], rng.spawn("reward"), zero_last=True
            ),
            value_heads=value_heads,
            action_limits=limits,
        )

    def with_heads(self, **heads: object) -> WorldModel:
        return replace(self, **heads)


def encode(m: WorldModel, obs: ArrayLike) -> Array:
    return forward(m.encoder, obs)


def joint_input(z: Array, a: Array) -> Array:
    return np.concatenate([z, a], axis=-1)


def min_value(heads: tuple[LatentHead, ...], x: Array) -> Array:
    """Elementwise min over the value ensemble, shape (batch,)."""

    qs = np.stack([np.asarray(h(x))[..., 0] for h in heads], axis=0)
    return np.min(qs, axis=0)


@dataclass(frozen=True, eq=False)
class ModelLosses:
    dynamics: float
    reward: float
    value: float
    total: float
    encoder_grads: NetGrads
    dynamics_grads: NetGrads
    reward_grads: NetGrads
    value_grads: tuple[NetGrads, ...] = field(default_factory=tuple)


def _dense(head: LatentHead, name: str) -> DenseNet:
    if not isinstance(head, DenseNet):
        raise InputShapeError(f"{name} must be a DenseNet to compute gradients")
    return head


def model_losses(
    m: WorldModel,
    batch: ImitationBatch,
    weights: LossWeights | None = None,
    value_targets: ArrayLike | None = None,
) -> ModelLosses:
    """Latent consistency, reward and value regression losses with their gradients.

    The next-step encoding is a fixed target (no gradient flows into it).
    Value terms need `value_targets` (TD targets, one per row); without them
    the value loss is 0. Losses are batch means; the value loss also averages
    over ensemble members. Heads whose weight is 0 get zero gradients.
    """

    w = weights or LossWeights()
    enc = m.encoder
    dyn = _dense(m.dynamics, "dynamics")
    rew = _dense(m.reward_head, "reward_head")
    n = len(batch)
    L = m.latent_dim

    z = forward(enc, batch.obs)
    z_target = forward(enc, batch.next_obs)
    x = joint_input(z, batch.actions)

    z_pred = forward(dyn, x)
    dz = z_pred - z_target
    dyn_loss = float(np.mean(np.sum(dz * dz, axis=1)))
    g_dyn = backward(dyn, x, (2.0 / n) * dz).scaled(w.dynamics)

    r_pred = forward(rew, x)[:, 0]
    dr = r_pred - batch.rewards
    rew_loss = float(np.mean(dr * dr))
    g_rew = backward(rew, x, ((2.0 / n) * dr)[:, None]).scaled(w.reward)

    val_loss = 0.0
    value_grads: list[NetGrads] = []
    dx = g_dyn.inputs + g_rew.inputs
    if value_targets is not None and m.value_heads:
        y = np.asarray(value_targets, dtype=np.float64)
        k = len(m.value_heads)
        for i, head in enumerate(m.value_heads):
            net = _dense(head, f"value_heads[{i}]")
            dq = forward(net, x)[:, 0] - y
            val_loss += float(np.mean(dq * dq)) / k
            g = backward(net, x, ((2.0 / (n * k)) * dq)[:, None]).scaled(w.value)
            value_grads.append(g)
            dx = dx + g.inputs
    else:
        value_grads = [zero_grads(_dense(h, "value head")) for h in m.value_heads]

    g_enc = backward(enc, batch.obs, dx[:, :L])
    total = w.dynamics * dyn_loss + w.reward * rew_loss + w.value * val_loss
    if not np.isfinite(total):
        raise TrainingDivergedError(
            f"World-model loss is not finite (dynamics={dyn_loss}, "
            f"reward={rew_loss}, value={val_loss})"
        )
    return ModelLosses(
        dynamics=dyn_loss,
        reward=rew_loss,
        value=val_loss,
        total=total,
        encoder_grads=g_enc,
        dynamics_grads=g_dyn,
        reward_grads=g_rew,
        value_grads=tuple(value_grads),
    )
