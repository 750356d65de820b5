from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike

from src.envs.episodes import ENTROPY, IMITATION_REWARD, EpisodeTrace
from src.errors import InputShapeError, TrainingDivergedError
from src.experts.reward import JointWeights
from src.models.hyper import ExpertConfig, RewardHyper
from src.numkit.distributions import HALF_LOG_2PI_E, DiagGaussian
from src.numkit.nets import Array, DenseNet, NetGrads, backward, forward
from src.numkit.optim import Adam, polyak, sgd_step
from src.numkit.rng import SeededRng
from src.planning.world_model import ImitationBatch, WorldModel, encode, joint_input

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PolicyHead:
    """Latent -> diagonal Gaussian over actions.

    The net emits [u, v]; mean = centre + half_width * tanh(u) and
    log_std = lo + (hi - lo) * (tanh(v) + 1) / 2. Samples are not squashed.
    """

    net: DenseNet
    low: Array
    high: Array
    log_std_min: float = -4.0
    log_std_max: float = 0.5

    @property
    def action_dim(self) -> int:
        return int(self.low.shape[0])

    @property
    def centre(self) -> Array:
        return 0.5 * (self.high + self.low)

    @property
    def half_width(self) -> Array:
        return 0.5 * (self.high - self.low)

    def _split(self, z: ArrayLike) -> tuple[Array, Array]:
        out = forward(self.net, z)
        return out[..., : self.action_dim], out[..., self.action_dim :]

    def dist(self, z: ArrayLike) -> DiagGaussian:
        u, v = self._split(z)
        span = self.log_std_max - self.log_std_min
        log_std = self.log_std_min + 0.5 * span * (np.tanh(v) + 1.0)
        return DiagGaussian(mean=self.centre + self.half_width * np.tanh(u), std=np.exp(log_std))

    def mean(self, z: ArrayLike) -> Array:
        u, _ = self._split(z)
        return self.centre + self.half_width * np.tanh(u)


@dataclass(frozen=True, eq=False)
class ExpertPolicy:
    """One skill expert: Gaussian policy, world model with the value ensemble, delayed targets."""

    skill: str
    env: str
    policy: PolicyHead
    model: WorldModel
    target_ensemble: tuple[DenseNet, ...]
    joint_weights: JointWeights
    config: ExpertConfig

    def __post_init__(self) -> None:
        if not self.model.value_heads:
            raise InputShapeError("An expert needs at least one value head")
        if len(self.target_ensemble) != len(self.model.value_heads):
            raise InputShapeError("Target ensemble size differs from the value ensemble")
        for online, target in zip(self.value_ensemble, self.target_ensemble):
            if online.layer_sizes != target.layer_sizes:
                raise InputShapeError("Target parameters do not match the value ensemble")

    @property
    def policy_net(self) -> DenseNet:
        return self.policy.net

    @property
    def value_ensemble(self) -> tuple[DenseNet, ...]:
        return tuple(h for h in self.model.value_heads if isinstance(h, DenseNet))

    @property
    def reward_hyper(self) -> RewardHyper:
        return self.config.reward

    @property
    def gamma(self) -> float:
        return self.config.gamma

    @property
    def tau_entropy(self) -> float:
        return self.config.tau_entropy

    @property
    def beta_temp(self) -> float:
        return self.config.beta_temp

    def latent(self, obs: ArrayLike) -> Array:
        return encode(self.model, obs)

    def act(self, obs: ArrayLike) -> Array:
        """Deterministic (mean) action for an observation."""

        return self.policy.mean(self.latent(obs))

    def sample(self, obs: ArrayLike, rng: SeededRng) -> tuple[Array, float]:
        d = self.policy.dist(self.latent(obs))
        return d.sample(rng), float(np.sum(HALF_LOG_2PI_E + np.log(d.std)))

    def with_values(self, heads: tuple[DenseNet, ...]) -> ExpertPolicy:
        return replace(self, model=replace(self.model, value_heads=heads))


def init_expert(
    skill: str,
    env: str,
    obs_dim: int,
    action_limits: ArrayLike,
    cfg: ExpertConfig,
    rng: SeededRng,
    dof: int | None = None,
) -> ExpertPolicy:
    limits = np.asarray(action_limits, dtype=np.float64)
    a_dim = limits.shape[0]
    L = cfg.latent_dim
    values = tuple(
        DenseNet.init([L + a_dim, *cfg.hidden, 1], rng.spawn("value", i), zero_last=True)
        for i in range(cfg.ensemble_size)
    )
    model = WorldModel.init(obs_dim, limits, L, cfg.hidden, values, rng.spawn("model"))
    policy = PolicyHead(
        net=DenseNet.init([L, *cfg.hidden, 2 * a_dim], rng.spawn("policy"), zero_last=True),
        low=limits[:, 0],
        high=limits[:, 1],
        log_std_min=cfg.log_std_min,
        log_std_max=cfg.log_std_max,
    )
    return ExpertPolicy(
        skill=skill,
        env=env,
        policy=policy,
        model=model,
        target_ensemble=values,
        joint_weights=JointWeights.uniform(dof if dof is not None else a_dim, cfg.joint_weights),
        config=cfg,
    )


def td_target(
    r: ArrayLike,
    z_next: ArrayLike,
    policy: PolicyHead,
    target_ensemble: tuple[DenseNet, ...],
    gamma: float,
    done: ArrayLike | None = None,
) -> Array | float:
    """y = r + gamma * min_i Qbar_i(z', mean action at z'); terminal rows keep only r."""

    rr = np.asarray(r, dtype=np.float64)
    z = np.asarray(z_next, dtype=np.float64)
    if gamma == 0.0:
        return float(rr) if rr.ndim == 0 else rr.copy()
    a = policy.mean(z)
    x = joint_input(z, a)
    q = np.min(np.stack([forward(t, x)[..., 0] for t in target_ensemble]), axis=0)
    alive = 1.0 if done is None else 1.0 - np.asarray(done, dtype=np.float64)
    y = rr + gamma * alive * q
    return float(y) if np.ndim(y) == 0 else y


def _entropy_sign(cfg: ExpertConfig) -> float:
    return 1.0 if cfg.entropy_sign == "maximize" else -1.0


def policy_loss(
    expert: ExpertPolicy, z: ArrayLike, eps: ArrayLike
) -> tuple[float, NetGrads]:
    """mean[-min_i Q_i(z, m + s*eps) - sign * tau * H(pi(.|z))] and its policy-net gradient.

    `eps` fixes the reparameterisation noise, one row per latent row. The
    value heads are held fixed and no gradient flows into the latent.
    """

    head = expert.policy
    zs = np.atleast_2d(np.asarray(z, dtype=np.float64))
    noise = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    n, A = zs.shape[0], head.action_dim
    if noise.shape != (n, A):
        raise InputShapeError(f"eps must be ({n}, {A}), got {noise.shape}")

    out = forward(head.net, zs)
    tu, tv = np.tanh(out[:, :A]), np.tanh(out[:, A:])
    span = head.log_std_max - head.log_std_min
    log_std = head.log_std_min + 0.5 * span * (tv + 1.0)
    std = np.exp(log_std)
    a = head.centre + head.half_width * tu + std * noise

    x = joint_input(zs, a)
    values = expert.value_ensemble
    qs = np.stack([forward(v, x)[:, 0] for v in values], axis=0)
    pick = np.argmin(qs, axis=0)
    q_min = qs[pick, np.arange(n)]
    entropy = np.sum(HALF_LOG_2PI_E + log_std, axis=1)
    coef = _entropy_sign(expert.config) * expert.tau_entropy
    loss = float(np.mean(-q_min - coef * entropy))

    da = np.zeros((n, A))
    for i, v in enumerate(values):
        rows = (pick == i).astype(np.float64)
        if not np.any(rows):
            continue
        g = backward(v, x, (-rows / n)[:, None])
        da += g.inputs[:, -A:]
    d_log_std = da * noise * std - coef / n
    du = da * head.half_width * (1.0 - tu * tu)
    dv = d_log_std * 0.5 * span * (1.0 - tv * tv)
    grads = backward(head.net, zs, np.concatenate([du, dv], axis=1))
    return loss, grads


def value_loss(
    expert: ExpertPolicy, z: ArrayLike, actions: ArrayLike, targets: ArrayLike
) -> tuple[float, tuple[NetGrads, ...]]:
    """Mean squared TD error, averaged over batch rows and ensemble members."""

    x = joint_input(np.atleast_2d(z), np.atleast_2d(actions))
    y = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    n, k = x.shape[0], len(expert.value_ensemble)
    total = 0.0
    grads: list[NetGrads] = []
    for v in expert.value_ensemble:
        dq = forward(v, x)[:, 0] - y
        total += float(np.mean(dq * dq)) / k
        grads.append(backward(v, x, ((2.0 / (n * k)) * dq)[:, None]))
    return total, tuple(grads)


@dataclass
class ExpertOptimizers:
    """Adam state for every trainable head of one expert."""

    policy: Adam
    values: list[Adam]
    encoder: Adam
    dynamics: Adam
    reward: Adam

    @classmethod
    def for_config(cls, cfg: ExpertConfig) -> ExpertOptimizers:
        def make() -> Adam:
            return Adam(lr=cfg.lr, max_grad_norm=cfg.max_grad_norm)

        return cls(
            policy=make(),
            values=[make() for _ in range(cfg.ensemble_size)],
            encoder=make(),
            dynamics=make(),
            reward=make(),
        )


@dataclass(frozen=True)
class UpdateStats:
    policy_loss: float
    value_loss: float


def policy_update(
    batch: ImitationBatch,
    expert: ExpertPolicy,
    lr: float,
    rng: SeededRng,
    optimizers: ExpertOptimizers | None = None,
    *,
    update_values: bool = True,
    update_policy: bool = True,
) -> tuple[ExpertPolicy, UpdateStats]:
    """One actor-critic step on a batch.

    The value ensemble regresses onto TD targets built from the delayed
    target heads, the policy takes a reparameterised step on the
    entropy-regularised objective against the refreshed values, and the
    targets then move toward the online heads by Polyak averaging. Plain
    SGD with `lr` is used when no optimizers are supplied.
    """

    z = encode(expert.model, batch.obs)
    z_next = encode(expert.model, batch.next_obs)
    y = np.asarray(
        td_target(
            batch.rewards,
            z_next,
            expert.policy,
            expert.target_ensemble,
            expert.gamma,
            batch.dones,
        )
    )

    v_loss, v_grads = value_loss(expert, z, batch.actions, y)
    values = expert.value_ensemble
    if update_values:
        if optimizers is not None:
            values = tuple(opt.step(v, g) for opt, v, g in zip(optimizers.values, values, v_grads))
        else:
            values = tuple(sgd_step(v, g, lr) for v, g in zip(values, v_grads))
        expert = expert.with_values(values)

    eps = rng.normal(size=(len(batch), expert.policy.action_dim))
    p_loss, p_grads = policy_loss(expert, z, eps)
    if update_policy:
        net = (
            optimizers.policy.step(expert.policy_net, p_grads)
            if optimizers is not None
            else sgd_step(expert.policy_net, p_grads, lr)
        )
        expert = replace(expert, policy=replace(expert.policy, net=net))

    rate = expert.config.polyak_rate
    targets = tuple(
        polyak(t, o, rate) for t, o in zip(expert.target_ensemble, expert.value_ensemble)
    )
    expert = replace(expert, target_ensemble=targets)

    if not (np.isfinite(p_loss) and np.isfinite(v_loss)):
        raise TrainingDivergedError(f"{expert.skill}: policy loss {p_loss}, value loss {v_loss}")
    return expert, UpdateStats(policy_loss=p_loss, value_loss=v_loss)


def discounted_objective(
    rewards: ArrayLike, entropies: ArrayLike, gamma: float, beta_temp: float
) -> float:
    r = np.asarray(rewards, dtype=np.float64)
    h = np.asarray(entropies, dtype=np.float64)
    if r.size == 0:
        return 0.0
    return float(np.sum(gamma ** np.arange(r.size) * (r + beta_temp * h)))


def sep_objective_estimate(trace: EpisodeTrace, gamma: float, beta_temp: float) -> float:
    """Discounted imitation return plus temperature-weighted policy entropy of one episode."""

    rewards, entropies = trace.extra(IMITATION_REWARD), trace.extra(ENTROPY)
    return discounted_objective(rewards, entropies, gamma, beta_temp)
