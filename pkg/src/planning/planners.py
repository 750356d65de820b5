from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from src.errors import InputShapeError
from src.models.hyper import PlanConfig
from src.numkit.nets import Array
from src.numkit.rng import SeededRng
from src.planning.world_model import WorldModel, joint_input, min_value

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class PlanResult:
    actions: Array
    score: float
    best_scores: list[float] = field(default_factory=list)


def _score_batch(m: WorldModel, z0: Array, seqs: Array, cfg: PlanConfig) -> Array:
    """Scores for (n, H, A) action sequences rolled out from one latent."""

    n, horizon, _ = seqs.shape
    z = np.broadcast_to(np.asarray(z0, dtype=np.float64), (n, z0.shape[-1])).copy()
    total = np.zeros(n)
    discount = 1.0
    for k in range(horizon):
        x = joint_input(z, seqs[:, k, :])
        total += discount * np.asarray(m.reward_head(x))[:, 0]
        last = k == horizon - 1
        if cfg.mu_value > 0.0 and m.value_heads and (last or not cfg.terminal_value_only):
            total += discount * cfg.mu_value * min_value(m.value_heads, x)
        if not last:
            z = np.asarray(m.dynamics(x))
        discount *= cfg.gamma
    return total


def rollout_score(m: WorldModel, z0: ArrayLike, actions: ArrayLike, cfg: PlanConfig) -> float:
    """Discounted sum of predicted reward plus mu times the min-ensemble value.

    Every step contributes its value term unless `terminal_value_only`,
    in which case only the last step does.
    """

    seq = np.asarray(actions, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != m.action_dim:
        raise InputShapeError(f"Expected (H, {m.action_dim}) actions, got {seq.shape}")
    return float(_score_batch(m, np.asarray(z0, dtype=np.float64), seq[None], cfg)[0])


def _bounds(m: WorldModel) -> tuple[Array, Array]:
    return m.action_limits[:, 0], m.action_limits[:, 1]


def _initial(m: WorldModel, cfg: PlanConfig, nominal: ArrayLike | None) -> tuple[Array, Array]:
    lo, hi = _bounds(m)
    if nominal is None:
        mean = np.clip(np.zeros((cfg.horizon, m.action_dim)), lo, hi)
    else:
        mean = np.clip(np.asarray(nominal, dtype=np.float64), lo, hi)
        if mean.shape != (cfg.horizon, m.action_dim):
            raise InputShapeError(
                f"Nominal must be ({cfg.horizon}, {m.action_dim}), got {mean.shape}"
            )
    std = np.broadcast_to(np.asarray(cfg.init_std, dtype=np.float64), (m.action_dim,))
    return mean, np.tile(std, (cfg.horizon, 1))


def _sample(mean: Array, std: Array, n: int, rng: SeededRng, lo: Array, hi: Array) -> Array:
    noise = rng.normal(size=(n, *mean.shape))
    return np.clip(mean[None] + std[None] * noise, lo, hi)


def mppi_weights(scores: Array, temperature: float) -> Array:
    w = np.exp((scores - np.max(scores)) / temperature)
    return w / np.sum(w)


def plan_mppi(
    m: WorldModel,
    z0: ArrayLike,
    cfg: PlanConfig,
    rng: SeededRng,
    nominal: ArrayLike | None = None,
) -> PlanResult:
    """Path-integral update of the nominal sequence; the sampling std stays fixed.

    Slot 0 of every sample set carries the best sequence seen so far, so the
    recorded per-iteration best score never drops.
    """

    z = np.asarray(z0, dtype=np.float64)
    lo, hi = _bounds(m)
    mean, std = _initial(m, cfg, nominal)
    best_seq = mean
    best = float(_score_batch(m, z, mean[None], cfg)[0])
    history: list[float] = []
    for _ in range(cfg.n_iters):
        samples = _sample(mean, std, cfg.n_samples, rng, lo, hi)
        samples[0] = best_seq
        scores = _score_batch(m, z, samples, cfg)
        w = mppi_weights(scores, cfg.temperature)
        mean = np.tensordot(w, samples, axes=1)
        top = int(np.argmax(scores))
        if scores[top] > best:
            best, best_seq = float(scores[top]), samples[top]
        history.append(best)

    actions = np.clip(mean, lo, hi)
    score = float(_score_batch(m, z, actions[None], cfg)[0])
    return PlanResult(actions=actions, score=score, best_scores=history)


def refit_elites(
    samples: Array, scores: Array, n_elites: int, std_floor: float = STD_FLOOR
) -> tuple[Array, Array]:
    order = np.argsort(-scores, kind="stable")[:n_elites]
    elites = samples[order]
    return elites.mean(axis=0), np.maximum(elites.std(axis=0), std_floor)


def plan_cem(
    m: WorldModel,
    z0: ArrayLike,
    cfg: PlanConfig,
    rng: SeededRng,
    nominal: ArrayLike | None = None,
) -> PlanResult:
    """Cross-entropy method: refit a diagonal Gaussian to the top `n_elites`."""

    z = np.asarray(z0, dtype=np.float64)
    lo, hi = _bounds(m)
    mean, std = _initial(m, cfg, nominal)
    best_seq = mean
    best = float(_score_batch(m, z, mean[None], cfg)[0])
    history: list[float] = []
    for _ in range(cfg.n_iters):
        samples = _sample(mean, std, cfg.n_samples, rng, lo, hi)
        samples[0] = best_seq
        scores = _score_batch(m, z, samples, cfg)
        mean, std = refit_elites(samples, scores, cfg.n_elites)
        top = int(np.argmax(scores))
        if scores[top] > best:
            best, best_seq = float(scores[top]), samples[top]
        history.append(best)

    actions = np.clip(mean, lo, hi)
    score = float(_score_batch(m, z, actions[None], cfg)[0])
    return PlanResult(actions=actions, score=score, best_scores=history)


PLANNERS: dict[str, Callable[..., PlanResult]] = {"mppi": plan_mppi, "cem": plan_cem}


def plan(
    m: WorldModel, z0: ArrayLike, cfg: PlanConfig, rng: SeededRng, nominal: ArrayLike | None = None
) -> PlanResult:
    return PLANNERS[cfg.method](m, z0, cfg, rng, nominal)


def policy_prior_plan(
    m: WorldModel, policy_mean: Callable[[Array], Array], z0: ArrayLike, horizon: int
) -> Array:
    """Nominal sequence from rolling the policy mean through the latent dynamics."""

    lo, hi = _bounds(m)
    z = np.asarray(z0, dtype=np.float64)
    actions = np.zeros((horizon, m.action_dim))
    for k in range(horizon):
        a = np.clip(np.asarray(policy_mean(z), dtype=np.float64), lo, hi)
        actions[k] = a
        if k < horizon - 1:
            z = np.asarray(m.dynamics(joint_input(z[None], a[None])))[0]
    return actions


def shift_plan(actions: ArrayLike) -> Array:
    seq = np.asarray(actions, dtype=np.float64)
    return np.concatenate([seq[1:], seq[-1:]], axis=0)
