from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike
from pydantic import ValidationError

from src.envs.suite import EnvState, observe
from src.errors import ConfigError, InputShapeError, PrerequisiteError
from src.models.documents import RouterCheckpoint
from src.models.envs import EnvSpec
from src.models.hyper import RouterLossCfg
from src.numkit.checkpoint import from_document, to_document
from src.numkit.distributions import (
    KL_FLOOR,
    SimplexVector,
    entropy_categorical,
    kl_categorical,
    log_softmax,
    softmax,
    softmax_backward,
)
from src.numkit.nets import Array, DenseNet, NetGrads, backward, forward
from src.numkit.rng import SeededRng

logger = logging.getLogger(__name__)


class ActionSource(Protocol):
    def act(self, obs: ArrayLike) -> Array: ...


@dataclass(frozen=True, eq=False)
class Router:
    """Maps observation and task embedding to a weight vector over the experts."""

    net: DenseNet
    obs_dim: int
    embedding_dim: int
    skills: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.net.in_dim != self.obs_dim + self.embedding_dim:
            raise InputShapeError(
                f"Router input {self.net.in_dim} != obs {self.obs_dim} "
                f"+ embedding {self.embedding_dim}"
            )
        if self.skills and len(self.skills) != self.net.out_dim:
            raise InputShapeError("Router output width must equal the number of skills")

    @property
    def n_experts(self) -> int:
        return self.net.out_dim


def init_router(
    obs_dim: int, embedding_dim: int, skills: Sequence[str], hidden: Sequence[int], rng: SeededRng
) -> Router:
    """Fresh router whose output layer is zero, so it starts out uniform."""

    net = DenseNet.init([obs_dim + embedding_dim, *hidden, len(skills)], rng, zero_last=True)
    return Router(net=net, obs_dim=obs_dim, embedding_dim=embedding_dim, skills=tuple(skills))


def router_input(r: Router, s: ArrayLike, emb: ArrayLike) -> Array:
    obs = np.asarray(s, dtype=np.float64)
    e = np.asarray(emb, dtype=np.float64)
    if obs.shape[-1] != r.obs_dim or e.shape != (r.embedding_dim,):
        raise InputShapeError(
            f"Router expects obs width {r.obs_dim} and embedding {r.embedding_dim}, "
            f"got {obs.shape} and {e.shape}"
        )
    if obs.ndim == 1:
        return np.concatenate([obs, e])
    return np.concatenate([obs, np.broadcast_to(e, (obs.shape[0], e.size))], axis=1)


def route(r: Router, s: ArrayLike, emb: ArrayLike) -> SimplexVector:
    return softmax(forward(r.net, router_input(r, s, emb)))


def compose_action(
    experts: Sequence[ActionSource],
    w: ArrayLike,
    s: ArrayLike,
    action_limits: ArrayLike | None = None,
) -> Array:
    """Weighted sum of the experts' mean actions, clipped to `action_limits` if given.

    Experts with zero weight are not evaluated.
    """

    weights = np.asarray(w, dtype=np.float64)
    if weights.shape != (len(experts),):
        raise InputShapeError(f"{len(experts)} experts but {weights.shape} weights")
    action: Array | None = None
    for wi, expert in zip(weights, experts):
        if wi == 0.0:
            continue
        term = wi * np.asarray(expert.act(s), dtype=np.float64)
        action = term if action is None else action + term
    if action is None:
        action = np.zeros_like(np.asarray(experts[0].act(s), dtype=np.float64))
    if action_limits is not None:
        lim = np.asarray(action_limits, dtype=np.float64)
        action = np.clip(action, lim[:, 0], lim[:, 1])
    return action


def _kl(p: ArrayLike, q: ArrayLike, direction: str) -> float | Array:
    return kl_categorical(p, q) if direction == "forward" else kl_categorical(q, p)


def task_loss(
    w_pred: ArrayLike, w_v: ArrayLike, beta_ent: float, direction: str = "forward"
) -> float | Array:
    """KL(w_pred || w_v) - beta_ent * H(w_pred); "reverse" swaps the KL arguments."""

    return _kl(w_pred, w_v, direction) - beta_ent * entropy_categorical(w_pred)


def demo_loss(
    w_pred: ArrayLike, prior_at_phase: ArrayLike, direction: str = "forward"
) -> float | Array:
    return _kl(w_pred, prior_at_phase, direction)


def guidance_weight(t: int, cfg: RouterLossCfg) -> float:
    return cfg.lambda0 * cfg.eta**t


def unified_loss(l_task: float, l_demo: float, t: int, cfg: RouterLossCfg) -> float:
    return guidance_weight(t, cfg) * l_task + l_demo


def _log_floor(q: Array) -> Array:
    return np.log(np.maximum(q, KL_FLOOR))


def task_loss_grad(
    logits: ArrayLike, w_v: ArrayLike, beta_ent: float, direction: str = "forward"
) -> Array:
    """Gradient of task_loss(softmax(logits), w_v) with respect to the logits."""

    z = np.asarray(logits, dtype=np.float64)
    p, log_p = softmax(z), log_softmax(z)
    q = np.asarray(w_v, dtype=np.float64)
    if direction == "forward":
        return softmax_backward(p, (1.0 + beta_ent) * log_p - _log_floor(q))
    return (p - q) + softmax_backward(p, beta_ent * log_p)


def demo_loss_grad(logits: ArrayLike, prior: ArrayLike, direction: str = "forward") -> Array:
    z = np.asarray(logits, dtype=np.float64)
    p = softmax(z)
    q = np.asarray(prior, dtype=np.float64)
    if direction == "forward":
        return softmax_backward(p, log_softmax(z) - _log_floor(q))
    return p - q


def route_gradients(
    r: Router,
    obs: ArrayLike,
    emb: ArrayLike,
    w_v: ArrayLike,
    priors: ArrayLike,
    t: int,
    cfg: RouterLossCfg,
) -> tuple[float, NetGrads]:
    """Batch-mean unified loss at iteration `t` and its router-net gradient.

    `priors` holds the demo prior row for each observation's phase.
    """

    x = router_input(r, np.atleast_2d(obs), emb)
    logits = forward(r.net, x)
    p = softmax(logits)
    q_demo = np.asarray(priors, dtype=np.float64)
    n = x.shape[0]
    lam = guidance_weight(t, cfg)
    l_task = np.asarray(task_loss(p, w_v, cfg.beta_ent, cfg.kl_direction))
    l_demo = np.asarray(demo_loss(p, q_demo, cfg.kl_direction))
    loss = float(np.mean(lam * l_task + l_demo))
    g = lam * task_loss_grad(logits, w_v, cfg.beta_ent, cfg.kl_direction)
    g = g + demo_loss_grad(logits, q_demo, cfg.kl_direction)
    return loss, backward(r.net, x, g / n)


WeightFn = Callable[[EnvState, Array], SimplexVector]


class RoutedController:
    """EnvState -> action through a weighting rule over frozen experts.

    The rule sees the state (for its phase) and the observation; the last
    weight vector used is kept on `last_weights`.
    """

    def __init__(self, spec: EnvSpec, experts: Sequence[ActionSource], weights: WeightFn) -> None:
        self.spec = spec
        self.experts = list(experts)
        self.weights = weights
        self.limits = np.asarray(spec.action_limits, dtype=np.float64)
        self.last_weights: SimplexVector = np.full(len(self.experts), 1.0 / len(self.experts))

    def __call__(self, state: EnvState) -> Array:
        obs = observe(self.spec, state)
        self.last_weights = self.weights(state, obs)
        return compose_action(self.experts, self.last_weights, obs, self.limits)


def learned_weights(r: Router, emb: ArrayLike) -> WeightFn:
    e = np.asarray(emb, dtype=np.float64)
    return lambda state, obs: route(r, obs, e)


def save_router(r: Router, path: Path) -> None:
    doc = RouterCheckpoint(
        n_experts=r.n_experts,
        embedding_dim=r.embedding_dim,
        skills=list(r.skills),
        net=to_document(r.net),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(doc.model_dump_json(indent=1), encoding="utf-8")


def load_router(path: Path) -> Router:
    if not path.exists():
        raise PrerequisiteError(str(path), "router checkpoint")
    try:
        doc = RouterCheckpoint.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(f"Malformed router checkpoint {path}: {exc}") from exc
    net = from_document(doc.net)
    if net.out_dim != doc.n_experts:
        raise ConfigError(f"{path}: network has {net.out_dim} outputs, header says {doc.n_experts}")
    return Router(
        net=net,
        obs_dim=net.in_dim - doc.embedding_dim,
        embedding_dim=doc.embedding_dim,
        skills=tuple(doc.skills),
    )
