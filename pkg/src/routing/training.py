from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from src.envs.episodes import run_episode, trace_observations
from src.envs.suite import obs_dim
from src.errors import InputShapeError, TrainingDivergedError
from src.models.envs import EnvSpec
from src.models.hyper import RouterConfig
from src.numkit.distributions import kl_categorical
from src.numkit.nets import Array
from src.numkit.optim import Adam
from src.numkit.rng import SeededRng
from src.routing.demos import DemoSet, demo_prior
from src.routing.oracle import PhaseSchedule, SemanticOracle
from src.routing.router import (
    ActionSource,
    RoutedController,
    Router,
    init_router,
    learned_weights,
    route,
    route_gradients,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RouterCurvePoint:
    step: int
    loss: float
    demo_kl: float


@dataclass
class RouterTrainResult:
    router: Router
    prior: PhaseSchedule
    curve: list[RouterCurvePoint] = field(default_factory=list)


def mean_demo_kl(r: Router, obs: Array, phases: Array, prior: PhaseSchedule, emb: Array) -> float:
    """Average KL(route(s) || prior at the phase of s) over a set of states."""

    w = route(r, obs, emb)
    return float(np.mean(kl_categorical(w, prior.at(phases))))


def _rollout_states(
    spec: EnvSpec, experts: Sequence[ActionSource], r: Router, emb: Array, rng: SeededRng
) -> tuple[Array, Array]:
    trace = run_episode(spec, RoutedController(spec, experts, learned_weights(r, emb)), rng)
    return trace_observations(spec, trace), trace.phase.copy()


def train_router(
    experts: Sequence[ActionSource],
    spec: EnvSpec,
    oracle: SemanticOracle,
    demos: DemoSet,
    cfg: RouterConfig,
    seed: int,
    router: Router | None = None,
    start_iteration: int = 0,
) -> RouterTrainResult:
    """Distil the oracle's task prior and the demo prior into a router.

    Batches mix demo states and states visited by the current routed
    policy half and half; the routed rollout is refreshed every
    `rollout_refresh` steps. Pass `router` and `start_iteration` to resume,
    which keeps the guidance weight decaying from where it stopped.
    """

    if len(experts) != oracle.n_experts or demos.n_experts != oracle.n_experts:
        raise InputShapeError(
            f"{len(experts)} experts, oracle covers {oracle.n_experts}, "
            f"demos label {demos.n_experts}"
        )
    rng = SeededRng(seed)
    emb = oracle.embedding
    skills = oracle.experts or tuple(str(i) for i in range(oracle.n_experts))
    if router is None:
        router = init_router(obs_dim(spec), emb.size, skills, cfg.hidden, rng.spawn("init"))
    if cfg.demo_prior_source == "demos":
        prior = demo_prior(demos, cfg.loss.n_phase_bins)
    else:
        prior = oracle.demo_prior
    result = RouterTrainResult(router=router, prior=prior)
    if cfg.steps == 0:
        return result

    demo_obs = demos.observations(spec)
    demo_phase = demos.phases()
    batch_rng = rng.spawn("batch")
    roll_rng = rng.spawn("rollout")
    opt = Adam(lr=cfg.lr)
    half = max(cfg.batch_size // 2, 1)
    roll_obs, roll_phase = _rollout_states(spec, experts, router, emb, roll_rng.spawn(0))

    for step in range(cfg.steps):
        if step > 0 and step % cfg.rollout_refresh == 0:
            roll_obs, roll_phase = _rollout_states(spec, experts, router, emb, roll_rng.spawn(step))
        di = batch_rng.integers(0, demo_obs.shape[0], size=half)
        ri = batch_rng.integers(0, roll_obs.shape[0], size=cfg.batch_size - half)
        obs = np.concatenate([demo_obs[di], roll_obs[ri]])
        phases = np.concatenate([demo_phase[di], roll_phase[ri]])

        t = start_iteration + step
        loss, grads = route_gradients(
            router, obs, emb, oracle.task_prior, prior.at(phases), t, cfg.loss
        )
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"Router loss became {loss} at iteration {t}")
        router = Router(
            net=opt.step(router.net, grads),
            obs_dim=router.obs_dim,
            embedding_dim=router.embedding_dim,
            skills=router.skills,
        )

        done = step + 1
        if done % cfg.eval_interval == 0 or done == cfg.steps:
            kl = mean_demo_kl(router, demo_obs, demo_phase, prior, emb)
            result.curve.append(RouterCurvePoint(step=t + 1, loss=loss, demo_kl=kl))
            logger.info("router step %d: loss %.5f, demo KL %.5f", t + 1, loss, kl)

    result.router = router
    return result
