from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

from src.envs.episodes import ENTROPY, IMITATION_REWARD, EpisodeTrace, run_episode
from src.envs.references import RefTrajectory
from src.envs.suite import EnvState, StepResult, obs_dim, observe, reset, step
from src.errors import InputShapeError, TrainingDivergedError
from src.experts.control import ActMode, ExpertController
from src.experts.policy import ExpertOptimizers, ExpertPolicy, init_expert, policy_update
from src.experts.replay import ReplayBuffer
from src.experts.reward import JointWeights, imitation_reward, update_joint_weights
from src.models.envs import EnvSpec
from src.models.hyper import ExpertConfig
from src.numkit.distributions import gaussian_entropy
from src.numkit.nets import Array
from src.numkit.rng import SeededRng
from src.planning.world_model import ImitationBatch, model_losses
from src.services.scheduler import StageSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurvePoint:
    step: int
    mean_return: float
    stderr: float
    task_return: float
    skill: str


@dataclass
class TrainResult:
    expert: ExpertPolicy
    curve: list[CurvePoint] = field(default_factory=list)


@dataclass(eq=False)
class ExpertEvaluation:
    imitation_returns: list[float]
    task_returns: list[float]
    traces: list[EpisodeTrace]

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.imitation_returns)) if self.imitation_returns else 0.0

    @property
    def mean_task_return(self) -> float:
        return float(np.mean(self.task_returns)) if self.task_returns else 0.0

    @property
    def stderr(self) -> float:
        n = len(self.imitation_returns)
        if n < 2:
            return 0.0
        return float(np.std(self.imitation_returns, ddof=1) / np.sqrt(n))


def _reset_for(spec: EnvSpec, ref: RefTrajectory, cfg: ExpertConfig, rng: SeededRng) -> EnvState:
    if cfg.reset_at_reference:
        return reset(spec, rng, pose=ref.q[0], velocity=ref.qdot[0])
    return reset(spec, rng)


def evaluate_expert(
    spec: EnvSpec,
    expert: ExpertPolicy,
    ref: RefTrajectory,
    episodes: int,
    rng: SeededRng,
    *,
    mode: ActMode = "mean",
) -> ExpertEvaluation:
    """Roll out the policy mean and score each episode against `ref`.

    Imitation rewards use uniform joint weights so evaluations stay
    comparable while the training weights drift.
    """

    uniform = JointWeights.uniform(spec.dof, expert.joint_weights.cfg)
    hyper = expert.reward_hyper
    controller = ExpertController(spec, expert, mode, rng.spawn("act"))

    def annotate(state: EnvState, action: Array, result: StepResult) -> dict[str, float]:
        nxt = result.next
        d = expert.policy.dist(expert.latent(observe(spec, state)))
        return {
            IMITATION_REWARD: imitation_reward(
                nxt.q, nxt.qdot, ref.frame_at(nxt.phase), uniform, hyper
            ),
            ENTROPY: float(gaussian_entropy(d)),
        }

    imitation: list[float] = []
    task: list[float] = []
    traces: list[EpisodeTrace] = []
    for ep in range(episodes):
        ep_rng = rng.spawn("episode", ep)
        pose, velocity = (None, None)
        if expert.config.reset_at_reference:
            pose, velocity = ref.q[0], ref.qdot[0]
        trace = run_episode(
            spec, controller, ep_rng, pose=pose, velocity=velocity, annotate=annotate
        )
        imitation.append(float(np.sum(trace.extra(IMITATION_REWARD))))
        task.append(trace.task_return)
        traces.append(trace)
    return ExpertEvaluation(imitation_returns=imitation, task_returns=task, traces=traces)


def _active_reference(
    ref: RefTrajectory,
    references: Mapping[str, RefTrajectory] | None,
    schedule: StageSchedule | None,
    progress: float,
) -> RefTrajectory:
    if schedule is None or not references:
        return ref
    skill = schedule.skill_at(progress)
    if skill not in references:
        raise InputShapeError(f"Reference schedule names {skill!r} but no such reference was given")
    return references[skill]


def _model_step(
    expert: ExpertPolicy, batch: ImitationBatch, opts: ExpertOptimizers
) -> tuple[ExpertPolicy, float]:
    cfg = expert.config
    weights = cfg.loss_weights.model_copy(update={"value": 0.0})
    losses = model_losses(expert.model, batch, weights)
    model = expert.model
    heads: dict[str, object] = {"encoder": opts.encoder.step(model.encoder, losses.encoder_grads)}
    if weights.dynamics > 0.0:
        dyn = model.dynamics
        heads["dynamics"] = opts.dynamics.step(dyn, losses.dynamics_grads)  # type: ignore[arg-type]
    if weights.reward > 0.0:
        rew = model.reward_head
        heads["reward_head"] = opts.reward.step(rew, losses.reward_grads)  # type: ignore[arg-type]
    return replace(expert, model=model.with_heads(**heads)), losses.total


class ExpertTrainer:
    """Resumable imitation-constrained actor-critic training with a latent world model.

    Each environment step stores one transition rewarded by the imitation
    reward (or the task reward when `reward_source` is "task") and folds
    the tracking error into the joint weights. After warm-up, every step
    runs `updates_per_step` world-model and actor-critic updates. With a
    `schedule` and `references`, the tracked reference switches as training
    progresses through `config.train_steps`.
    """

    def __init__(
        self,
        spec: EnvSpec,
        ref: RefTrajectory,
        config: ExpertConfig,
        seed: int,
        *,
        references: Mapping[str, RefTrajectory] | None = None,
        schedule: StageSchedule | None = None,
    ) -> None:
        if ref.dof != spec.dof:
            raise InputShapeError(f"Reference has {ref.dof} dof, {spec.name} has {spec.dof}")
        self.spec = spec
        self.ref = ref
        self.config = config
        self.references = references
        self.schedule = schedule
        rng = SeededRng(seed)
        self.expert = init_expert(
            ref.skill,
            spec.name,
            obs_dim(spec),
            spec.action_limits,
            config,
            rng.spawn("init"),
            spec.dof,
        )
        self.steps_done = 0
        self.curve: list[CurvePoint] = []
        self._env_rng = rng.spawn("env")
        self._act_rng = rng.spawn("act")
        self._batch_rng = rng.spawn("batch")
        self._update_rng = rng.spawn("update")
        self._eval_rng = rng.spawn("eval")
        self._opts = ExpertOptimizers.for_config(config)
        self._buffer = ReplayBuffer(config.buffer_capacity, obs_dim(spec), spec.action_dim)
        self._controller = ExpertController(
            spec, self.expert, "plan" if config.act_with_planner else "sample", self._act_rng
        )
        self._state: EnvState | None = None
        limits = np.asarray(spec.action_limits, dtype=np.float64)
        self._low, self._high = limits[:, 0], limits[:, 1]

    def active_reference(self) -> RefTrajectory:
        total = max(self.config.train_steps, 1)
        return _active_reference(self.ref, self.references, self.schedule, self.steps_done / total)

    def evaluate(self) -> CurvePoint:
        active = self.active_reference()
        rng = self._eval_rng.spawn(self.steps_done)
        ev = evaluate_expert(self.spec, self.expert, active, self.config.eval_episodes, rng)
        point = CurvePoint(
            self.steps_done, ev.mean_return, ev.stderr, ev.mean_task_return, active.skill
        )
        self.curve.append(point)
        logger.info(
            "%s/%s step %d: imitation return %.3f (stderr %.3f), task return %.3f",
            self.spec.name,
            active.skill,
            point.step,
            point.mean_return,
            point.stderr,
            point.task_return,
        )
        return point

    def advance(self, n_steps: int) -> ExpertPolicy:
        """Run up to `n_steps` more environment steps, never past `train_steps`."""

        cfg = self.config
        spec = self.spec
        end = min(self.steps_done + n_steps, cfg.train_steps)
        jw = self.expert.joint_weights
        last_loss = 0.0
        while self.steps_done < end:
            t = self.steps_done
            active = self.active_reference()
            if self._state is None:
                self._state = _reset_for(spec, active, cfg, self._env_rng)
            state = self._state
            obs = observe(spec, state)
            if t < cfg.warmup_steps:
                action = self._act_rng.uniform(self._low, self._high)
            else:
                self._controller.expert = self.expert
                action = self._controller(state)
            out = step(spec, state, action)
            nxt = out.next
            q_star, v_star = active.frame_at(nxt.phase)
            if cfg.reward_source == "task":
                reward = out.task_reward
            else:
                reward = imitation_reward(nxt.q, nxt.qdot, (q_star, v_star), jw, cfg.reward)
            if cfg.joint_weights.enabled:
                jw = update_joint_weights(jw, (nxt.q - q_star) ** 2)
            self._buffer.add(obs, action, reward, observe(spec, nxt), out.fallen)
            self._state = None if out.done else nxt

            expert = replace(self.expert, joint_weights=jw)
            if t >= cfg.warmup_steps and len(self._buffer) >= cfg.batch_size:
                try:
                    for _ in range(cfg.updates_per_step):
                        batch = self._buffer.sample(cfg.batch_size, self._batch_rng)
                        expert, model_loss = _model_step(expert, batch, self._opts)
                        expert, stats = policy_update(
                            batch, expert, cfg.lr, self._update_rng, self._opts
                        )
                        last_loss = model_loss + stats.value_loss + stats.policy_loss
                except TrainingDivergedError:
                    logger.exception("%s/%s diverged at step %d", spec.name, active.skill, t)
                    raise
            self.expert = expert
            self.steps_done += 1
        logger.debug("%s step %d: last loss %.5f", spec.name, self.steps_done, last_loss)
        return self.expert


def train_expert(
    spec: EnvSpec,
    ref: RefTrajectory,
    config: ExpertConfig,
    seed: int,
    *,
    references: Mapping[str, RefTrajectory] | None = None,
    schedule: StageSchedule | None = None,
) -> TrainResult:
    """Train one expert for `config.train_steps` steps.

    Evaluations happen at step 0, every `eval_interval` steps and at the
    end; a zero budget returns the freshly initialised expert and no curve.
    """

    trainer = ExpertTrainer(spec, ref, config, seed, references=references, schedule=schedule)
    if config.train_steps == 0:
        return TrainResult(expert=trainer.expert)
    trainer.evaluate()
    while trainer.steps_done < config.train_steps:
        trainer.advance(config.eval_interval)
        trainer.evaluate()
    return TrainResult(expert=trainer.expert, curve=trainer.curve)
