from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from pathlib import Path

import numpy as np

from src.envs.episodes import Controller, EpisodeTrace, run_episode, write_trace_csv
from src.envs.references import RefTrajectory, read_reference_csv
from src.envs.roster import DEFAULT_SKILL, CompositeTask, get_task, reference_for, resolve_spec
from src.envs.suite import obs_dim
from src.errors import ConfigError, InputShapeError, OracleError, PrerequisiteError
from src.experts.control import ExpertController
from src.experts.persistence import load_expert, save_expert
from src.experts.policy import ExpertPolicy
from src.experts.training import ExpertTrainer, evaluate_expert, train_expert
from src.harness.artifacts import (
    CURVE_NAME,
    SUMMARY_NAME,
    read_rejections,
    reference_path,
    rejections_path,
    write_ablation_table,
    write_curve_csv,
    write_expert_curve_csv,
    write_manifest,
    write_summary,
)
from src.harness.metrics import (
    aggregate_curves,
    convergence_step,
    peak_return,
    stderr,
    success_rate,
)
from src.models.envs import EnvSpec
from src.models.experiment import ABLATION_MODES, AblationMode, ExperimentConfig, MetricsRecord
from src.models.hyper import ExpertConfig
from src.numkit.rng import SeededRng
from src.routing.demos import collect_demos, scheduled_controller
from src.routing.oracle import SemanticOracle, default_oracle, load_oracle, write_oracle
from src.routing.router import (
    ActionSource,
    RoutedController,
    Router,
    init_router,
    learned_weights,
    load_router,
    save_router,
)
from src.routing.training import train_router
from src.services.scheduler import StageSchedule, parse_schedule

logger = logging.getLogger(__name__)

MONOLITHIC_CHECKPOINT = "monolithic.json"
ROUTER_CHECKPOINT = "router.json"
ORACLE_FILE = "oracle.json"

_LEARNED_ROUTER: frozenset[AblationMode] = frozenset({"full", "no_il"})


@dataclass(eq=False)
class SeedRun:
    seed: int
    steps: list[int]
    returns: list[float]
    trials: list[EpisodeTrace]
    successes: int


@dataclass(eq=False)
class ExperimentResult:
    record: MetricsRecord
    runs: list[SeedRun]

    def seed_peaks(self) -> dict[int, float]:
        return {r.seed: max(r.returns) for r in self.runs}


@dataclass(eq=False)
class CompositeSetup:
    spec: EnvSpec
    task: CompositeTask
    schedule: StageSchedule
    oracle: SemanticOracle
    references: dict[str, RefTrajectory]

    @property
    def skills(self) -> list[str]:
        return list(self.task.skills)


def composite_setup(config: ExperimentConfig) -> CompositeSetup:
    if config.task is None:
        raise ConfigError("A composite run needs `task`")
    task = get_task(config.task)
    spec = resolve_spec(config.env)
    if spec.name != task.env:
        raise ConfigError(f"Task {config.task!r} runs on {task.env}, not {spec.name}")
    schedule = parse_schedule(config.schedule or task.schedule, config.letters)
    if config.oracle_path:
        oracle = load_oracle(Path(config.oracle_path))
    else:
        oracle = default_oracle(config.task, task.skills, schedule)
    if oracle.experts and list(oracle.experts) != task.skills:
        raise OracleError(f"Oracle covers {list(oracle.experts)}, task composes {task.skills}")
    references = {s: skill_reference(config, spec, s) for s in task.skills}
    return CompositeSetup(spec, task, schedule, oracle, references)


def kept_references(directory: Path, spec: EnvSpec, skill: str) -> list[RefTrajectory]:
    """References of `skill` that a `retarget` run in `directory` kept, in clip order.

    Only clips the rejection report marks as kept are read.
    """

    report_path = rejections_path(directory, skill)
    if not report_path.exists():
        raise PrerequisiteError(str(report_path), f"run `retarget --skill {skill}` first")
    report = read_rejections(report_path)
    if report.env != spec.name:
        raise ConfigError(f"{report_path} was filtered on {report.env}, not {spec.name}")
    refs: list[RefTrajectory] = []
    for index in report.kept:
        path = reference_path(directory, skill, index)
        if not path.exists():
            raise PrerequisiteError(str(path), "kept reference is missing")
        ref = read_reference_csv(path)
        if ref.dof != spec.dof:
            raise InputShapeError(f"{path} has {ref.dof} dof, {spec.name} has {spec.dof}")
        refs.append(ref)
    if not refs:
        raise PrerequisiteError(str(report_path), f"every {skill} clip was rejected")
    return refs


def skill_reference(config: ExperimentConfig, spec: EnvSpec, skill: str) -> RefTrajectory:
    if config.reference_dir is None:
        return reference_for(spec, skill)
    ref = kept_references(Path(config.reference_dir), spec, skill)[0]
    logger.info("Training %s on a retargeted reference from %s", skill, config.reference_dir)
    return ref


def eval_points(budget: int, interval: int) -> list[int]:
    """Steps at which a run is evaluated: 0, every `interval`, and `budget`."""

    points = list(range(0, budget, interval))
    if not points or points[-1] != budget:
        points.append(budget)
    return points


def _split(total: int, parts: int) -> list[int]:
    return [(i + 1) * total // parts - i * total // parts for i in range(parts)]


def _expert_config(config: ExperimentConfig, scale: int = 1) -> ExpertConfig:
    update: dict[str, object] = {
        "train_steps": scale * config.budget,
        "eval_interval": scale * config.eval_interval,
    }
    if config.ablation_mode == "no_il":
        update["reward_source"] = "task"
    return config.expert.model_copy(update=update)


def _checkpoint(config: ExperimentConfig, name: str) -> Path:
    if config.checkpoint_dir is None:
        raise PrerequisiteError(name, "evaluation-only runs need checkpoint_dir")
    return Path(config.checkpoint_dir) / name


def load_experts(config: ExperimentConfig, skills: Sequence[str]) -> list[ExpertPolicy]:
    return [load_expert(_checkpoint(config, f"{skill}.json")) for skill in skills]


def composite_controller(
    mode: AblationMode,
    setup: CompositeSetup,
    experts: Sequence[ActionSource],
    router: Router | None = None,
) -> Controller:
    """Controller for one ablation mode over a fixed set of experts."""

    spec = setup.spec
    if mode in _LEARNED_ROUTER:
        if router is None:
            raise ConfigError(f"Mode {mode!r} routes with a learned router")
        return RoutedController(spec, experts, learned_weights(router, setup.oracle.embedding))
    if mode == "no_router":
        prior = setup.oracle.demo_prior
        return RoutedController(spec, experts, lambda state, obs: prior.at(state.phase))
    if mode == "no_vlm_rule_based":
        return scheduled_controller(spec, experts, setup.schedule, setup.skills)
    raise ConfigError(f"Mode {mode!r} does not compose experts")


def mean_task_return(spec: EnvSpec, controller: Controller, episodes: int, rng: SeededRng) -> float:
    returns = [
        run_episode(spec, controller, rng.spawn("episode", ep)).task_return
        for ep in range(episodes)
    ]
    return float(np.mean(returns))


def _trials(
    config: ExperimentConfig, spec: EnvSpec, controller: Controller, seed: int, seed_dir: Path
) -> list[EpisodeTrace]:
    rng = SeededRng(seed).spawn("trials")
    traces = [run_episode(spec, controller, rng.spawn(i)) for i in range(config.success_trials)]
    for i, trace in enumerate(traces):
        write_trace_csv(trace, seed_dir / "trials" / f"trial_{i:02d}.csv")
    return traces


def _seed_run(
    config: ExperimentConfig,
    spec: EnvSpec,
    seed: int,
    steps: list[int],
    returns: list[float],
    traces: list[EpisodeTrace],
    seed_dir: Path,
) -> SeedRun:
    if config.budget > 0:
        write_curve_csv(aggregate_curves(steps, [returns]), seed_dir / CURVE_NAME)
    k, n = success_rate(traces, spec)
    logger.info(
        "seed %d on %s: peak return %.3f, success %d/%d", seed, spec.name, max(returns), k, n
    )
    return SeedRun(seed=seed, steps=steps, returns=returns, trials=traces, successes=k)


def _run_skill_seed(config: ExperimentConfig, seed: int, seed_dir: Path) -> SeedRun:
    spec = resolve_spec(config.env)
    skill = config.skill or DEFAULT_SKILL.get(spec.name)
    if skill is None:
        raise ConfigError(f"{spec.name} has no default skill; set `skill`")
    ref = skill_reference(config, spec, skill)
    rng = SeededRng(seed)
    if config.budget == 0:
        expert = load_expert(_checkpoint(config, f"{skill}.json"))
        ev = evaluate_expert(spec, expert, ref, config.eval_episodes, rng.spawn("eval", 0))
        steps, returns = [0], [ev.mean_return]
    else:
        result = train_expert(spec, ref, _expert_config(config), seed)
        expert = result.expert
        steps = [p.step for p in result.curve]
        returns = [p.mean_return for p in result.curve]
        save_expert(expert, obs_dim(spec), seed_dir / "checkpoints" / f"{skill}.json")
        write_expert_curve_csv(result.curve, seed_dir / "experts" / f"{skill}.csv")
    traces = _trials(config, spec, ExpertController(spec, expert), seed, seed_dir)
    return _seed_run(config, spec, seed, steps, returns, traces, seed_dir)


def baseline_controller(spec: EnvSpec, expert: ExpertPolicy, rng: SeededRng) -> ExpertController:
    """The monolithic baseline acts through its latent planner, as it did while training."""

    return ExpertController(spec, expert, "plan", rng)


def _run_monolithic_seed(
    config: ExperimentConfig, setup: CompositeSetup, seed: int, seed_dir: Path
) -> SeedRun:
    """One planner-driven policy on the raw task reward with K times the per-expert budget."""

    spec = setup.spec
    k = len(setup.skills)
    rng = SeededRng(seed)
    cfg = _expert_config(config, scale=k).model_copy(
        update={"reward_source": "task", "act_with_planner": True, "reset_at_reference": False}
    )
    steps: list[int] = []
    returns: list[float] = []
    if config.budget == 0:
        expert = load_expert(_checkpoint(config, MONOLITHIC_CHECKPOINT))
        steps.append(0)
        controller = baseline_controller(spec, expert, rng.spawn("plan", 0))
        returns.append(
            mean_task_return(spec, controller, config.eval_episodes, rng.spawn("eval", 0))
        )
    else:
        ref = setup.references[setup.skills[0]]
        trainer = ExpertTrainer(spec, ref, cfg, rng.spawn("monolithic").seed)
        for point in eval_points(cfg.train_steps, cfg.eval_interval):
            trainer.advance(point - trainer.steps_done)
            controller = baseline_controller(spec, trainer.expert, rng.spawn("plan", point))
            steps.append(point)
            ret = mean_task_return(spec, controller, config.eval_episodes, rng.spawn("eval", point))
            returns.append(ret)
            logger.info("monolithic step %d: task return %.3f", point, returns[-1])
        expert = trainer.expert
        save_expert(expert, obs_dim(spec), seed_dir / "checkpoints" / MONOLITHIC_CHECKPOINT)
    controller = baseline_controller(spec, expert, rng.spawn("plan", "trials"))
    traces = _trials(config, spec, controller, seed, seed_dir)
    return _seed_run(config, spec, seed, steps, returns, traces, seed_dir)


def _run_composite_seed(config: ExperimentConfig, seed: int, seed_dir: Path) -> SeedRun:
    setup = composite_setup(config)
    mode = config.ablation_mode
    if mode == "baseline_monolithic":
        return _run_monolithic_seed(config, setup, seed, seed_dir)

    spec, skills, oracle = setup.spec, setup.skills, setup.oracle
    rng = SeededRng(seed)
    if config.budget == 0:
        experts = load_experts(config, skills)
        router: Router | None = None
        if mode in _LEARNED_ROUTER:
            router = load_router(_checkpoint(config, ROUTER_CHECKPOINT))
        controller = composite_controller(mode, setup, experts, router)
        ret = mean_task_return(spec, controller, config.eval_episodes, rng.spawn("eval", 0))
        traces = _trials(config, spec, controller, seed, seed_dir)
        return _seed_run(config, spec, seed, [0], [ret], traces, seed_dir)

    ecfg = _expert_config(config)
    trainers = [
        ExpertTrainer(spec, setup.references[s], ecfg, rng.spawn("expert", s).seed) for s in skills
    ]
    router = None
    if mode in _LEARNED_ROUTER:
        router = init_router(
            obs_dim(spec),
            oracle.embedding.size,
            skills,
            config.router.hidden,
            rng.spawn("router-init"),
        )
    points = eval_points(config.budget, config.eval_interval)
    router_chunks = _split(config.router.steps, len(points) - 1)
    router_done = 0
    steps: list[int] = []
    returns: list[float] = []
    for i, point in enumerate(points):
        for trainer in trainers:
            trainer.advance(point - trainer.steps_done)
            trainer.evaluate()
        experts = [t.expert for t in trainers]
        if router is not None and i > 0 and router_chunks[i - 1] > 0:
            demos = collect_demos(
                experts, skills, spec, setup.schedule, config.router.n_demos, rng.spawn("demos", i)
            )
            chunk_cfg = config.router.model_copy(update={"steps": router_chunks[i - 1]})
            router = train_router(
                experts,
                spec,
                oracle,
                demos,
                chunk_cfg,
                rng.spawn("router", i).seed,
                router,
                router_done,
            ).router
            router_done += router_chunks[i - 1]
        controller = composite_controller(mode, setup, experts, router)
        # x-axis counts environment steps across all experts
        steps.append(len(skills) * point)
        ret = mean_task_return(spec, controller, config.eval_episodes, rng.spawn("eval", point))
        returns.append(ret)
        logger.info("%s step %d: composite task return %.3f", mode, steps[-1], returns[-1])

    ckpt = seed_dir / "checkpoints"
    for skill, trainer in zip(skills, trainers):
        save_expert(trainer.expert, obs_dim(spec), ckpt / f"{skill}.json")
        write_expert_curve_csv(trainer.curve, seed_dir / "experts" / f"{skill}.csv")
    if router is not None:
        save_router(router, ckpt / ROUTER_CHECKPOINT)
    write_oracle(oracle, ckpt / ORACLE_FILE)
    traces = _trials(config, spec, controller, seed, seed_dir)
    return _seed_run(config, spec, seed, steps, returns, traces, seed_dir)


def run_seed(config: ExperimentConfig, seed: int, out_dir: Path) -> SeedRun:
    seed_dir = out_dir / f"seed_{seed}"
    if config.task is None:
        return _run_skill_seed(config, seed, seed_dir)
    return _run_composite_seed(config, seed, seed_dir)


def summarise(config: ExperimentConfig, env: str, runs: Sequence[SeedRun]) -> MetricsRecord:
    curves = [r.returns for r in runs]
    means = np.mean(np.asarray(curves, dtype=np.float64), axis=0)
    best = int(np.argmax(means))
    return MetricsRecord(
        env=env,
        mode=config.ablation_mode,
        peak_return=peak_return(curves),
        stderr=stderr([c[best] for c in curves]) if len(runs) >= 2 else 0.0,
        convergence_step=convergence_step(
            runs[0].steps, means.tolist(), config.convergence_tol, config.convergence_window
        ),
        successes=sum(r.successes for r in runs),
        trials=sum(len(r.trials) for r in runs),
    )


def run_experiment(
    config: ExperimentConfig, out_dir: Path, workers: int = 1, command: str = "evaluate"
) -> ExperimentResult:
    """Run every seed of `config` and write its manifest, curves, trials and summary.

    With `budget == 0` nothing is trained: experts (and the router, when the
    mode uses one) come from `checkpoint_dir` and no curve or checkpoint
    files are written.
    """

    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, command, config, config.seeds)
    logger.info(
        "Running %s on %s (%s) for seeds %s",
        config.ablation_mode,
        config.env,
        config.task or config.skill,
        config.seeds,
    )
    if workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(config.seeds))) as pool:
            runs = list(pool.map(run_seed, repeat(config), config.seeds, repeat(out_dir)))
    else:
        runs = [run_seed(config, seed, out_dir) for seed in config.seeds]

    if any(r.steps != runs[0].steps for r in runs):
        raise ConfigError("Seeds produced misaligned evaluation steps")
    record = summarise(config, resolve_spec(config.env).name, runs)
    if config.budget > 0:
        curve = aggregate_curves(runs[0].steps, [r.returns for r in runs])
        write_curve_csv(curve, out_dir / CURVE_NAME)
    write_summary(record, out_dir / SUMMARY_NAME)
    logger.info(
        "%s: peak %.3f ± %.3f, convergence %s, success %d/%d",
        config.ablation_mode,
        record.peak_return,
        record.stderr,
        record.convergence_step,
        record.successes,
        record.trials,
    )
    return ExperimentResult(record=record, runs=runs)


def ablate(
    config: ExperimentConfig,
    out_dir: Path,
    workers: int = 1,
    modes: Sequence[AblationMode] = ABLATION_MODES,
) -> dict[AblationMode, ExperimentResult]:
    """Run each ablation mode on the same seeds; one subdirectory and summary per mode."""

    if config.task is None:
        modes = [m for m in modes if m in {"full", "no_il"}]
    results: dict[AblationMode, ExperimentResult] = {}
    for mode in modes:
        cfg = config.model_copy(update={"ablation_mode": mode})
        results[mode] = run_experiment(cfg, out_dir / mode, workers, command="ablate")
    write_ablation_table({m: r.record for m, r in results.items()}, out_dir / "ablation.csv")
    return results
