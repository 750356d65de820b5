from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

from src.envs.references import RefTrajectory, write_reference_csv
from src.envs.roster import DEFAULT_SKILL, reference_for, resolve_spec
from src.errors import ConfigError
from src.harness.artifacts import (
    reference_path,
    rejections_path,
    write_manifest,
    write_rejections,
    write_router_curve_csv,
)
from src.harness.experiment import ROUTER_CHECKPOINT, composite_setup, load_experts
from src.models.documents import RejectionReport
from src.models.experiment import ExperimentConfig
from src.numkit.rng import SeededRng
from src.retarget.alignment import SyntheticSkeleton, retarget_ik
from src.retarget.feasibility import feasibility_filter
from src.routing.demos import collect_demos, write_demoset
from src.routing.router import save_router
from src.routing.training import RouterTrainResult, train_router

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RetargetOutcome:
    kept: list[RefTrajectory]
    report: RejectionReport
    paths: list[Path]


def retarget_clips(config: ExperimentConfig, seed: int, out_dir: Path) -> RetargetOutcome:
    """Retarget synthetic source clips of one skill and keep the trackable ones.

    Kept references are written as reference CSVs next to a per-skill JSON
    rejection report; point `reference_dir` at `out_dir` to train on them.
    """

    spec = resolve_spec(config.env)
    skill = config.skill or DEFAULT_SKILL.get(spec.name)
    if skill is None:
        raise ConfigError(f"{spec.name} has no default skill; set `skill`")
    write_manifest(out_dir, "retarget", config, [seed])
    opts = config.retarget
    rng = SeededRng(seed)
    skeleton = SyntheticSkeleton.build(spec, opts.extra_dof, rng.spawn("skeleton"))
    mapping = replace(skeleton.map, gamma_v=opts.gamma_v)
    ref = reference_for(spec, skill)

    retargeted: list[RefTrajectory] = []
    for i in range(opts.n_clips):
        source = skeleton.source_motion(ref, rng.spawn("clip", i), opts.wobble)
        result = retarget_ik(source, mapping, opts.max_iters, opts.lr)
        logger.info("clip %d: max residual %.3e", i, float(result.residual.max(initial=0.0)))
        retargeted.append(result.trajectory)

    kept, report = feasibility_filter(retargeted, spec, opts.feasibility_threshold)
    paths: list[Path] = []
    for index in report.kept:
        path = reference_path(out_dir, skill, index)
        write_reference_csv(retargeted[index], path)
        paths.append(path)
    write_rejections(report, rejections_path(out_dir, skill))
    logger.info("Kept %d of %d %s clips on %s", len(kept), opts.n_clips, skill, spec.name)
    return RetargetOutcome(kept=kept, report=report, paths=paths)


def distil_router(config: ExperimentConfig, seed: int, out_dir: Path) -> RouterTrainResult:
    """Train a router over pre-trained experts loaded from `checkpoint_dir`."""

    setup = composite_setup(config)
    experts = load_experts(config, setup.skills)
    write_manifest(out_dir, "train-router", config, [seed])
    rng = SeededRng(seed)
    demos = collect_demos(
        experts, setup.skills, setup.spec, setup.schedule, config.router.n_demos, rng.spawn("demos")
    )
    write_demoset(demos, out_dir / "demos")
    result = train_router(
        experts, setup.spec, setup.oracle, demos, config.router, rng.spawn("router").seed
    )
    save_router(result.router, out_dir / ROUTER_CHECKPOINT)
    write_router_curve_csv(result.curve, out_dir / "router_curve.csv")
    return result
