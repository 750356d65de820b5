from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

from src.envs.episodes import (
    EXPERT_LABEL,
    EpisodeTrace,
    read_trace_csv,
    run_episode,
    trace_observations,
    write_trace_csv,
)
from src.envs.suite import EnvState, StepResult
from src.errors import InputShapeError
from src.models.envs import EnvSpec
from src.numkit.distributions import SimplexVector
from src.numkit.nets import Array
from src.numkit.rng import SeededRng
from src.routing.oracle import PhaseSchedule
from src.routing.router import ActionSource, RoutedController
from src.services.scheduler import StageSchedule

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DemoSet:
    """Labelled demonstrations: every row carries the index of the expert in use.

    Labels are 0-based positions in the expert list.
    """

    traces: tuple[EpisodeTrace, ...]
    n_experts: int

    def __post_init__(self) -> None:
        if not self.traces:
            raise InputShapeError("DemoSet needs at least one demonstration")
        for i, tr in enumerate(self.traces):
            if len(tr) == 0:
                raise InputShapeError(f"Demonstration {i} is empty")
            if EXPERT_LABEL not in tr.extras:
                raise InputShapeError(f"Demonstration {i} has no {EXPERT_LABEL} column")
            labels = tr.extras[EXPERT_LABEL]
            in_range = np.all((labels >= 0) & (labels < self.n_experts))
            if not in_range or np.any(labels != np.round(labels)):
                raise InputShapeError(
                    f"Demonstration {i} has labels outside 0..{self.n_experts - 1}"
                )

    def labels(self) -> Array:
        return np.concatenate([tr.extras[EXPERT_LABEL] for tr in self.traces]).astype(np.int64)

    def phases(self) -> Array:
        return np.concatenate([tr.phase for tr in self.traces])

    def observations(self, spec: EnvSpec) -> Array:
        return np.concatenate([trace_observations(spec, tr) for tr in self.traces])


def phase_bin(phase: ArrayLike, n_bins: int) -> Array:
    idx = np.floor(np.asarray(phase, dtype=np.float64) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def demo_prior(demos: DemoSet, n_phase_bins: int) -> PhaseSchedule:
    """Per-phase-bin expert usage with add-one smoothing.

    Bins no demonstration step falls into copy the nearest populated bin,
    the earlier one on ties.
    """

    k = demos.n_experts
    counts = np.zeros((n_phase_bins, k))
    np.add.at(counts, (phase_bin(demos.phases(), n_phase_bins), demos.labels()), 1.0)
    seen = np.flatnonzero(counts.sum(axis=1) > 0)
    smoothed = (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + k)
    for b in range(n_phase_bins):
        if b not in seen:
            nearest = seen[np.argmin(np.abs(seen - b))]
            smoothed[b] = smoothed[nearest]
    return PhaseSchedule.from_bins(smoothed)


def rule_based_weights(
    schedule: StageSchedule, phase: float, skills: Sequence[str]
) -> SimplexVector:
    """One-hot on the skill the fixed stage schedule names for this phase."""

    skill = schedule.skill_at(phase)
    if skill not in skills:
        raise InputShapeError(f"Schedule names {skill!r}, not among experts {list(skills)}")
    w = np.zeros(len(skills))
    w[list(skills).index(skill)] = 1.0
    return w


def scheduled_controller(
    spec: EnvSpec, experts: Sequence[ActionSource], schedule: StageSchedule, skills: Sequence[str]
) -> RoutedController:
    return RoutedController(
        spec, experts, lambda state, obs: rule_based_weights(schedule, state.phase, skills)
    )


def collect_demos(
    experts: Sequence[ActionSource],
    skills: Sequence[str],
    spec: EnvSpec,
    schedule: StageSchedule,
    n: int,
    rng: SeededRng,
) -> DemoSet:
    """Few-shot demonstrations from stage-scheduled one-hot routing.

    Each row is labelled with the expert whose action produced it, i.e. the
    one the schedule names at the phase the action was chosen in.
    """

    controller = scheduled_controller(spec, experts, schedule, skills)
    index = {s: i for i, s in enumerate(skills)}

    def annotate(state: EnvState, action: Array, result: StepResult) -> dict[str, float]:
        return {EXPERT_LABEL: float(index[schedule.skill_at(state.phase)])}

    traces = tuple(
        run_episode(spec, controller, rng.spawn("demo", i), annotate=annotate) for i in range(n)
    )
    steps = sum(len(t) for t in traces)
    logger.info("Collected %d demonstrations on %s (%d steps)", n, spec.name, steps)
    return DemoSet(traces=traces, n_experts=len(skills))


def write_demoset(demos: DemoSet, directory: Path) -> list[Path]:
    paths = []
    for i, trace in enumerate(demos.traces):
        path = directory / f"demo_{i:03d}.csv"
        write_trace_csv(trace, path)
        paths.append(path)
    return paths


def read_demoset(paths: Sequence[Path], n_experts: int) -> DemoSet:
    return DemoSet(traces=tuple(read_trace_csv(p) for p in paths), n_experts=n_experts)
