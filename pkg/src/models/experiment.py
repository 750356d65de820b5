from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, NonNegativeFloat, PositiveInt, model_validator

from src.models.hyper import ExpertConfig, RouterConfig

AblationMode = Literal["full", "no_router", "no_vlm_rule_based", "no_il", "baseline_monolithic"]

ABLATION_MODES: tuple[AblationMode, ...] = (
    "full",
    "no_router",
    "no_vlm_rule_based",
    "no_il",
    "baseline_monolithic",
)


class RetargetOptions(BaseModel):
    extra_dof: int = Field(default=3, ge=0)
    wobble: NonNegativeFloat = 0.02
    max_iters: PositiveInt = 200
    lr: float = Field(default=0.1, gt=0.0)
    gamma_v: NonNegativeFloat = 0.1
    feasibility_threshold: float = Field(default=0.1, gt=0.0)
    n_clips: PositiveInt = 4


class ExperimentConfig(BaseModel):
    """One experiment: a single-skill run (`task` unset) or a composite task run."""

    env: str = "composite-door"
    task: str | None = "door"
    skill: str | None = None
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    # Environment steps per expert; the monolithic baseline gets K times this.
    budget: int = Field(default=3000, ge=0)
    eval_interval: PositiveInt = 500
    eval_episodes: PositiveInt = 2
    success_trials: PositiveInt = 10
    ablation_mode: AblationMode = "full"
    schedule: str | None = None
    letters: dict[str, str] = Field(default_factory=dict)
    oracle_path: str | None = None
    checkpoint_dir: str | None = None
    # Output directory of `retarget` runs; experts then train on the first
    # clip the feasibility filter kept instead of the generated reference.
    reference_dir: str | None = None
    convergence_tol: NonNegativeFloat = 0.05
    convergence_window: PositiveInt = 3

    expert: ExpertConfig = Field(default_factory=ExpertConfig)
    router: RouterConfig = Field(default_factory=RouterConfig)
    retarget: RetargetOptions = Field(default_factory=RetargetOptions)

    @model_validator(mode="after")
    def _target(self) -> ExperimentConfig:
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.task is None and self.ablation_mode not in {"full", "no_il"}:
            raise ValueError(f"ablation mode {self.ablation_mode!r} needs a composite task")
        return self


class MetricsRecord(BaseModel):
    env: str
    mode: AblationMode
    peak_return: float
    # Across-seed standard error at the peak evaluation; 0.0 with a single seed.
    stderr: NonNegativeFloat
    convergence_step: int | None
    successes: int = Field(ge=0)
    trials: PositiveInt

    @model_validator(mode="after")
    def _counts(self) -> MetricsRecord:
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")
        return self

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials
