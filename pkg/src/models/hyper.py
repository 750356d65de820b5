from __future__ import annotations

from typing import Literal

from pydantic import (
    BaseModel,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    model_validator,
)


class RewardHyper(BaseModel):
    w_scale: PositiveFloat = 1.0
    alpha_pos: PositiveFloat = 2.0
    beta_vel: PositiveFloat = 0.1
    lambda_vel: NonNegativeFloat = 0.5


class JointWeightCfg(BaseModel):
    ema_decay: float = Field(default=0.95, gt=0.0, lt=1.0)
    u_min: PositiveFloat = 0.2
    u_max: PositiveFloat = 5.0
    enabled: bool = True

    @model_validator(mode="after")
    def _bounds(self) -> JointWeightCfg:
        if not self.u_min <= 1.0 <= self.u_max:
            raise ValueError("joint weight bounds must bracket 1 so uniform weights are feasible")
        return self


class LossWeights(BaseModel):
    dynamics: NonNegativeFloat = 1.0
    reward: NonNegativeFloat = 1.0
    value: NonNegativeFloat = 1.0


class PlanConfig(BaseModel):
    method: Literal["mppi", "cem"] = "mppi"
    horizon: PositiveInt = 10
    n_samples: int = Field(default=256, ge=2)
    n_elites: PositiveInt = 32
    temperature: PositiveFloat = 0.5
    n_iters: int = Field(default=4, ge=0)
    mu_value: NonNegativeFloat = 0.5
    gamma: float = Field(default=0.99, ge=0.0, le=1.0)
    init_std: PositiveFloat | list[PositiveFloat] = 0.5
    terminal_value_only: bool = False

    @model_validator(mode="after")
    def _elites(self) -> PlanConfig:
        if self.n_elites > self.n_samples:
            raise ValueError("n_elites must not exceed n_samples")
        return self


class ExpertConfig(BaseModel):
    hidden: list[PositiveInt] = Field(default_factory=lambda: [64, 64])
    latent_dim: PositiveInt = 32
    ensemble_size: PositiveInt = 2
    gamma: float = Field(default=0.99, gt=0.0, le=1.0)
    tau_entropy: NonNegativeFloat = 0.01
    beta_temp: NonNegativeFloat = 0.01
    # "maximize" ascends Q + tau*H; "literal" ascends Q - tau*H.
    entropy_sign: Literal["maximize", "literal"] = "maximize"
    log_std_min: float = -4.0
    log_std_max: float = 0.5

    train_steps: int = Field(default=5000, ge=0)
    warmup_steps: int = Field(default=250, ge=0)
    batch_size: PositiveInt = 64
    buffer_capacity: PositiveInt = 100_000
    updates_per_step: PositiveInt = 1
    lr: PositiveFloat = 1e-3
    max_grad_norm: PositiveFloat | None = 10.0
    polyak_rate: float = Field(default=0.005, gt=0.0, le=1.0)
    eval_interval: PositiveInt = 500
    eval_episodes: PositiveInt = 2
    reset_at_reference: bool = True

    act_with_planner: bool = False
    reward_source: Literal["imitation", "task"] = "imitation"
    reward: RewardHyper = Field(default_factory=RewardHyper)
    joint_weights: JointWeightCfg = Field(default_factory=JointWeightCfg)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    planner: PlanConfig = Field(default_factory=PlanConfig)


class RouterLossCfg(BaseModel):
    beta_ent: NonNegativeFloat = 0.01
    lambda0: NonNegativeFloat = 1.0
    eta: float = Field(default=0.999, gt=0.0, lt=1.0)
    n_phase_bins: PositiveInt = 8
    # "forward": KL(router || prior) as printed; "reverse": KL(prior || router).
    kl_direction: Literal["forward", "reverse"] = "forward"


class RouterConfig(BaseModel):
    hidden: list[PositiveInt] = Field(default_factory=lambda: [32])
    steps: int = Field(default=300, ge=0)
    batch_size: PositiveInt = 64
    lr: PositiveFloat = 5e-3
    eval_interval: PositiveInt = 50
    n_demos: PositiveInt = 3
    rollout_refresh: PositiveInt = 100
    demo_prior_source: Literal["demos", "oracle"] = "demos"
    loss: RouterLossCfg = Field(default_factory=RouterLossCfg)
