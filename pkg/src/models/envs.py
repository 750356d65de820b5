from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, model_validator

EnvKind = Literal["point-mass", "two-link-arm", "cart-carry", "seat-dock", "composite-door"]

SuccessPredicate = Literal["hold", "speed", "reach", "dock", "carry", "door"]


class EnvSpec(BaseModel):
    """Static description of one toy control task.

    Every environment is fully actuated (`action_dim == dof`) and integrates
    a force-driven second-order system; `kind` selects the acceleration law,
    the task reward and the fall rule.
    """

    name: str
    kind: EnvKind
    dof: PositiveInt
    action_dim: PositiveInt
    dt: PositiveFloat = 0.02
    episode_len: PositiveInt = 500
    joint_limits: list[tuple[float, float]]
    action_limits: list[tuple[float, float]]
    success_predicate: SuccessPredicate
    success_threshold: PositiveFloat = 0.1

    rest_pose: list[float]
    goal: list[float] = Field(default_factory=list)
    target_speed: float = 0.0
    # Reference period in seconds; sets the phase clock of EnvState.
    period: PositiveFloat = 2.0
    reset_noise: float = Field(default=0.01, ge=0.0)

    mass: PositiveFloat = 1.0
    damping: float = Field(default=0.5, ge=0.0)
    gravity: list[float] = Field(default_factory=list)
    link_lengths: tuple[float, float] = (1.0, 1.0)
    # cart-carry: load tilt spring and cart-to-load coupling
    stiffness: float = Field(default=4.0, ge=0.0)
    coupling: float = 1.0
    # composite-door: latch only responds within handle_radius of handle
    handle: list[float] = Field(default_factory=list)
    handle_radius: PositiveFloat = 0.3

    @model_validator(mode="after")
    def _check(self) -> EnvSpec:
        if len(self.joint_limits) != self.dof or len(self.rest_pose) != self.dof:
            raise ValueError("joint_limits and rest_pose must have one entry per dof")
        if len(self.action_limits) != self.action_dim:
            raise ValueError("action_limits must have one entry per action dimension")
        if self.action_dim != self.dof:
            raise ValueError("environments are fully actuated: action_dim must equal dof")
        for lo, hi in [*self.joint_limits, *self.action_limits]:
            if not lo < hi:
                raise ValueError(f"limit [{lo}, {hi}] is empty")
        for (lo, hi), q in zip(self.joint_limits, self.rest_pose):
            if not lo <= q <= hi:
                raise ValueError("rest_pose must lie within joint_limits")
        if self.gravity and len(self.gravity) != self.dof:
            raise ValueError("gravity must be empty or have one entry per dof")
        if self.kind == "composite-door" and (self.dof != 3 or len(self.handle) != 2):
            raise ValueError("composite-door needs dof=3 and a 2-d handle position")
        if self.kind in {"two-link-arm", "cart-carry"} and self.dof != 2:
            raise ValueError(f"{self.kind} needs dof=2")
        return self
