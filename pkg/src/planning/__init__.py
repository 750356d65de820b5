from src.planning.planners import (
    PlanResult,
    plan,
    plan_cem,
    plan_mppi,
    policy_prior_plan,
    rollout_score,
    shift_plan,
)
from src.planning.world_model import (
    ImitationBatch,
    LatentHead,
    ModelLosses,
    WorldModel,
    encode,
    model_losses,
)

__all__ = [
    "ImitationBatch",
    "LatentHead",
    "ModelLosses",
    "PlanResult",
    "WorldModel",
    "encode",
    "model_losses",
    "plan",
    "plan_cem",
    "plan_mppi",
    "policy_prior_plan",
    "rollout_score",
    "shift_plan",
]
