from src.experts.control import ExpertController
from src.experts.persistence import load_expert, save_expert
from src.experts.policy import (
    ExpertPolicy,
    PolicyHead,
    init_expert,
    policy_loss,
    policy_update,
    sep_objective_estimate,
    td_target,
    value_loss,
)
from src.experts.replay import ReplayBuffer
from src.experts.reward import JointWeights, imitation_reward, update_joint_weights
from src.experts.training import (
    CurvePoint,
    ExpertTrainer,
    TrainResult,
    evaluate_expert,
    train_expert,
)

__all__ = [
    "CurvePoint",
    "ExpertController",
    "ExpertPolicy",
    "ExpertTrainer",
    "JointWeights",
    "PolicyHead",
    "ReplayBuffer",
    "TrainResult",
    "evaluate_expert",
    "imitation_reward",
    "init_expert",
    "load_expert",
    "policy_loss",
    "policy_update",
    "save_expert",
    "sep_objective_estimate",
    "td_target",
    "train_expert",
    "update_joint_weights",
    "value_loss",
]
