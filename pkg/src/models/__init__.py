from src.models.documents import (
    ExpertCheckpoint,
    NetworkDocument,
    OracleDocument,
    PhaseEntry,
    RejectionReport,
    RouterCheckpoint,
    RunManifest,
)
from src.models.envs import EnvSpec
from src.models.experiment import ABLATION_MODES, AblationMode, ExperimentConfig, MetricsRecord
from src.models.hyper import ExpertConfig, PlanConfig, RewardHyper, RouterConfig, RouterLossCfg

__all__ = [
    "ABLATION_MODES",
    "AblationMode",
    "EnvSpec",
    "ExpertCheckpoint",
    "ExpertConfig",
    "ExperimentConfig",
    "MetricsRecord",
    "NetworkDocument",
    "OracleDocument",
    "PhaseEntry",
    "PlanConfig",
    "RejectionReport",
    "RewardHyper",
    "RouterCheckpoint",
    "RouterConfig",
    "RouterLossCfg",
    "RunManifest",
]
