from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from src.models.hyper import ExpertConfig

NETWORK_FORMAT_VERSION = 1
EXPERT_FORMAT_VERSION = 1
ROUTER_FORMAT_VERSION = 1
ORACLE_FORMAT_VERSION = 1
CSV_SCHEMA_VERSION = 1


class NetworkDocument(BaseModel):
    format_version: Literal[1] = NETWORK_FORMAT_VERSION
    layer_sizes: list[int]
    activation: Literal["tanh", "relu", "identity"]
    # Row-major (out, in) matrices flattened per layer.
    weights: list[list[float]]
    biases: list[list[float]]


class WorldModelManifest(BaseModel):
    latent_dim: int
    encoder: NetworkDocument
    dynamics: NetworkDocument
    reward_head: NetworkDocument


class ExpertCheckpoint(BaseModel):
    format_version: Literal[1] = EXPERT_FORMAT_VERSION
    skill: str
    env: str
    obs_dim: int
    action_dim: int
    action_limits: list[tuple[float, float]]
    config: ExpertConfig
    joint_weights: list[float]
    joint_ema: list[float]
    policy: NetworkDocument
    value_ensemble: list[NetworkDocument]
    target_ensemble: list[NetworkDocument]
    world_model: WorldModelManifest


class RouterCheckpoint(BaseModel):
    format_version: Literal[1] = ROUTER_FORMAT_VERSION
    n_experts: int
    embedding_dim: int
    skills: list[str]
    net: NetworkDocument


class PhaseEntry(BaseModel):
    until_phase: float
    weights: list[float]


class OracleDocument(BaseModel):
    """On-disk form of the semantic oracle (the cached language-model answer)."""

    format_version: Literal[1] = ORACLE_FORMAT_VERSION
    task: str
    experts: list[str] = Field(default_factory=list)
    embedding: list[float]
    task_prior: list[float]
    demo_prior: list[PhaseEntry]


class RejectionEntry(BaseModel):
    index: int
    skill: str
    kept: bool
    reason: Literal["ok", "out_of_limits", "fallen", "tracking_error"]
    mean_error: float | None = None
    fell_at: int | None = None


class RejectionReport(BaseModel):
    env: str
    threshold: float
    entries: list[RejectionEntry]

    @property
    def kept(self) -> list[int]:
        return [e.index for e in self.entries if e.kept]


class RunManifest(BaseModel):
    package_version: str
    command: str
    seeds: list[int]
    config: dict[str, object]
    formats: dict[str, int] = Field(
        default_factory=lambda: {
            "network": NETWORK_FORMAT_VERSION,
            "expert": EXPERT_FORMAT_VERSION,
            "router": ROUTER_FORMAT_VERSION,
            "oracle": ORACLE_FORMAT_VERSION,
            "csv": CSV_SCHEMA_VERSION,
        }
    )
