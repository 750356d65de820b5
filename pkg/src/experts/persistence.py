from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.errors import ConfigError, PrerequisiteError
from src.experts.policy import ExpertPolicy, PolicyHead
from src.experts.reward import JointWeights
from src.models.documents import ExpertCheckpoint, WorldModelManifest
from src.numkit.checkpoint import from_document, to_document
from src.numkit.nets import DenseNet
from src.planning.world_model import WorldModel

logger = logging.getLogger(__name__)


def _dense(head: object) -> DenseNet:
    if not isinstance(head, DenseNet):
        raise ConfigError("Only DenseNet heads can be checkpointed")
    return head


def to_checkpoint(expert: ExpertPolicy, obs_dim: int) -> ExpertCheckpoint:
    m = expert.model
    return ExpertCheckpoint(
        skill=expert.skill,
        env=expert.env,
        obs_dim=obs_dim,
        action_dim=expert.policy.action_dim,
        action_limits=[
            (float(lo), float(hi)) for lo, hi in zip(expert.policy.low, expert.policy.high)
        ],
        config=expert.config,
        joint_weights=expert.joint_weights.u.tolist(),
        joint_ema=expert.joint_weights.ema_err.tolist(),
        policy=to_document(expert.policy_net),
        value_ensemble=[to_document(v) for v in expert.value_ensemble],
        target_ensemble=[to_document(t) for t in expert.target_ensemble],
        world_model=WorldModelManifest(
            latent_dim=m.latent_dim,
            encoder=to_document(m.encoder),
            dynamics=to_document(_dense(m.dynamics)),
            reward_head=to_document(_dense(m.reward_head)),
        ),
    )


def from_checkpoint(doc: ExpertCheckpoint) -> ExpertPolicy:
    limits = np.asarray(doc.action_limits, dtype=np.float64)
    values = tuple(from_document(v) for v in doc.value_ensemble)
    model = WorldModel(
        encoder=from_document(doc.world_model.encoder),
        dynamics=from_document(doc.world_model.dynamics),
        reward_head=from_document(doc.world_model.reward_head),
        value_heads=values,
        action_limits=limits,
    )
    return ExpertPolicy(
        skill=doc.skill,
        env=doc.env,
        policy=PolicyHead(
            net=from_document(doc.policy),
            low=limits[:, 0],
            high=limits[:, 1],
            log_std_min=doc.config.log_std_min,
            log_std_max=doc.config.log_std_max,
        ),
        model=model,
        target_ensemble=tuple(from_document(t) for t in doc.target_ensemble),
        joint_weights=JointWeights(
            u=np.asarray(doc.joint_weights),
            ema_err=np.asarray(doc.joint_ema),
            cfg=doc.config.joint_weights,
        ),
        config=doc.config,
    )


def save_expert(expert: ExpertPolicy, obs_dim: int, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_checkpoint(expert, obs_dim).model_dump_json(indent=1), encoding="utf-8")
    logger.info("Saved %s expert to %s", expert.skill, path)


def load_expert(path: Path) -> ExpertPolicy:
    if not path.exists():
        raise PrerequisiteError(str(path), "expert checkpoint")
    try:
        doc = ExpertCheckpoint.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(f"Malformed expert checkpoint {path}: {exc}") from exc
    return from_checkpoint(doc)
