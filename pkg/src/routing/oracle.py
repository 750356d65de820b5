from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike
from pydantic import ValidationError

from src.errors import InputShapeError, OracleCoverageError, OracleError, PrerequisiteError
from src.models.documents import OracleDocument, PhaseEntry
from src.numkit.distributions import SimplexVector, is_simplex
from src.numkit.nets import Array
from src.numkit.rng import SeededRng, stable_seed
from src.services.scheduler import StageSchedule

logger = logging.getLogger(__name__)

RENORM_TOL = 1e-6
DEFAULT_EMBEDDING_DIM = 16


@dataclass(frozen=True, eq=False)
class PhaseSchedule:
    """Piecewise-constant map from task phase in [0, 1] to expert weights.

    Entry i applies while phase < until[i]; the last entry also covers
    anything at or beyond its breakpoint.
    """

    until: Array
    weights: Array

    def __post_init__(self) -> None:
        rows = self.weights.shape[0]
        if self.until.ndim != 1 or rows != self.until.shape[0] or self.until.size == 0:
            raise InputShapeError("PhaseSchedule needs one weight row per breakpoint")
        if np.any(np.diff(self.until) <= 0.0):
            raise InputShapeError("PhaseSchedule breakpoints must strictly increase")
        if not all(is_simplex(row) for row in self.weights):
            raise InputShapeError("PhaseSchedule rows must be simplex vectors")

    @property
    def n_experts(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def from_bins(cls, weights: ArrayLike) -> PhaseSchedule:
        w = np.asarray(weights, dtype=np.float64)
        n = w.shape[0]
        return cls(until=np.arange(1, n + 1) / n, weights=w)

    def index(self, phase: ArrayLike) -> Array:
        idx = np.searchsorted(self.until, np.asarray(phase, dtype=np.float64), side="right")
        return np.minimum(idx, self.until.size - 1)

    def at(self, phase: ArrayLike) -> SimplexVector:
        return self.weights[self.index(phase)]

    def entries(self) -> list[PhaseEntry]:
        return [
            PhaseEntry(until_phase=float(u), weights=w.tolist())
            for u, w in zip(self.until, self.weights)
        ]


@dataclass(frozen=True, eq=False)
class SemanticOracle:
    """Cached task guidance: embedding, task-level prior and phase-indexed demo prior."""

    task_name: str
    experts: tuple[str, ...]
    embedding: Array
    task_prior: SimplexVector
    demo_prior: PhaseSchedule

    @property
    def n_experts(self) -> int:
        return int(self.task_prior.shape[0])


def _simplex(values: Sequence[float], what: str) -> SimplexVector:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise OracleError(f"{what} must be a nonempty vector of nonnegative finite numbers")
    total = float(arr.sum())
    if abs(total - 1.0) > RENORM_TOL:
        raise OracleError(f"{what} sums to {total!r}, outside the {RENORM_TOL} tolerance")
    return arr / total


def oracle_from_document(doc: OracleDocument) -> SemanticOracle:
    task_prior = _simplex(doc.task_prior, "task_prior")
    k = task_prior.size
    if doc.experts and len(doc.experts) != k:
        raise OracleError(f"{len(doc.experts)} experts named but task_prior has {k} entries")
    if not doc.embedding:
        raise OracleError("embedding must not be empty")
    if not doc.demo_prior:
        raise OracleCoverageError("demo_prior is empty; it must cover phases [0, 1]")

    until = np.array([e.until_phase for e in doc.demo_prior], dtype=np.float64)
    if np.any(np.diff(until) <= 0.0):
        raise OracleError(f"demo_prior breakpoints must strictly increase, got {until.tolist()}")
    if until[0] <= 0.0 or until[-1] < 1.0:
        raise OracleCoverageError(
            f"demo_prior breakpoints {until.tolist()} do not cover phases [0, 1]"
        )
    rows = []
    for i, entry in enumerate(doc.demo_prior):
        row = _simplex(entry.weights, f"demo_prior[{i}].weights")
        if row.size != k:
            raise OracleError(f"demo_prior[{i}] has {row.size} weights, expected {k}")
        rows.append(row)

    return SemanticOracle(
        task_name=doc.task,
        experts=tuple(doc.experts),
        embedding=np.asarray(doc.embedding, dtype=np.float64),
        task_prior=task_prior,
        demo_prior=PhaseSchedule(until=until, weights=np.stack(rows)),
    )


def load_oracle(path: Path) -> SemanticOracle:
    """Read and validate an oracle file.

    Simplex fields off by at most 1e-6 are renormalised; anything further
    off, non-increasing breakpoints or a gap in [0, 1] is rejected.
    """

    if not path.exists():
        raise PrerequisiteError(str(path), "oracle file")
    try:
        doc = OracleDocument.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise OracleError(f"Malformed oracle document {path}: {exc}") from exc
    oracle = oracle_from_document(doc)
    logger.info(
        "Loaded oracle for %r with %d experts from %s", oracle.task_name, oracle.n_experts, path
    )
    return oracle


def to_document(oracle: SemanticOracle) -> OracleDocument:
    return OracleDocument(
        task=oracle.task_name,
        experts=list(oracle.experts),
        embedding=oracle.embedding.tolist(),
        task_prior=oracle.task_prior.tolist(),
        demo_prior=oracle.demo_prior.entries(),
    )


def write_oracle(oracle: SemanticOracle, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_document(oracle).model_dump_json(indent=1), encoding="utf-8")


def task_embedding(task: str, dim: int = DEFAULT_EMBEDDING_DIM) -> Array:
    v = SeededRng(stable_seed("task-embedding", task)).normal(size=dim)
    return v / np.linalg.norm(v)


def default_oracle(
    task: str,
    skills: Sequence[str],
    schedule: StageSchedule,
    embedding_dim: int = DEFAULT_EMBEDDING_DIM,
    confidence: float = 0.9,
) -> SemanticOracle:
    """The answer a language model would cache for `task` given its stage schedule.

    The task prior is each skill's share of the schedule; every stage
    becomes one demo-prior entry putting `confidence` on its skill.
    """

    k = len(skills)
    index = {s: i for i, s in enumerate(skills)}
    missing = [s.skill for s in schedule.stages if s.skill not in index]
    if missing:
        raise OracleError(f"Schedule uses skills {missing} outside {list(skills)}")

    horizon = schedule.horizon
    share = np.zeros(k)
    rows: list[Array] = []
    until: list[float] = []
    start = 0.0
    for stage in schedule.stages:
        i = index[stage.skill]
        share[i] += (stage.until - start) / horizon
        start = stage.until
        row = np.full(k, (1.0 - confidence) / (k - 1)) if k > 1 else np.zeros(k)
        row[i] = confidence if k > 1 else 1.0
        rows.append(row)
        until.append(stage.until / horizon)
    until[-1] = 1.0
    return SemanticOracle(
        task_name=task,
        experts=tuple(skills),
        embedding=task_embedding(task, embedding_dim),
        task_prior=share / share.sum(),
        demo_prior=PhaseSchedule(until=np.asarray(until), weights=np.stack(rows)),
    )


def write_default_oracle(
    task: str, skills: Sequence[str], schedule: StageSchedule, path: Path
) -> SemanticOracle:
    oracle = default_oracle(task, skills, schedule)
    write_oracle(oracle, path)
    logger.info("Wrote default oracle for %r to %s", task, path)
    return oracle
