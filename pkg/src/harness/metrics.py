from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from src.envs.episodes import EpisodeTrace, success
from src.errors import MetricsError
from src.models.envs import EnvSpec


@dataclass(frozen=True)
class AggregatePoint:
    step: int
    mean_return: float
    stderr: float
    n_seeds: int


def _as_matrix(curves: Sequence[Sequence[float]]) -> np.ndarray:
    if not curves or any(len(c) == 0 for c in curves):
        raise MetricsError("peak_return needs at least one nonempty series")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise MetricsError(f"Series are not aligned: lengths {sorted(lengths)}")
    return np.asarray(curves, dtype=np.float64)


def peak_return(curves: Sequence[Sequence[float]]) -> float:
    """Maximum over evaluation points of the cross-seed mean return."""

    return float(np.max(_as_matrix(curves).mean(axis=0)))


def stderr(samples: Sequence[float]) -> float:
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise MetricsError(f"Standard error is undefined for {x.size} sample(s)")
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


def convergence_step(
    steps: Sequence[int], values: Sequence[float], tol: float = 0.05, window: int = 3
) -> int | None:
    """First step from which the series stays inside ±tol·|final| of its final value.

    At least `window` evaluations (the step itself included) must follow
    inside the band. A final value of 0 collapses the band to exactly 0.
    """

    if len(steps) != len(values):
        raise MetricsError("steps and values must have the same length")
    if not values:
        raise MetricsError("convergence_step needs a nonempty curve")
    if window < 1:
        raise MetricsError("window must be at least 1")
    v = np.asarray(values, dtype=np.float64)
    final = v[-1]
    inside = np.abs(v - final) <= tol * abs(final)
    # walk back from the end while the tail stays in band
    start = len(v)
    while start > 0 and inside[start - 1]:
        start -= 1
    if len(v) - start < window:
        return None
    return int(steps[start])


def success_rate(traces: Sequence[EpisodeTrace], spec: EnvSpec) -> tuple[int, int]:
    if not traces:
        raise MetricsError("success_rate needs at least one episode")
    return sum(1 for tr in traces if success(spec, tr)), len(traces)


def aggregate_curves(
    steps: Sequence[int], curves: Sequence[Sequence[float]]
) -> list[AggregatePoint]:
    """Cross-seed mean and standard error at each evaluation step.

    A single seed reports a standard error of 0.
    """

    m = _as_matrix(curves)
    if m.shape[1] != len(steps):
        raise MetricsError(f"{len(steps)} steps for series of length {m.shape[1]}")
    n = m.shape[0]
    points = []
    for j, s in enumerate(steps):
        err = stderr(m[:, j]) if n >= 2 else 0.0
        points.append(AggregatePoint(int(s), float(m[:, j].mean()), err, n))
    return points
