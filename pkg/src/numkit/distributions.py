from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.errors import InputShapeError
from src.numkit.rng import SeededRng

Array = NDArray[np.float64]

# Weight vectors on the probability simplex are plain float arrays; the
# helpers below validate them where a boundary needs it.
SimplexVector = NDArray[np.float64]

KL_FLOOR = 1e-12
SIMPLEX_ATOL = 1e-9

HALF_LOG_2PI_E = 0.5 * np.log(2.0 * np.pi * np.e)


def is_simplex(w: ArrayLike, atol: float = SIMPLEX_ATOL) -> bool:
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        return False
    return bool(np.all(arr >= 0.0) and abs(arr.sum() - 1.0) <= atol)


def as_simplex(w: ArrayLike, atol: float = SIMPLEX_ATOL) -> SimplexVector:
    arr = np.asarray(w, dtype=np.float64)
    if not is_simplex(arr, atol=atol):
        raise InputShapeError(f"Not a simplex vector: {arr!r}")
    return arr


def softmax(logits: ArrayLike) -> SimplexVector:
    """Softmax over the last axis; max-subtracted so large logits do not overflow."""

    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits: ArrayLike) -> Array:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax_backward(p: ArrayLike, dL_dp: ArrayLike) -> Array:
    """Vector-Jacobian product of softmax: gradient w.r.t. logits."""

    probs = np.asarray(p, dtype=np.float64)
    g = np.asarray(dL_dp, dtype=np.float64)
    return probs * (g - np.sum(probs * g, axis=-1, keepdims=True))


def kl_categorical(p: ArrayLike, q: ArrayLike, eps: float = KL_FLOOR) -> float | Array:
    """KL(p || q) with q floored at `eps`; 0 * ln 0 counts as 0.

    Accepts single vectors or row batches (returns one value per row).
    """

    pp = np.asarray(p, dtype=np.float64)
    qq = np.maximum(np.asarray(q, dtype=np.float64), eps)
    if pp.shape[-1] != qq.shape[-1]:
        raise InputShapeError(f"KL arguments differ in length: {pp.shape} vs {qq.shape}")
    safe_p = np.where(pp > 0.0, pp, 1.0)
    terms = np.where(pp > 0.0, pp * (np.log(safe_p) - np.log(qq)), 0.0)
    out = np.sum(terms, axis=-1)
    # Rounding can leave -1e-17 for identical arguments.
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def entropy_categorical(p: ArrayLike) -> float | Array:
    pp = np.asarray(p, dtype=np.float64)
    safe_p = np.where(pp > 0.0, pp, 1.0)
    out = -np.sum(np.where(pp > 0.0, pp * np.log(safe_p), 0.0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class DiagGaussian:
    mean: Array
    std: Array

    def __post_init__(self) -> None:
        if self.mean.shape != self.std.shape:
            raise InputShapeError(f"mean {self.mean.shape} and std {self.std.shape} differ")
        if not (np.all(np.isfinite(self.std)) and np.all(self.std > 0.0)):
            raise InputShapeError("DiagGaussian std must be strictly positive and finite")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[-1]) if self.mean.ndim else 0

    def sample(self, rng: SeededRng) -> Array:
        return self.mean + self.std * rng.normal(size=self.mean.shape)


def gaussian_entropy(d: DiagGaussian) -> float | Array:
    """Sum over dimensions of 0.5 ln(2 pi e) + ln std."""

    out = np.sum(HALF_LOG_2PI_E + np.log(d.std), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_log_prob(d: DiagGaussian, x: ArrayLike) -> float | Array:
    xs = np.asarray(x, dtype=np.float64)
    z = (xs - d.mean) / d.std
    out = np.sum(-0.5 * z * z - np.log(d.std) - 0.5 * np.log(2.0 * np.pi), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
