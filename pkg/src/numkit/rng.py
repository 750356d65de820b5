from __future__ import annotations

import hashlib
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

_MASK64 = (1 << 64) - 1


def stable_seed(*parts: str) -> int:
    """64-bit seed derived from a SHA-256 digest of the joined parts."""

    h = hashlib.sha256("\0".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big", signed=False)


class SeededRng:
    """PCG64 stream keyed by a 64-bit seed.

    Two instances built from the same seed produce bit-identical draws.
    Child streams come from `spawn`, so sub-components never share a stream.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    @property
    def state(self) -> dict[str, Any]:
        return self._gen.bit_generator.state

    def spawn(self, *labels: str | int) -> SeededRng:
        return SeededRng(stable_seed(str(self.seed), *(str(x) for x in labels)))

    def uniform(
        self, low: ArrayLike = 0.0, high: ArrayLike = 1.0, size: int | tuple[int, ...] | None = None
    ) -> NDArray[np.float64]:
        return np.asarray(self._gen.uniform(low, high, size), dtype=np.float64)

    def normal(
        self,
        loc: ArrayLike = 0.0,
        scale: ArrayLike = 1.0,
        size: int | tuple[int, ...] | None = None,
    ) -> NDArray[np.float64]:
        return np.asarray(self._gen.normal(loc, scale, size), dtype=np.float64)

    def integers(self, low: int, high: int, size: int | tuple[int, ...] | None = None) -> Any:
        return self._gen.integers(low, high, size)

    def dirichlet(self, alpha: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self._gen.dirichlet(alpha), dtype=np.float64)
