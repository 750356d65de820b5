from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike

from src.errors import InputShapeError
from src.numkit.nets import Array
from src.numkit.rng import SeededRng
from src.planning.world_model import ImitationBatch


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest rows are overwritten first."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int) -> None:
        if capacity <= 0:
            raise InputShapeError("ReplayBuffer capacity must be positive")
        self.capacity = capacity
        self._obs = np.zeros((capacity, obs_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_dim))
        self._dones = np.zeros(capacity)
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(
        self, obs: ArrayLike, action: ArrayLike, reward: float, next_obs: ArrayLike, done: bool
    ) -> None:
        i = self._cursor
        self._obs[i] = obs
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_obs[i] = next_obs
        self._dones[i] = float(done)
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: SeededRng) -> ImitationBatch:
        if self._size == 0:
            raise InputShapeError("Cannot sample from an empty replay buffer")
        idx: Array = rng.integers(0, self._size, size=batch_size)
        return ImitationBatch(
            obs=self._obs[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_obs=self._next_obs[idx],
            dones=self._dones[idx],
        )
