from __future__ import annotations

from typing import Literal

import numpy as np

from src.envs.suite import EnvState, observe
from src.experts.policy import ExpertPolicy
from src.models.envs import EnvSpec
from src.numkit.nets import Array
from src.numkit.rng import SeededRng
from src.planning.planners import plan, policy_prior_plan, shift_plan

ActMode = Literal["mean", "sample", "plan"]


class ExpertController:
    """Turns an expert into an EnvState -> action callable.

    "plan" runs the configured latent planner from a warm-started nominal
    (the previous plan shifted by one step, or the policy-mean rollout at
    the first step of an episode).
    """

    def __init__(
        self,
        spec: EnvSpec,
        expert: ExpertPolicy,
        mode: ActMode = "mean",
        rng: SeededRng | None = None,
    ) -> None:
        if mode != "mean" and rng is None:
            raise ValueError(f"mode {mode!r} needs an rng")
        self.spec = spec
        self.expert = expert
        self.mode = mode
        self._rng = rng
        self._plan: Array | None = None
        self.last_entropy = 0.0

    def reset(self) -> None:
        self._plan = None

    def __call__(self, state: EnvState) -> Array:
        if state.t == 0:
            self.reset()
        obs = observe(self.spec, state)
        if self.mode == "mean":
            return self.expert.act(obs)
        assert self._rng is not None
        if self.mode == "sample":
            action, self.last_entropy = self.expert.sample(obs, self._rng)
            return action
        return self._planned(obs)

    def _planned(self, obs: Array) -> Array:
        assert self._rng is not None
        cfg = self.expert.config.planner
        model = self.expert.model
        z = self.expert.latent(obs)
        if self._plan is None:
            nominal = policy_prior_plan(model, self.expert.policy.mean, z, cfg.horizon)
        else:
            nominal = shift_plan(self._plan)
        result = plan(model, z, cfg, self._rng, nominal)
        self._plan = result.actions
        return np.asarray(result.actions[0])
