from src.envs.episodes import EpisodeTrace, run_episode, success, task_error
from src.envs.references import RefParams, RefTrajectory, ref_generate
from src.envs.roster import ROSTER, get_spec, load_spec, reference_for
from src.envs.suite import EnvState, StepResult, observe, obs_dim, reset, step

__all__ = [
    "ROSTER",
    "EnvState",
    "EpisodeTrace",
    "RefParams",
    "RefTrajectory",
    "StepResult",
    "get_spec",
    "load_spec",
    "obs_dim",
    "observe",
    "ref_generate",
    "reference_for",
    "reset",
    "run_episode",
    "step",
    "success",
    "task_error",
]
