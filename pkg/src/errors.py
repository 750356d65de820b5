from __future__ import annotations


class SkillmixError(Exception):
    """Base class for every failure the CLI reports with a category exit code."""

    exit_code = 1


class InputShapeError(SkillmixError, ValueError):
    exit_code = 2


class InvalidActionError(InputShapeError):
    pass


class ConfigError(SkillmixError, ValueError):
    exit_code = 3


class UnknownSkillError(ConfigError):
    pass


class ScheduleError(ConfigError):
    pass


class OracleError(ConfigError):
    pass


class OracleCoverageError(OracleError):
    pass


class MetricsError(SkillmixError, ValueError):
    exit_code = 3


class PrerequisiteError(SkillmixError):
    """A run needs an artifact (checkpoint, oracle file) that is not on disk."""

    exit_code = 4

    def __init__(self, artifact: str, detail: str = "") -> None:
        self.artifact = artifact
        msg = f"Missing prerequisite: {artifact}"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


class TrainingDivergedError(SkillmixError, RuntimeError):
    exit_code = 5
