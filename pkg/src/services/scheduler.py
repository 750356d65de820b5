from __future__ import annotations

import re
from collections.abc import Mapping

from pydantic import BaseModel, ValidationError, field_validator

from src.errors import ScheduleError

DEFAULT_LETTERS: dict[str, str] = {"S": "stand", "W": "walk", "R": "reach"}

_STAGE = re.compile(r"^\s*([-+0-9.eE]+)\s*\(\s*([A-Za-z]+)\s*\)\s*$")
_ARROW = re.compile(r"\s*(?:->|→)\s*")


class Stage(BaseModel):
    until: float
    skill: str


class StageSchedule(BaseModel):
    """Ordered (threshold, skill) stages, e.g. training steps in millions.

    A stage is active while the position is below its threshold.
    """

    stages: list[Stage]

    @field_validator("stages")
    @classmethod
    def _increasing(cls, stages: list[Stage]) -> list[Stage]:
        if not stages:
            raise ValueError("schedule needs at least one stage")
        for prev, cur in zip(stages, stages[1:]):
            if not cur.until > prev.until:
                raise ValueError(
                    f"thresholds must strictly increase ({prev.until} then {cur.until})"
                )
        if stages[0].until <= 0.0:
            raise ValueError("thresholds must be positive")
        return stages

    @property
    def skills(self) -> list[str]:
        seen: list[str] = []
        for s in self.stages:
            if s.skill not in seen:
                seen.append(s.skill)
        return seen

    @property
    def horizon(self) -> float:
        return self.stages[-1].until

    def stage_at(self, position: float) -> Stage:
        for stage in self.stages:
            if position < stage.until:
                return stage
        # past the last threshold: stay on the final stage
        return self.stages[-1]

    def skill_at(self, progress: float) -> str:
        """Skill for normalised progress in [0, 1], scaled onto the last threshold."""

        return self.stage_at(progress * self.horizon).skill


def _letters(extra: Mapping[str, str] | None) -> dict[str, str]:
    return {**DEFAULT_LETTERS, **(extra or {})}


def parse_schedule(text: str, letters: Mapping[str, str] | None = None) -> StageSchedule:
    """Parse the "0.17(S) -> 0.74(W) -> 2.0(R)" notation."""

    table = _letters(letters)
    stages: list[Stage] = []
    for part in _ARROW.split(text.strip()):
        m = _STAGE.match(part)
        if m is None:
            raise ScheduleError(f"Malformed schedule stage {part!r} in {text!r}")
        value, letter = m.groups()
        if letter not in table:
            raise ScheduleError(f"Unknown skill letter {letter!r}; known: {', '.join(table)}")
        try:
            until = float(value)
        except ValueError:
            raise ScheduleError(f"Bad threshold {value!r} in {text!r}") from None
        stages.append(Stage(until=until, skill=table[letter]))
    try:
        return StageSchedule(stages=stages)
    except ValidationError as exc:
        raise ScheduleError(f"Invalid schedule {text!r}: {exc.errors()[0]['msg']}") from exc


def format_schedule(schedule: StageSchedule, letters: Mapping[str, str] | None = None) -> str:
    by_skill = {skill: letter for letter, skill in _letters(letters).items()}
    parts: list[str] = []
    for stage in schedule.stages:
        if stage.skill not in by_skill:
            raise ScheduleError(f"No letter for skill {stage.skill!r}")
        parts.append(f"{stage.until!r}({by_skill[stage.skill]})")
    return " -> ".join(parts)
