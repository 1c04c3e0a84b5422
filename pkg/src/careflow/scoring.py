"""Survey scoring and scene-by-scene progression.

An enquiry presents one characteristic per scene. Each selected option
contributes a partial score; the total against the threshold classifies
the patient (below → low risk, at or above → intermediate/high risk). The
total is a pure sum, so answer order never affects it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .model import Question


class ScoringError(Exception):
    """Base class for scoring failures."""


class IncompleteResponse(ScoringError):
    """Scoring was requested before every characteristic was answered."""

    def __init__(self, missing: tuple[str, ...]):
        super().__init__(f"unanswered characteristics: {', '.join(missing)}")
        self.missing = missing


class UnknownOption(ScoringError):
    """An answer named an option the characteristic does not offer."""

    def __init__(self, characteristic: str, option: str):
        super().__init__(f"{characteristic!r} has no option {option!r}")
        self.characteristic = characteristic
        self.option = option


class UnknownCharacteristic(ScoringError):
    """An answer named a characteristic outside the definition."""

    def __init__(self, characteristic: str):
        super().__init__(f"unknown characteristic {characteristic!r}")
        self.characteristic = characteristic


class RiskClass(str, Enum):
    LOW_RISK = "LowRisk"
    INTERMEDIATE_HIGH_RISK = "IntermediateHighRisk"


@dataclass(frozen=True)
class ScoreDefinition:
    """Ordered characteristics plus the classification threshold."""

    characteristics: tuple[Question, ...]
    threshold: int

    def characteristic(self, characteristic_id: str) -> Question:
        for question in self.characteristics:
            if question.id == characteristic_id:
                return question
        raise UnknownCharacteristic(characteristic_id)


@dataclass
class SurveyResponse:
    """Accumulated answers (characteristic id -> option label).

    ``answered_at`` keeps per-scene response instants for latency reports.
    """

    answers: dict[str, str] = field(default_factory=dict)
    answered_at: dict[str, datetime] = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreResult:
    total: int
    risk_class: RiskClass


SCENE = "Scene"
SURVEY_COMPLETE = "SurveyComplete"


@dataclass(frozen=True)
class SceneState:
    """Where the survey stands: the scene to show, or completion.

    ``index`` is the 1-based position of the current characteristic;
    ``transitions`` counts scene-to-scene moves so far (an N-characteristic
    survey makes exactly N-1 of them before completing).
    """

    kind: str
    question: Question | None
    index: int
    total: int
    transitions: int


def _partial_score(question: Question, option_label: str) -> int:
    for option in question.options:
        if option.label == option_label:
            return option.score
    raise UnknownOption(question.id, option_label)


def compute_score(definition: ScoreDefinition, response: SurveyResponse) -> ScoreResult:
    """Sum the partial scores and classify against the threshold.

    Raises:
        IncompleteResponse: not every characteristic is answered.
        UnknownOption: an answer is not among its characteristic's options.
        UnknownCharacteristic: an answer references an unknown characteristic.
    """
    known = {q.id for q in definition.characteristics}
    for characteristic_id in response.answers:
        if characteristic_id not in known:
            raise UnknownCharacteristic(characteristic_id)
    missing = tuple(
        q.id for q in definition.characteristics if q.id not in response.answers
    )
    if missing:
        raise IncompleteResponse(missing)
    total = sum(
        _partial_score(q, response.answers[q.id]) for q in definition.characteristics
    )
    risk = (
        RiskClass.LOW_RISK
        if total < definition.threshold
        else RiskClass.INTERMEDIATE_HIGH_RISK
    )
    return ScoreResult(total, risk)


def next_scene(definition: ScoreDefinition, response: SurveyResponse) -> SceneState:
    """The first unanswered characteristic, or survey completion."""
    count = len(definition.characteristics)
    answered = sum(1 for q in definition.characteristics if q.id in response.answers)
    for position, question in enumerate(definition.characteristics, start=1):
        if question.id not in response.answers:
            return SceneState(
                kind=SCENE,
                question=question,
                index=position,
                total=count,
                transitions=min(answered, count - 1),
            )
    return SceneState(
        kind=SURVEY_COMPLETE,
        question=None,
        index=count,
        total=count,
        transitions=max(count - 1, 0),
    )
