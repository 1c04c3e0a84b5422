"""Domain types for executable guideline definitions.

A guideline is a small task network: typed data items, tasks (enquiries,
decisions, actions, waits, subplans, terminals), and directed edges that
carry optional guards, decision-branch labels, or a loop flag for cycles.
Instances of these types come from :mod:`careflow.document` and are checked
by :mod:`careflow.validation` before deployment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum

from .conditions import Condition

_MINUTE = 60
_HOUR = 60 * _MINUTE
_DAY = 24 * _HOUR

_DURATION_RE = re.compile(r"^(\d+)([mhd])$")

_UNIT_SECONDS = {"m": _MINUTE, "h": _HOUR, "d": _DAY}


class DurationError(ValueError):
    """A duration string is not of the form ``<integer><m|h|d>``."""


def parse_duration(text: str) -> timedelta:
    """Parse ``"30m"``, ``"4h"``, ``"2d"`` into a timedelta."""
    m = _DURATION_RE.match(text)
    if m is None:
        raise DurationError(
            f"bad duration {text!r}: expected <integer> followed by m, h, or d"
        )
    return timedelta(seconds=int(m.group(1)) * _UNIT_SECONDS[m.group(2)])


def format_duration(delta: timedelta) -> str:
    """Canonical duration text: days if exact, else hours, else minutes."""
    seconds = int(delta.total_seconds())
    if seconds < 0 or seconds != delta.total_seconds():
        raise DurationError(f"duration not representable: {delta!r}")
    if seconds % _DAY == 0 and seconds:
        return f"{seconds // _DAY}d"
    if seconds % _HOUR == 0 and seconds:
        return f"{seconds // _HOUR}h"
    if seconds % _MINUTE != 0:
        raise DurationError(f"duration has sub-minute precision: {delta!r}")
    return f"{seconds // _MINUTE}m"


class TaskKind(str, Enum):
    ENQUIRY = "Enquiry"
    DECISION = "Decision"
    ACTION = "Action"
    WAIT = "Wait"
    SUBPLAN = "Subplan"
    TERMINAL = "Terminal"


class ValueType(str, Enum):
    NUMBER = "number"
    TEXT = "text"
    BOOLEAN = "boolean"
    ENUMERATION = "enumeration"


class ItemSource(str, Enum):
    SURVEY = "survey"
    DOCTOR_INPUT = "doctor-input"
    EMR_RESULT = "emr-result"


@dataclass(frozen=True)
class DataItemDecl:
    """Declaration of one case data item.

    ``labels`` applies to enumeration items only; ``test_code`` links an
    emr-result item to the order code whose results bind it.
    """

    id: str
    value_type: ValueType
    source: ItemSource
    labels: tuple[str, ...] = ()
    test_code: str | None = None


@dataclass(frozen=True)
class Option:
    """One selectable answer with its partial score."""

    label: str
    score: int


@dataclass(frozen=True)
class Question:
    """One enquiry characteristic, shown as a single scene."""

    id: str
    prompt: str
    options: tuple[Option, ...]


@dataclass(frozen=True)
class TemporalConstraint:
    """Delay window anchored to another task's completion.

    ``min_delay`` is how long after the anchor completes a Wait may fire;
    ``max_delay``, when present, closes the window and becomes the deadline
    of work items enabled by the Wait.
    """

    anchor: str
    min_delay: timedelta
    max_delay: timedelta | None = None


@dataclass(frozen=True)
class Branch:
    """A labelled decision outcome guarded by a condition."""

    label: str
    condition: Condition


@dataclass(frozen=True)
class TaskNode:
    id: str
    kind: TaskKind
    role: str | None = None
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    precondition: Condition | None = None
    temporal: TemporalConstraint | None = None
    # Enquiry
    questions: tuple[Question, ...] = ()
    threshold: int | None = None
    score_item: str | None = None
    # Decision
    branches: tuple[Branch, ...] = ()
    # Action / Subplan
    orders: tuple[str, ...] = ()
    # Terminal
    outcome: str | None = None


@dataclass(frozen=True)
class Edge:
    """Directed flow between two tasks.

    ``branch`` names the decision outcome this edge follows (decision
    sources only). ``condition`` guards non-decision edges. ``loop`` marks
    the back edge of an intended cycle; loop edges are ignored by the
    acyclicity check and by join requirements.
    """

    from_task: str
    to_task: str
    condition: Condition | None = None
    branch: str | None = None
    loop: bool = False


@dataclass(frozen=True)
class GuidelineDefinition:
    id: str
    title: str
    version: str
    entry_task: str
    data_items: tuple[DataItemDecl, ...] = ()
    tasks: tuple[TaskNode, ...] = ()
    edges: tuple[Edge, ...] = ()

    def task(self, task_id: str) -> TaskNode:
        for task in self.tasks:
            if task.id == task_id:
                return task
        raise KeyError(task_id)

    def item(self, item_id: str) -> DataItemDecl:
        for item in self.data_items:
            if item.id == item_id:
                return item
        raise KeyError(item_id)

    def outgoing(self, task_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.from_task == task_id)

    def incoming(self, task_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.to_task == task_id)
