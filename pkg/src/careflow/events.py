"""Engine event vocabulary.

Every state change the engine makes is described by exactly one event, so
a case's event stream is a complete record: folding it reproduces the
case snapshot, and exporting it yields an audit/process-mining trail.
``seq`` is per-case, starts at 1, and never gaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any

from .clock import isoformat


class EventKind(str, Enum):
    CASE_STARTED = "CaseStarted"
    TASK_ENABLED = "TaskEnabled"
    TASK_COMPLETED = "TaskCompleted"
    TASK_SKIPPED = "TaskSkipped"
    WORK_ITEM_CREATED = "WorkItemCreated"
    WORK_ITEM_STARTED = "WorkItemStarted"
    WORK_ITEM_COMPLETED = "WorkItemCompleted"
    WORK_ITEM_CANCELLED = "WorkItemCancelled"
    WORK_ITEM_EXPIRED = "WorkItemExpired"
    TIMER_SCHEDULED = "TimerScheduled"
    TIMER_FIRED = "TimerFired"
    TIMER_CANCELLED = "TimerCancelled"
    DECISION_TAKEN = "DecisionTaken"
    SCENE_ANSWERED = "SceneAnswered"
    DATA_BOUND = "DataBound"
    ORDER_PLACED = "OrderPlaced"
    NOTIFICATION_RAISED = "NotificationRaised"
    CASE_ABORTED = "CaseAborted"
    CASE_COMPLETED = "CaseCompleted"


@dataclass
class EngineEvent:
    case_id: str
    seq: int
    at: datetime
    kind: EventKind
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "seq": self.seq,
            "at": isoformat(self.at),
            "kind": self.kind.value,
            "detail": self.detail,
        }
