"""Guideline enactment: cases, task lifecycles, routing, and replay.

The engine runs deployed guideline definitions as per-patient cases. Its
contract, in brief:

* Every state change is described by exactly one :class:`EngineEvent`
  with a per-case, gapless ``seq``. Folding a case's events through
  :meth:`Engine.fold` reproduces the live snapshot bit for bit — the
  event stream *is* the state.
* A task becomes enabled when every non-loop incoming edge is resolved
  (fired or dead), at least one incoming edge has fired, and its
  precondition — if any — evaluates true. An unsatisfied or unbound
  precondition holds the task back; it is re-checked whenever case data
  changes, never skipped.
* A decision's not-taken branch edges go dead, and a task all of whose
  non-loop incoming edges are dead is skipped, cascading its own edges.
  That pair of rules makes converging paths behave like an or-join
  without special node types.
* Edges out of tasks that sit on a cycle are the exception: not taken
  means "not this round", so they stay unresolved instead of going dead,
  and an edge firing into an already-completed task re-enables it for
  another round, resetting its outgoing edges.
* Guards that reference unbound items defer their edge; the edge is
  re-evaluated whenever new data binds. Deferred resolution never
  re-enables a completed task — only control-flow firing does.
* Waits turn into timers on the shared scheduler; a wait's window end
  becomes the deadline of the work items it enables. Expiry flags the
  work item and notifies, but never cancels: late work is still work.

Ids (cases, work items, orders) are drawn from per-engine counters and
all instants come from the scheduler's clock, so two runs fed the same
inputs produce identical event streams.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Callable, Iterable, Protocol

from .conditions import UnboundDataItem, eval_condition
from .clock import isoformat, parse_instant
from .emr import ClinicalEvent, OrderRequest
from .events import EngineEvent, EventKind
from .model import GuidelineDefinition, TaskKind, TaskNode, ValueType
from .scheduler import Scheduler, Timer, TimerState
from .scoring import (
    ScoreDefinition,
    SceneState,
    SurveyResponse,
    UnknownCharacteristic,
    UnknownOption,
    compute_score,
    next_scene,
)
from .validation import ValidationReport, validate

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# errors

class EngineError(Exception):
    """Base class; ``code`` gives the API layer a stable discriminator."""

    code = "engine-error"


class UnknownGuideline(EngineError):
    code = "unknown-guideline"


class UnknownCase(EngineError):
    code = "unknown-case"


class UnknownWorkItem(EngineError):
    code = "unknown-work-item"


class CaseNotRunning(EngineError):
    code = "case-not-running"


class StaleWorkItem(EngineError):
    """The work item is already completed or cancelled."""

    code = "stale-work-item"


class NoActiveSurvey(EngineError):
    code = "no-active-survey"


class AlreadyAnswered(EngineError):
    code = "already-answered"


class MissingOutput(EngineError):
    code = "missing-output"


class UndeclaredOutput(EngineError):
    code = "undeclared-output"


class InvalidOutputValue(EngineError):
    code = "invalid-output-value"


class DeploymentBlocked(EngineError):
    """Validation found errors; the report is attached."""

    code = "deployment-blocked"

    def __init__(self, report: ValidationReport):
        lines = "; ".join(f.message for f in report.errors)
        super().__init__(f"definition not deployable: {lines}")
        self.report = report


# --------------------------------------------------------------------------
# states

class CaseStatus(str, Enum):
    RUNNING = "Running"
    COMPLETED = "Completed"
    ABORTED = "Aborted"


class TaskState(str, Enum):
    DORMANT = "Dormant"
    ENABLED = "Enabled"
    IN_PROGRESS = "InProgress"
    COMPLETED = "Completed"
    SKIPPED = "Skipped"
    CANCELLED = "Cancelled"


class WorkItemState(str, Enum):
    NOTIFIED = "Notified"
    IN_PROGRESS = "InProgress"
    COMPLETED = "Completed"
    CANCELLED = "Cancelled"
    EXPIRED = "Expired"


LIVE_ITEM_STATES = frozenset(
    {WorkItemState.NOTIFIED, WorkItemState.IN_PROGRESS, WorkItemState.EXPIRED}
)

_UNRESOLVED = "unresolved"
_FIRED = "fired"
_DEAD = "dead"
_DEFERRED = "deferred"


@dataclass
class WorkItem:
    item_id: str
    case_id: str
    task_id: str
    role: str
    state: WorkItemState
    created_at: datetime
    deadline: datetime | None = None
    assignee: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "case_id": self.case_id,
            "task_id": self.task_id,
            "role": self.role,
            "state": self.state.value,
            "created_at": isoformat(self.created_at),
            "deadline": isoformat(self.deadline) if self.deadline else None,
            "assignee": self.assignee,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class CaseView:
    """Immutable snapshot of one case, JSON-ready values throughout.

    Equal views compare equal, which is what makes "fold the log and
    compare with the live snapshot" a meaningful check.
    """

    case_id: str
    guideline_id: str
    deployment_version: int
    document_version: str
    patient_ref: str
    status: str
    outcome: str | None
    created_at: str
    updated_at: str
    event_count: int
    task_states: dict[str, str]
    bindings: dict[str, Any]
    result_flags: dict[str, str]
    taken_branches: dict[str, str]
    work_items: tuple[dict[str, Any], ...]
    pending_timers: tuple[dict[str, Any], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "guideline_id": self.guideline_id,
            "deployment_version": self.deployment_version,
            "document_version": self.document_version,
            "patient_ref": self.patient_ref,
            "status": self.status,
            "outcome": self.outcome,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "event_count": self.event_count,
            "task_states": dict(self.task_states),
            "bindings": dict(self.bindings),
            "result_flags": dict(self.result_flags),
            "taken_branches": dict(self.taken_branches),
            "work_items": [dict(item) for item in self.work_items],
            "pending_timers": [dict(t) for t in self.pending_timers],
        }


@dataclass
class _TimerRecord:
    timer_id: int
    purpose: str  # "wait" | "deadline"
    task_id: str
    item_id: str | None
    due_at: datetime
    window_end: datetime | None
    pending: bool = True


class EventSink(Protocol):
    """Where emitted events go. Implementations must not call back into
    the engine: appends happen while the case lock is held."""

    def append(self, event: EngineEvent, *, actor: str | None = None,
               raw: bytes | None = None,
               extra: dict[str, Any] | None = None) -> None: ...


class _NullSink:
    def append(self, event: EngineEvent, *, actor: str | None = None,
               raw: bytes | None = None,
               extra: dict[str, Any] | None = None) -> None:
        pass


# --------------------------------------------------------------------------
# case state and the single apply() used by live runs, fold, and restore

class _Case:
    """Mutable state of one case, changed only by applying events."""

    def __init__(self, case_id: str, definition: GuidelineDefinition):
        self.case_id = case_id
        self.definition = definition
        self.lock = threading.Lock()
        self.seq = 0
        self.status = CaseStatus.RUNNING
        self.outcome: str | None = None
        self.guideline_id = definition.id
        self.deployment_version = 0
        self.document_version = definition.version
        self.patient_ref = ""
        self.created_at: datetime | None = None
        self.updated_at: datetime | None = None
        self.task_states: dict[str, TaskState] = {
            t.id: TaskState.DORMANT for t in definition.tasks
        }
        self.edge_states: list[str] = [_UNRESOLVED] * len(definition.edges)
        self.bindings: dict[str, Any] = {}
        self.result_flags: dict[str, str] = {}
        self.taken_branches: dict[str, str] = {}
        self.items: dict[str, WorkItem] = {}
        self.progress: dict[str, dict[str, str]] = {}
        self.timers: dict[int, _TimerRecord] = {}
        self.pending_deadlines: dict[str, datetime] = {}
        self.anchor_completions: dict[str, datetime] = {}
        self.orders_count = 0
        # edge indices by endpoint, fixed for the definition
        self.outgoing_idx: dict[str, tuple[int, ...]] = {}
        self.incoming_idx: dict[str, tuple[int, ...]] = {}
        for task in definition.tasks:
            self.outgoing_idx[task.id] = tuple(
                i for i, e in enumerate(definition.edges) if e.from_task == task.id
            )
            self.incoming_idx[task.id] = tuple(
                i for i, e in enumerate(definition.edges) if e.to_task == task.id
            )

    # -- applying events ----------------------------------------------------

    def apply(self, event: EngineEvent) -> None:
        if event.seq != self.seq + 1:
            raise EngineError(
                f"sequence gap in {self.case_id}: expected {self.seq + 1}, "
                f"got {event.seq}"
            )
        self.seq = event.seq
        self.updated_at = event.at
        handler = getattr(self, "_apply_" + event.kind.name.lower(), None)
        if handler is not None:
            handler(event.at, event.detail)

    def _set_edges(self, indices: Iterable[int], state: str) -> None:
        for index in indices:
            self.edge_states[index] = state

    def _apply_case_started(self, at: datetime, d: dict) -> None:
        self.created_at = at
        self.guideline_id = d["guideline_id"]
        self.deployment_version = d["deployment_version"]
        self.document_version = d["document_version"]
        self.patient_ref = d["patient_ref"]

    def _apply_task_enabled(self, at: datetime, d: dict) -> None:
        task_id = d["task_id"]
        self.task_states[task_id] = TaskState.ENABLED
        self.pending_deadlines.pop(task_id, None)
        # A fresh round: this task's own edges are unresolved again, and
        # the firings that brought control here are consumed.
        self._set_edges(self.outgoing_idx[task_id], _UNRESOLVED)
        for index in self.incoming_idx[task_id]:
            if self.edge_states[index] == _FIRED:
                self.edge_states[index] = _UNRESOLVED

    def _apply_task_completed(self, at: datetime, d: dict) -> None:
        task_id = d["task_id"]
        self.task_states[task_id] = TaskState.COMPLETED
        self.anchor_completions[task_id] = at
        if "branch" in d:
            self.taken_branches[task_id] = d["branch"]
        self._set_edges(d.get("fired", ()), _FIRED)
        self._set_edges(d.get("dead", ()), _DEAD)
        self._set_edges(d.get("deferred", ()), _DEFERRED)
        self._set_edges(d.get("resolved_fired", ()), _FIRED)
        self._set_edges(d.get("resolved_dead", ()), _DEAD)
        self._set_edges(d.get("resolved_held", ()), _UNRESOLVED)
        if "window_end" in d:
            window_end = parse_instant(d["window_end"])
            definition_edges = self.definition.edges
            for index in d.get("fired", ()):
                self.pending_deadlines[definition_edges[index].to_task] = window_end

    def _apply_task_skipped(self, at: datetime, d: dict) -> None:
        self.task_states[d["task_id"]] = TaskState.SKIPPED
        self._set_edges(d.get("dead", ()), _DEAD)

    def _apply_work_item_created(self, at: datetime, d: dict) -> None:
        item = WorkItem(
            item_id=d["item_id"],
            case_id=self.case_id,
            task_id=d["task_id"],
            role=d["role"],
            state=WorkItemState.NOTIFIED,
            created_at=at,
            deadline=parse_instant(d["deadline"]) if d.get("deadline") else None,
            payload=d.get("payload", {}),
        )
        self.items[item.item_id] = item
        task = self.definition.task(item.task_id)
        if task.kind is TaskKind.ENQUIRY:
            self.progress.setdefault(item.item_id, {})

    def _apply_work_item_started(self, at: datetime, d: dict) -> None:
        item = self.items[d["item_id"]]
        item.state = WorkItemState.IN_PROGRESS
        item.assignee = d.get("assignee")
        self.task_states[item.task_id] = TaskState.IN_PROGRESS

    def _apply_work_item_completed(self, at: datetime, d: dict) -> None:
        item = self.items[d["item_id"]]
        item.state = WorkItemState.COMPLETED
        self.bindings.update(d.get("outputs", {}))

    def _apply_work_item_cancelled(self, at: datetime, d: dict) -> None:
        item = self.items[d["item_id"]]
        item.state = WorkItemState.CANCELLED
        if self.task_states[item.task_id] in (TaskState.ENABLED, TaskState.IN_PROGRESS):
            self.task_states[item.task_id] = TaskState.CANCELLED

    def _apply_work_item_expired(self, at: datetime, d: dict) -> None:
        self.items[d["item_id"]].state = WorkItemState.EXPIRED

    def _apply_timer_scheduled(self, at: datetime, d: dict) -> None:
        self.timers[d["timer_id"]] = _TimerRecord(
            timer_id=d["timer_id"],
            purpose=d["purpose"],
            task_id=d["task_id"],
            item_id=d.get("item_id"),
            due_at=parse_instant(d["due_at"]),
            window_end=parse_instant(d["window_end"]) if d.get("window_end") else None,
        )

    def _apply_timer_fired(self, at: datetime, d: dict) -> None:
        self.timers[d["timer_id"]].pending = False

    def _apply_timer_cancelled(self, at: datetime, d: dict) -> None:
        record = self.timers.get(d["timer_id"])
        if record is not None:
            record.pending = False

    def _apply_decision_taken(self, at: datetime, d: dict) -> None:
        self.taken_branches[d["task_id"]] = d["branch"]

    def _apply_scene_answered(self, at: datetime, d: dict) -> None:
        self.bindings[d["question_id"]] = d["option"]
        self.progress.setdefault(d["item_id"], {})[d["question_id"]] = d["option"]
        self._set_edges(d.get("resolved_fired", ()), _FIRED)
        self._set_edges(d.get("resolved_dead", ()), _DEAD)
        self._set_edges(d.get("resolved_held", ()), _UNRESOLVED)

    def _apply_data_bound(self, at: datetime, d: dict) -> None:
        self.bindings[d["item"]] = d["value"]
        if d.get("flag") is not None:
            self.result_flags[d["item"]] = d["flag"]
        self._set_edges(d.get("resolved_fired", ()), _FIRED)
        self._set_edges(d.get("resolved_dead", ()), _DEAD)
        self._set_edges(d.get("resolved_held", ()), _UNRESOLVED)

    def _apply_order_placed(self, at: datetime, d: dict) -> None:
        self.orders_count += 1

    def _apply_case_aborted(self, at: datetime, d: dict) -> None:
        self.status = CaseStatus.ABORTED

    def _apply_case_completed(self, at: datetime, d: dict) -> None:
        self.status = CaseStatus.COMPLETED
        self.outcome = d.get("outcome")

    # -- derived views ------------------------------------------------------

    def live_items(self, task_id: str | None = None) -> list[WorkItem]:
        return [
            item
            for item in sorted(self.items.values(), key=lambda i: i.item_id)
            if item.state in LIVE_ITEM_STATES
            and (task_id is None or item.task_id == task_id)
        ]

    def view(self) -> CaseView:
        pending = [
            {
                "timer_id": r.timer_id,
                "purpose": r.purpose,
                "task_id": r.task_id,
                "item_id": r.item_id,
                "due_at": isoformat(r.due_at),
                "window_end": isoformat(r.window_end) if r.window_end else None,
            }
            for r in sorted(self.timers.values(), key=lambda r: r.timer_id)
            if r.pending
        ]
        return CaseView(
            case_id=self.case_id,
            guideline_id=self.guideline_id,
            deployment_version=self.deployment_version,
            document_version=self.document_version,
            patient_ref=self.patient_ref,
            status=self.status.value,
            outcome=self.outcome,
            created_at=isoformat(self.created_at) if self.created_at else "",
            updated_at=isoformat(self.updated_at) if self.updated_at else "",
            event_count=self.seq,
            task_states={t: s.value for t, s in self.task_states.items()},
            bindings=dict(self.bindings),
            result_flags=dict(self.result_flags),
            taken_branches=dict(self.taken_branches),
            work_items=tuple(
                item.to_dict()
                for item in sorted(self.items.values(), key=lambda i: i.item_id)
            ),
            pending_timers=tuple(pending),
        )


@dataclass(frozen=True)
class Deployment:
    definition: GuidelineDefinition
    version: int
    cyclic_tasks: frozenset[str]
    order_items: dict[str, str]  # test code -> data item id


def _tasks_on_cycles(definition: GuidelineDefinition) -> frozenset[str]:
    """Ids of tasks that lie on any cycle, loop edges included."""
    adjacency: dict[str, list[str]] = {t.id: [] for t in definition.tasks}
    for edge in definition.edges:
        if edge.from_task in adjacency:
            adjacency[edge.from_task].append(edge.to_task)
    cyclic: set[str] = set()
    for start in adjacency:
        stack = list(adjacency[start])
        seen: set[str] = set()
        while stack:
            node = stack.pop()
            if node == start:
                cyclic.add(start)
                break
            if node in seen or node not in adjacency:
                continue
            seen.add(node)
            stack.extend(adjacency[node])
    return frozenset(cyclic)


# --------------------------------------------------------------------------
# the engine

class Engine:
    """Deploys definitions and drives cases against the shared scheduler."""

    def __init__(self, scheduler: Scheduler, sink: EventSink | None = None,
                 order_encoder: Callable[[OrderRequest], bytes | None] | None = None):
        self.scheduler = scheduler
        self.sink: EventSink = sink if sink is not None else _NullSink()
        self.order_encoder = order_encoder
        self._registry_lock = threading.Lock()
        self._deployments: dict[str, list[Deployment]] = {}
        self._cases: dict[str, _Case] = {}
        self._case_deployment: dict[str, Deployment] = {}
        self._items_index: dict[str, str] = {}
        self._case_counter = 0

    # -- deployment ---------------------------------------------------------

    def deploy(self, definition: GuidelineDefinition) -> Deployment:
        """Validate and register a definition; errors block deployment."""
        report = validate(definition)
        if not report.is_deployable:
            raise DeploymentBlocked(report)
        for finding in report.warnings:
            logger.warning("deploy %s: %s", definition.id, finding.message)
        order_items = {
            item.test_code: item.id
            for item in definition.data_items
            if item.test_code
        }
        with self._registry_lock:
            versions = self._deployments.setdefault(definition.id, [])
            deployment = Deployment(
                definition=definition,
                version=len(versions) + 1,
                cyclic_tasks=_tasks_on_cycles(definition),
                order_items=order_items,
            )
            versions.append(deployment)
            return deployment

    def get_deployment(self, guideline_id: str,
                       version: int | None = None) -> Deployment:
        with self._registry_lock:
            versions = self._deployments.get(guideline_id)
            if not versions:
                raise UnknownGuideline(f"no guideline deployed as {guideline_id!r}")
            if version is None:
                return versions[-1]
            for deployment in versions:
                if deployment.version == version:
                    return deployment
            raise UnknownGuideline(
                f"guideline {guideline_id!r} has no version {version}"
            )

    def list_deployments(self) -> list[Deployment]:
        with self._registry_lock:
            return [d for versions in self._deployments.values() for d in versions]

    # -- event emission -----------------------------------------------------

    def _emit(self, case: _Case, kind: EventKind, detail: dict[str, Any],
              at: datetime, actor: str | None = None, raw: bytes | None = None,
              extra: dict[str, Any] | None = None) -> EngineEvent:
        event = EngineEvent(
            case_id=case.case_id, seq=case.seq + 1, at=at, kind=kind, detail=detail
        )
        self.sink.append(event, actor=actor, raw=raw, extra=extra)
        case.apply(event)
        if kind is EventKind.WORK_ITEM_CREATED:
            self._items_index[detail["item_id"]] = case.case_id
        return event

    # -- case lookup --------------------------------------------------------

    def _case(self, case_id: str) -> _Case:
        with self._registry_lock:
            case = self._cases.get(case_id)
        if case is None:
            raise UnknownCase(f"no case {case_id!r}")
        return case

    def _require_running(self, case: _Case) -> None:
        if case.status is not CaseStatus.RUNNING:
            raise CaseNotRunning(
                f"case {case.case_id} is {case.status.value.lower()}"
            )

    # -- operations ---------------------------------------------------------

    def start_case(self, guideline_id: str, patient_ref: str, at: datetime,
                   actor: str | None = None,
                   version: int | None = None) -> CaseView:
        deployment = self.get_deployment(guideline_id, version)
        with self._registry_lock:
            self._case_counter += 1
            case_id = f"case-{self._case_counter:04d}"
            case = _Case(case_id, deployment.definition)
            self._cases[case_id] = case
            self._case_deployment[case_id] = deployment
        with case.lock:
            self._emit(case, EventKind.CASE_STARTED, {
                "guideline_id": guideline_id,
                "deployment_version": deployment.version,
                "document_version": deployment.definition.version,
                "patient_ref": patient_ref,
            }, at, actor=actor)
            self._propagate(case, deployment, at, actor)
            return case.view()

    def case_snapshot(self, case_id: str) -> CaseView:
        case = self._case(case_id)
        with case.lock:
            return case.view()

    def list_cases(self, status: str | None = None,
                   guideline_id: str | None = None) -> list[CaseView]:
        with self._registry_lock:
            cases = sorted(self._cases.values(), key=lambda c: c.case_id)
        views = []
        for case in cases:
            with case.lock:
                view = case.view()
            if status is not None and view.status != status:
                continue
            if guideline_id is not None and view.guideline_id != guideline_id:
                continue
            views.append(view)
        return views

    def list_work_items(self, role: str | None = None, case_id: str | None = None,
                        include_closed: bool = False) -> list[dict[str, Any]]:
        with self._registry_lock:
            cases = sorted(self._cases.values(), key=lambda c: c.case_id)
        out = []
        for case in cases:
            if case_id is not None and case.case_id != case_id:
                continue
            with case.lock:
                for item in sorted(case.items.values(), key=lambda i: i.item_id):
                    if not include_closed and item.state not in LIVE_ITEM_STATES:
                        continue
                    if role is not None and item.role != role:
                        continue
                    out.append(item.to_dict())
        return out

    def get_work_item(self, item_id: str) -> dict[str, Any]:
        case, item = self._find_item(item_id)
        with case.lock:
            return item.to_dict()

    def _find_item(self, item_id: str) -> tuple[_Case, WorkItem]:
        with self._registry_lock:
            owner = self._items_index.get(item_id)
        if owner is None:
            raise UnknownWorkItem(f"no work item {item_id!r}")
        case = self._case(owner)
        item = case.items.get(item_id)
        if item is None:
            raise UnknownWorkItem(f"no work item {item_id!r}")
        return case, item

    def start_work_item(self, item_id: str, at: datetime,
                        actor: str | None = None) -> dict[str, Any]:
        case, item = self._find_item(item_id)
        with case.lock:
            self._require_running(case)
            if item.state is WorkItemState.IN_PROGRESS:
                raise StaleWorkItem(f"{item_id} already started")
            if item.state not in (WorkItemState.NOTIFIED, WorkItemState.EXPIRED):
                raise StaleWorkItem(f"{item_id} is {item.state.value.lower()}")
            self._emit(case, EventKind.WORK_ITEM_STARTED, {
                "item_id": item_id,
                "task_id": item.task_id,
                "assignee": actor,
            }, at, actor=actor)
            return item.to_dict()

    def complete_work_item(self, item_id: str, outputs: dict[str, Any],
                           at: datetime, actor: str | None = None) -> CaseView:
        """Finish one work item, binding its outputs and moving the case on.

        Enquiry items may be completed directly by supplying every still
        unanswered characteristic; the score is recomputed here, never
        accepted from the caller.
        """
        case, item = self._find_item(item_id)
        deployment = self._deployment_of(case)
        with case.lock:
            self._require_running(case)
            if item.state not in LIVE_ITEM_STATES:
                raise StaleWorkItem(f"{item_id} is {item.state.value.lower()}")
            task = case.definition.task(item.task_id)
            bound = self._validated_outputs(case, task, item, outputs)
            self._emit(case, EventKind.WORK_ITEM_COMPLETED, {
                "item_id": item_id,
                "task_id": task.id,
                "outputs": bound,
            }, at, actor=actor)
            self._cancel_item_timers(case, item_id, at, "work item completed")
            if task.kind is TaskKind.DECISION:
                self._take_decision(case, deployment, task, at, actor, auto=False)
            else:
                self._complete_task(case, deployment, task, at, actor=actor)
            self._propagate(case, deployment, at, actor)
            return case.view()

    def answer_scene(self, case_id: str, question_id: str, option: str,
                     at: datetime, actor: str | None = None) -> SceneState:
        """Record one survey answer; returns the next scene or completion.

        When the last characteristic is answered the enquiry completes in
        the same call: score computed, work item closed, flow moved on.
        """
        started = time.perf_counter()
        case = self._case(case_id)
        deployment = self._deployment_of(case)
        with case.lock:
            self._require_running(case)
            candidates = [
                item for item in case.live_items()
                if case.definition.task(item.task_id).kind is TaskKind.ENQUIRY
            ]
            if not candidates:
                raise NoActiveSurvey(f"case {case_id} has no open survey")
            item = candidates[0]
            task = case.definition.task(item.task_id)
            score_def = ScoreDefinition(task.questions, task.threshold or 0)
            question = score_def.characteristic(question_id)  # raises if unknown
            answered = case.progress.get(item.item_id, {})
            if question_id in answered:
                raise AlreadyAnswered(
                    f"{question_id!r} already answered in {item.item_id}"
                )
            # validate the option against this characteristic
            if option not in {o.label for o in question.options}:
                raise UnknownOption(question_id, option)
            merged = dict(answered)
            merged[question_id] = option
            scene = next_scene(score_def, SurveyResponse(answers=merged))
            complete = scene.question is None
            detail: dict[str, Any] = {
                "task_id": task.id,
                "item_id": item.item_id,
                "question_id": question_id,
                "option": option,
                "answered": len(merged),
                "total": len(task.questions),
                "complete": complete,
            }
            if not complete:
                detail["next_question_id"] = scene.question.id
            self._merge_resolutions(case, detail, extra={question_id: option})
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            self._emit(case, EventKind.SCENE_ANSWERED, detail, at, actor=actor,
                       extra={"processing_ms": round(elapsed_ms, 3)})
            if complete:
                responses = case.progress.get(item.item_id, {})
                result = compute_score(score_def, SurveyResponse(answers=dict(responses)))
                outputs: dict[str, Any] = {}
                if task.score_item:
                    outputs[task.score_item] = result.total
                self._emit(case, EventKind.WORK_ITEM_COMPLETED, {
                    "item_id": item.item_id,
                    "task_id": task.id,
                    "outputs": outputs,
                }, at, actor=actor)
                self._cancel_item_timers(case, item.item_id, at, "survey complete")
                self._complete_task(case, deployment, task, at, actor=actor)
                self._propagate(case, deployment, at, actor)
            return scene

    def survey_state(self, case_id: str) -> SceneState | None:
        """Current scene of the open survey, if one is in flight."""
        case = self._case(case_id)
        with case.lock:
            for item in case.live_items():
                task = case.definition.task(item.task_id)
                if task.kind is TaskKind.ENQUIRY:
                    score_def = ScoreDefinition(task.questions, task.threshold or 0)
                    answers = dict(case.progress.get(item.item_id, {}))
                    return next_scene(score_def, SurveyResponse(answers=answers))
        return None

    def survey_role(self, case_id: str) -> str | None:
        """Role the open survey is addressed to, if one is in flight."""
        case = self._case(case_id)
        with case.lock:
            for item in case.live_items():
                if case.definition.task(item.task_id).kind is TaskKind.ENQUIRY:
                    return item.role
        return None

    def deliver_clinical_event(self, event: ClinicalEvent, at: datetime,
                               raw: bytes | None = None) -> CaseView:
        """Bind one decoded EMR result into its case.

        Data arrival can resolve deferred guards and release waiting
        tasks, but never re-enables a completed one.
        """
        case = self._case(event.case_id)
        deployment = self._deployment_of(case)
        with case.lock:
            self._require_running(case)
            rebound = event.data_item in case.bindings
            detail: dict[str, Any] = {
                "item": event.data_item,
                "value": event.value,
                "flag": event.abnormal_flag,
                "test_code": event.test_code,
                "placer_order_id": event.placer_order_id,
                "filler_order_id": event.filler_order_id,
                "observed_at": isoformat(event.observed_at),
            }
            if rebound:
                detail["rebound"] = True
            if not event.expected:
                detail["expected"] = False
            self._merge_resolutions(case, detail, extra={event.data_item: event.value})
            self._emit(case, EventKind.DATA_BOUND, detail, at, raw=raw)
            level = "info" if event.expected and not rebound else "warning"
            message = f"result available: {event.data_item} = {event.value}"
            if not event.expected:
                message = f"duplicate result for {event.data_item}; rebound to latest"
            self._emit(case, EventKind.NOTIFICATION_RAISED, {
                "level": level,
                "reason": "result-available" if level == "info" else "duplicate-result",
                "message": message,
                "role": "doctor",
                "data_item": event.data_item,
            }, at)
            self._propagate(case, deployment, at, None)
            return case.view()

    def abort_case(self, case_id: str, reason: str, at: datetime,
                   actor: str | None = None) -> CaseView:
        """Stop a case: cancel live work items and timers, then mark it.

        Safe at any point in the run; the scheduler sweep also clears
        timers other components tagged with this case id.
        """
        case = self._case(case_id)
        with case.lock:
            self._require_running(case)
            self._cancel_open_work(case, at, "case aborted")
            self._emit(case, EventKind.CASE_ABORTED, {"reason": reason}, at,
                       actor=actor)
            return case.view()

    # -- internals ----------------------------------------------------------

    def _deployment_of(self, case: _Case) -> Deployment:
        with self._registry_lock:
            return self._case_deployment[case.case_id]

    def _validated_outputs(self, case: _Case, task: TaskNode, item: WorkItem,
                           outputs: dict[str, Any]) -> dict[str, Any]:
        """Check supplied outputs against declarations; order them stably."""
        definition = case.definition
        if task.kind is TaskKind.ENQUIRY:
            allowed = {q.id for q in task.questions}
            answered = case.progress.get(item.item_id, {})
            for key in outputs:
                if key not in allowed:
                    raise UndeclaredOutput(
                        f"{key!r} is not a characteristic of {task.id}"
                    )
                if key in answered:
                    raise AlreadyAnswered(f"{key!r} already answered")
            missing = [
                q.id for q in task.questions
                if q.id not in answered and q.id not in outputs
            ]
            if missing:
                raise MissingOutput(
                    f"unanswered characteristics: {', '.join(missing)}"
                )
            merged = dict(answered)
            score_def = ScoreDefinition(task.questions, task.threshold or 0)
            for q in task.questions:
                if q.id in outputs:
                    value = outputs[q.id]
                    if not isinstance(value, str):
                        raise InvalidOutputValue(f"{q.id!r} takes an option label")
                    if value not in {o.label for o in q.options}:
                        raise UnknownOption(q.id, value)
                    merged[q.id] = value
            result = compute_score(score_def, SurveyResponse(answers=merged))
            bound: dict[str, Any] = {
                q.id: outputs[q.id] for q in task.questions if q.id in outputs
            }
            if task.score_item:
                bound[task.score_item] = result.total
            return bound
        declared = list(task.outputs)
        for key in outputs:
            if key not in declared:
                raise UndeclaredOutput(f"{key!r} is not an output of {task.id}")
        missing = [key for key in declared if key not in outputs]
        if missing:
            raise MissingOutput(f"missing outputs: {', '.join(missing)}")
        bound = {}
        for key in declared:
            bound[key] = self._check_value(definition, key, outputs[key])
        return bound

    def _check_value(self, definition: GuidelineDefinition, item_id: str,
                     value: Any) -> Any:
        try:
            decl = definition.item(item_id)
        except KeyError:
            raise UndeclaredOutput(f"{item_id!r} is not a declared data item")
        vt = decl.value_type
        if vt is ValueType.NUMBER:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidOutputValue(f"{item_id!r} takes a number")
        elif vt is ValueType.BOOLEAN:
            if not isinstance(value, bool):
                raise InvalidOutputValue(f"{item_id!r} takes a boolean")
        elif vt is ValueType.TEXT:
            if not isinstance(value, str):
                raise InvalidOutputValue(f"{item_id!r} takes text")
        elif vt is ValueType.ENUMERATION:
            if not isinstance(value, str) or value not in decl.labels:
                raise InvalidOutputValue(
                    f"{item_id!r} takes one of: {', '.join(decl.labels)}"
                )
        return value

    def _merge_resolutions(self, case: _Case, detail: dict[str, Any],
                           extra: dict[str, Any] | None = None) -> None:
        """Re-evaluate deferred edges as if ``extra`` were already bound,
        recording the outcomes into ``detail`` for apply to enact."""
        deployment = self._deployment_of(case)
        bindings = dict(case.bindings)
        if extra:
            bindings.update(extra)
        fired: list[int] = []
        dead: list[int] = []
        held: list[int] = []
        for index, edge in enumerate(case.definition.edges):
            if case.edge_states[index] != _DEFERRED:
                continue
            try:
                taken = eval_condition(edge.condition, bindings)
            except UnboundDataItem:
                continue
            if taken:
                fired.append(index)
            elif edge.from_task in deployment.cyclic_tasks:
                held.append(index)
            else:
                dead.append(index)
        if fired:
            detail["resolved_fired"] = fired
        if dead:
            detail["resolved_dead"] = dead
        if held:
            detail["resolved_held"] = held

    def _take_decision(self, case: _Case, deployment: Deployment, task: TaskNode,
                       at: datetime, actor: str | None, auto: bool) -> None:
        chosen = None
        for branch in task.branches:
            try:
                if eval_condition(branch.condition, case.bindings):
                    chosen = branch.label
                    break
            except UnboundDataItem as exc:
                self._emit(case, EventKind.NOTIFICATION_RAISED, {
                    "level": "warning",
                    "reason": "unbound-branch-condition",
                    "message": (
                        f"branch {branch.label!r} of {task.id} needs "
                        f"{exc.item!r}, which is unbound; treated as not satisfied"
                    ),
                    "role": "doctor",
                    "task_id": task.id,
                }, at, actor=actor)
        if chosen is None:
            # The validator requires a catch-all last branch, so this is
            # only reachable on definitions deployed around it.
            chosen = task.branches[-1].label if task.branches else ""
        self._emit(case, EventKind.DECISION_TAKEN, {
            "task_id": task.id,
            "branch": chosen,
            "auto": auto,
        }, at, actor=actor)
        self._complete_task(case, deployment, task, at, branch=chosen, actor=actor)

    def _complete_task(self, case: _Case, deployment: Deployment, task: TaskNode,
                       at: datetime, branch: str | None = None,
                       actor: str | None = None) -> None:
        """Emit completion with edge outcomes, place orders, handle cycles."""
        definition = case.definition
        on_cycle = task.id in deployment.cyclic_tasks
        fired: list[int] = []
        dead: list[int] = []
        held: list[int] = []
        deferred: list[int] = []
        for index in case.outgoing_idx[task.id]:
            edge = definition.edges[index]
            if edge.branch is not None:
                taken = edge.branch == branch
            elif edge.condition is not None:
                try:
                    taken = eval_condition(edge.condition, case.bindings)
                except UnboundDataItem:
                    deferred.append(index)
                    continue
            else:
                taken = True
            if taken:
                fired.append(index)
            elif on_cycle:
                held.append(index)
            else:
                dead.append(index)
        detail: dict[str, Any] = {"task_id": task.id}
        if branch is not None:
            detail["branch"] = branch
        if fired:
            detail["fired"] = fired
        if dead:
            detail["dead"] = dead
        if held:
            detail["held"] = held
        if deferred:
            detail["deferred"] = deferred
        if task.kind is TaskKind.WAIT and task.temporal and task.temporal.max_delay:
            anchor_at = case.anchor_completions.get(task.temporal.anchor)
            if anchor_at is not None:
                window_end = anchor_at + task.temporal.max_delay
                detail["window_end"] = isoformat(max(window_end, at))
        if task.kind is TaskKind.TERMINAL and task.outcome:
            detail["outcome"] = task.outcome
        self._merge_resolutions(case, detail)
        self._emit(case, EventKind.TASK_COMPLETED, detail, at, actor=actor)
        for code in task.orders:
            self._place_order(case, deployment, task, code, at, actor)
        if task.kind is TaskKind.TERMINAL:
            self._finish_case(case, task, at, actor)
            return
        # Control flowing back into an already-finished task starts its
        # next round immediately; this is how loop edges re-enter.
        for index in fired:
            target = definition.edges[index].to_task
            if case.task_states[target] in (TaskState.COMPLETED, TaskState.SKIPPED):
                self._enable_task(case, deployment, definition.task(target), at,
                                  actor, reentry=True)

    def _place_order(self, case: _Case, deployment: Deployment, task: TaskNode,
                     test_code: str, at: datetime, actor: str | None) -> None:
        placer_id = f"{case.case_id}-O{case.orders_count + 1:02d}"
        order = OrderRequest(
            case_id=case.case_id,
            patient_ref=case.patient_ref,
            placer_order_id=placer_id,
            test_code=test_code,
            requested_at=at,
        )
        raw = self.order_encoder(order) if self.order_encoder else None
        self._emit(case, EventKind.ORDER_PLACED, {
            "task_id": task.id,
            "test_code": test_code,
            "data_item": deployment.order_items.get(test_code),
            "placer_order_id": placer_id,
        }, at, actor=actor, raw=raw)

    def _enable_task(self, case: _Case, deployment: Deployment, task: TaskNode,
                     at: datetime, actor: str | None, reentry: bool = False) -> None:
        deadline = case.pending_deadlines.get(task.id)
        if task.temporal and task.temporal.max_delay and task.kind is not TaskKind.WAIT:
            anchor_at = case.anchor_completions.get(task.temporal.anchor)
            if anchor_at is not None:
                own = anchor_at + task.temporal.max_delay
                deadline = own if deadline is None else min(deadline, own)
        detail: dict[str, Any] = {"task_id": task.id}
        if reentry:
            detail["reentry"] = True
        self._emit(case, EventKind.TASK_ENABLED, detail, at, actor=actor)
        if case.status is not CaseStatus.RUNNING:
            return
        if task.role:
            self._create_work_item(case, task, at, actor, deadline)
            return
        # No role: the engine performs the task itself.
        if task.kind is TaskKind.WAIT:
            self._schedule_wait(case, task, at)
        elif task.kind is TaskKind.DECISION:
            self._take_decision(case, deployment, task, at, actor, auto=True)
        else:
            self._complete_task(case, deployment, task, at, actor=actor)

    def _create_work_item(self, case: _Case, task: TaskNode, at: datetime,
                          actor: str | None, deadline: datetime | None) -> None:
        item_id = f"{case.case_id}-wi-{len(case.items) + 1:02d}"
        payload: dict[str, Any] = {
            "inputs": {
                input_id: case.bindings.get(input_id) for input_id in task.inputs
            },
        }
        flags = {
            input_id: case.result_flags[input_id]
            for input_id in task.inputs
            if input_id in case.result_flags
        }
        if flags:
            payload["flags"] = flags
        if task.kind is TaskKind.ENQUIRY:
            payload["questions"] = [
                {
                    "id": q.id,
                    "prompt": q.prompt,
                    "options": [o.label for o in q.options],
                }
                for q in task.questions
            ]
        if task.kind is TaskKind.DECISION:
            payload["branches"] = [b.label for b in task.branches]
        if task.outputs:
            payload["outputs"] = list(task.outputs)
        self._emit(case, EventKind.WORK_ITEM_CREATED, {
            "item_id": item_id,
            "task_id": task.id,
            "role": task.role,
            "deadline": isoformat(deadline) if deadline else None,
            "payload": payload,
        }, at)
        if deadline is not None:
            due = max(deadline, at)
            timer = self.scheduler.schedule(
                case_id=case.case_id,
                task_id=task.id,
                due_at=due,
                callback=self._deadline_callback(case.case_id, item_id),
            )
            self._emit(case, EventKind.TIMER_SCHEDULED, {
                "timer_id": timer.timer_id,
                "purpose": "deadline",
                "task_id": task.id,
                "item_id": item_id,
                "due_at": isoformat(due),
            }, at)

    def _schedule_wait(self, case: _Case, task: TaskNode, at: datetime) -> None:
        temporal = task.temporal
        anchor_at = case.anchor_completions.get(temporal.anchor, at) if temporal else at
        min_delay = temporal.min_delay if temporal else timedelta(0)
        due = max(at, anchor_at + min_delay)
        window_end = None
        if temporal and temporal.max_delay is not None:
            window_end = max(due, anchor_at + temporal.max_delay)
        timer = self.scheduler.schedule(
            case_id=case.case_id,
            task_id=task.id,
            due_at=due,
            window_end=window_end,
            callback=self._wait_callback(case.case_id, task.id),
        )
        detail: dict[str, Any] = {
            "timer_id": timer.timer_id,
            "purpose": "wait",
            "task_id": task.id,
            "due_at": isoformat(due),
        }
        if window_end is not None:
            detail["window_end"] = isoformat(window_end)
        self._emit(case, EventKind.TIMER_SCHEDULED, detail, at)

    def _wait_callback(self, case_id: str, task_id: str) -> Callable[[Timer], None]:
        def fire(timer: Timer) -> None:
            case = self._case(case_id)
            deployment = self._deployment_of(case)
            with case.lock:
                if case.status is not CaseStatus.RUNNING:
                    return
                record = case.timers.get(timer.timer_id)
                if record is None or not record.pending:
                    return
                self._emit(case, EventKind.TIMER_FIRED, {
                    "timer_id": timer.timer_id,
                    "purpose": "wait",
                    "task_id": task_id,
                }, timer.due_at)
                task = case.definition.task(task_id)
                self._complete_task(case, deployment, task, timer.due_at)
                self._propagate(case, deployment, timer.due_at, None)
        return fire

    def _deadline_callback(self, case_id: str, item_id: str) -> Callable[[Timer], None]:
        def fire(timer: Timer) -> None:
            case = self._case(case_id)
            with case.lock:
                if case.status is not CaseStatus.RUNNING:
                    return
                record = case.timers.get(timer.timer_id)
                if record is None or not record.pending:
                    return
                item = case.items.get(item_id)
                if item is None or item.state not in (
                    WorkItemState.NOTIFIED, WorkItemState.IN_PROGRESS
                ):
                    return
                self._emit(case, EventKind.TIMER_FIRED, {
                    "timer_id": timer.timer_id,
                    "purpose": "deadline",
                    "task_id": item.task_id,
                    "item_id": item_id,
                }, timer.due_at)
                self._emit(case, EventKind.WORK_ITEM_EXPIRED, {
                    "item_id": item_id,
                    "task_id": item.task_id,
                }, timer.due_at)
                self._emit(case, EventKind.NOTIFICATION_RAISED, {
                    "level": "warning",
                    "reason": "deadline-expired",
                    "message": (
                        f"work item {item_id} ({item.task_id}) passed its "
                        f"deadline and is still open"
                    ),
                    "role": item.role,
                    "task_id": item.task_id,
                    "item_id": item_id,
                }, timer.due_at)
        return fire

    def _cancel_item_timers(self, case: _Case, item_id: str, at: datetime,
                            reason: str) -> None:
        for record in sorted(case.timers.values(), key=lambda r: r.timer_id):
            if record.pending and record.item_id == item_id:
                previous = self.scheduler.cancel(record.timer_id)
                if previous is TimerState.PENDING:
                    self._emit(case, EventKind.TIMER_CANCELLED, {
                        "timer_id": record.timer_id,
                        "reason": reason,
                    }, at)

    def _cancel_open_work(self, case: _Case, at: datetime, reason: str) -> None:
        for item in case.live_items():
            self._emit(case, EventKind.WORK_ITEM_CANCELLED, {
                "item_id": item.item_id,
                "task_id": item.task_id,
                "reason": reason,
            }, at)
        for record in sorted(case.timers.values(), key=lambda r: r.timer_id):
            if record.pending:
                previous = self.scheduler.cancel(record.timer_id)
                if previous is TimerState.PENDING:
                    self._emit(case, EventKind.TIMER_CANCELLED, {
                        "timer_id": record.timer_id,
                        "reason": reason,
                    }, at)
        # components other than the engine (the EMR simulator, say) tag
        # timers with the case id too; sweep those silently
        self.scheduler.cancel_case(case.case_id)

    def _finish_case(self, case: _Case, terminal: TaskNode, at: datetime,
                     actor: str | None) -> None:
        self._cancel_open_work(case, at, "case completed")
        self._emit(case, EventKind.CASE_COMPLETED, {
            "outcome": terminal.outcome,
            "task_id": terminal.id,
        }, at, actor=actor)

    # -- propagation --------------------------------------------------------

    def _join_satisfied(self, case: _Case, task: TaskNode) -> bool:
        incoming = case.incoming_idx[task.id]
        non_loop = [
            i for i in incoming if not case.definition.edges[i].loop
        ]
        if not non_loop:
            # Only the entry task starts without inbound control.
            return task.id == case.definition.entry_task
        if any(case.edge_states[i] not in (_FIRED, _DEAD) for i in non_loop):
            return False
        return any(case.edge_states[i] == _FIRED for i in incoming)

    def _precondition_ready(self, case: _Case, task: TaskNode) -> bool:
        if task.precondition is None:
            return True
        try:
            return eval_condition(task.precondition, case.bindings)
        except UnboundDataItem:
            return False

    def _skip_dead_paths(self, case: _Case, at: datetime,
                         actor: str | None) -> bool:
        """Eliminate every dormant task whose live inputs are all dead.

        Runs to a fixpoint so a whole unreachable region collapses in one
        wave — skipping a task kills its outgoing edges, which may doom
        its successors in turn.
        """
        definition = case.definition
        any_skipped = False
        skipping = True
        while skipping:
            skipping = False
            for task in definition.tasks:
                if case.task_states[task.id] is not TaskState.DORMANT:
                    continue
                non_loop = [
                    i for i in case.incoming_idx[task.id]
                    if not definition.edges[i].loop
                ]
                if non_loop and all(
                    case.edge_states[i] == _DEAD for i in non_loop
                ):
                    self._emit(case, EventKind.TASK_SKIPPED, {
                        "task_id": task.id,
                        "dead": list(case.outgoing_idx[task.id]),
                    }, at, actor=actor)
                    skipping = any_skipped = True
        return any_skipped

    def _propagate(self, case: _Case, deployment: Deployment, at: datetime,
                   actor: str | None) -> None:
        """Drive the case to a fixpoint: skip dead paths, enable ready tasks.

        Dead-path elimination reaches its own fixpoint before anything is
        enabled, so a terminal completing the case in this wave can never
        freeze half-eliminated branches into the final snapshot.
        Deterministic: tasks are visited in declaration order.
        """
        definition = case.definition
        while case.status is CaseStatus.RUNNING:
            changed = self._skip_dead_paths(case, at, actor)
            for task in definition.tasks:
                if case.task_states[task.id] is not TaskState.DORMANT:
                    continue
                if self._join_satisfied(case, task) and self._precondition_ready(case, task):
                    self._enable_task(case, deployment, task, at, actor)
                    changed = True
                    # Enabling may auto-complete the task and doom other
                    # branches; restart the wave so those are skipped
                    # before anything else fires.
                    break
            if not changed:
                return

    # -- replay and recovery ------------------------------------------------

    @staticmethod
    def fold(definition: GuidelineDefinition,
             events: Iterable[EngineEvent]) -> CaseView:
        """Rebuild a case snapshot purely from its event stream."""
        case: _Case | None = None
        for event in events:
            if case is None:
                case = _Case(event.case_id, definition)
            case.apply(event)
        if case is None:
            raise EngineError("cannot fold an empty event stream")
        return case.view()

    def restore_case(self, definition: GuidelineDefinition,
                     events: Iterable[EngineEvent], now: datetime,
                     deployment: Deployment | None = None) -> CaseView:
        """Recover a case from its log after a restart.

        State is rebuilt by replaying events; pending timers are
        re-registered under their original ids (overdue ones clamp to
        ``now`` and fire on the next advance). A final propagation pass
        finishes any wave a crash interrupted.
        """
        events = list(events)
        if not events:
            raise EngineError("cannot restore from an empty event stream")
        case = _Case(events[0].case_id, definition)
        for event in events:
            case.apply(event)
        if deployment is None:
            deployment = Deployment(
                definition=definition,
                version=case.deployment_version,
                cyclic_tasks=_tasks_on_cycles(definition),
                order_items={
                    item.test_code: item.id
                    for item in definition.data_items
                    if item.test_code
                },
            )
        with self._registry_lock:
            self._cases[case.case_id] = case
            self._case_deployment[case.case_id] = deployment
            for item_id in case.items:
                self._items_index[item_id] = case.case_id
            suffix = case.case_id.rsplit("-", 1)[-1]
            if suffix.isdigit():
                self._case_counter = max(self._case_counter, int(suffix))
            versions = self._deployments.setdefault(case.guideline_id, [])
            if all(d.version != deployment.version for d in versions):
                versions.append(deployment)
                versions.sort(key=lambda d: d.version)
        if case.status is CaseStatus.RUNNING:
            with case.lock:
                for record in sorted(case.timers.values(), key=lambda r: r.timer_id):
                    if not record.pending:
                        continue
                    due = max(record.due_at, now)
                    window_end = record.window_end
                    if window_end is not None and window_end < due:
                        window_end = due
                    callback = (
                        self._wait_callback(case.case_id, record.task_id)
                        if record.purpose == "wait"
                        else self._deadline_callback(case.case_id, record.item_id or "")
                    )
                    self.scheduler.schedule(
                        case_id=case.case_id,
                        task_id=record.task_id,
                        due_at=due,
                        window_end=window_end,
                        callback=callback,
                        timer_id=record.timer_id,
                    )
                self._propagate(case, deployment, now, None)
        with case.lock:
            return case.view()
