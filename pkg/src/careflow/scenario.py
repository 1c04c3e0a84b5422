"""Scripted case playback with trace verification.

A scenario file drives one case from start to finish — survey answers,
work-item completions, simulated lab results, virtual-time jumps — and
then checks the outcome against an ``expect`` block: final status and
bindings, counts of live work and pending timers, and optionally the
full event trace, position by position.

Scenarios run on a virtual clock with the EMR auto-responder off, so
every lab result arrives exactly when the script says it does and the
resulting event log is deterministic down to the timestamp.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TextIO

from .clock import isoformat, parse_instant
from .emr import EmrSimulator
from .engine import Engine, EngineError, LIVE_ITEM_STATES, CaseView
from .eventlog import EventLogEntry
from .hl7 import Hl7DecodeError
from .model import DurationError, parse_duration
from .runtime import Runtime, virtual_runtime
from .scoring import ScoringError

_ACTIONS = ("answer", "start", "complete", "emr_result", "advance", "abort")

_EXPECT_KEYS = (
    "status", "outcome", "task_states", "bindings", "result_flags",
    "taken_branches", "scene_transitions", "live_work_items",
    "pending_timers", "event_count", "events",
)


class ScenarioError(Exception):
    """The scenario file itself is unusable (bad JSON, unknown step)."""


@dataclass
class Scenario:
    title: str
    guideline_id: str
    patient: str
    document_text: str
    steps: list[dict[str, Any]]
    expect: dict[str, Any]
    path: Path | None = None


@dataclass
class ScenarioResult:
    title: str
    passed: bool
    failures: list[str] = field(default_factory=list)
    scene_transitions: int = 0
    event_count: int = 0
    elapsed: float = 0.0
    view: CaseView | None = None
    entries: list[EventLogEntry] = field(default_factory=list)


def load_scenario(path: str | Path) -> Scenario:
    """Read and structurally check a scenario file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be an object")

    for key in ("title", "guideline", "patient", "steps"):
        if key not in raw:
            raise ScenarioError(f"{path}: missing required key {key!r}")

    doc_path = raw.get("document_path")
    document = raw.get("document")
    if doc_path is not None:
        candidate = (path.parent / doc_path).resolve()
        try:
            document_text = candidate.read_text()
        except OSError as exc:
            raise ScenarioError(
                f"{path}: document_path {doc_path!r} unreadable: {exc}"
            ) from exc
    elif document is not None:
        document_text = json.dumps(document)
    else:
        raise ScenarioError(f"{path}: need document_path or an inline document")

    steps = raw["steps"]
    if not isinstance(steps, list):
        raise ScenarioError(f"{path}: steps must be a list")
    for i, step in enumerate(steps):
        if not isinstance(step, dict) or "action" not in step:
            raise ScenarioError(f"{path}: step {i + 1} has no action")
        if step["action"] not in _ACTIONS:
            raise ScenarioError(
                f"{path}: step {i + 1} has unknown action {step['action']!r}"
            )

    expect = raw.get("expect", {})
    if not isinstance(expect, dict):
        raise ScenarioError(f"{path}: expect must be an object")
    for key in expect:
        if key not in _EXPECT_KEYS:
            raise ScenarioError(f"{path}: unknown expect key {key!r}")

    return Scenario(
        title=raw["title"],
        guideline_id=raw["guideline"],
        patient=raw["patient"],
        document_text=document_text,
        steps=steps,
        expect=expect,
        path=path,
    )


def describe_entry(entry: EventLogEntry) -> str:
    """One trace line: sequence, instant, kind, and the interesting bits."""
    p = entry.payload
    extra = ""
    if "task_id" in p:
        extra = p["task_id"]
    elif "test_code" in p:
        extra = str(p["test_code"])
    if entry.kind == "CaseStarted":
        extra = f"{p.get('guideline_id')} {p.get('patient_ref')}"
    elif entry.kind == "SceneAnswered":
        extra = f"{p.get('question_id')}={p.get('option')}"
    elif entry.kind == "DecisionTaken":
        extra = f"{p.get('task_id')} -> {p.get('branch')}"
    elif entry.kind == "DataBound":
        extra = f"{p.get('item')}={p.get('value')!r}"
    elif entry.kind in ("CaseCompleted", "CaseAborted"):
        extra = p.get("outcome") or p.get("reason") or ""
    actor = f"  [{entry.actor}]" if entry.actor else ""
    return (f"{entry.case_seq:>4}  {isoformat(entry.at)}  "
            f"{entry.kind:<18} {extra}{actor}")


def _flatten(entry: EventLogEntry) -> dict[str, Any]:
    flat: dict[str, Any] = dict(entry.payload)
    flat["kind"] = entry.kind
    flat["at"] = isoformat(entry.at)
    flat["actor"] = entry.actor
    return flat


def _find_live_item(engine: Engine, case_id: str, task_id: str) -> str:
    items = [
        i for i in engine.list_work_items(case_id=case_id)
        if i["task_id"] == task_id and i["state"] in
        {s.value for s in LIVE_ITEM_STATES}
    ]
    if not items:
        raise EngineError(f"no live work item for task {task_id!r}")
    if len(items) > 1:
        raise EngineError(f"task {task_id!r} has {len(items)} live work items")
    return items[0]["item_id"]


def _run_step(rt: Runtime, case_id: str, patient: str,
              step: dict[str, Any]) -> None:
    action = step["action"]
    now = rt.now()
    if action == "answer":
        rt.engine.answer_scene(
            case_id, step["question"], step["option"], now,
            actor=step.get("by"),
        )
    elif action == "start":
        item_id = _find_live_item(rt.engine, case_id, step["task"])
        rt.engine.start_work_item(item_id, now, actor=step.get("by"))
    elif action == "complete":
        item_id = _find_live_item(rt.engine, case_id, step["task"])
        rt.engine.complete_work_item(
            item_id, step.get("outputs", {}), now, actor=step.get("by"))
    elif action == "emr_result":
        code = step["test_code"]
        orders = rt.bridge.outstanding(case_id, test_code=code)
        if not orders:
            raise EngineError(f"no outstanding order for test {code!r}")
        raw = EmrSimulator.build_result(
            orders[0].placer_order_id,
            step.get("patient", patient),
            code,
            step["value"],
            step.get("flag"),
            now,
        )
        ack, _ = rt.inbound_hl7(raw, at=now)
        if b"|AA|" not in ack:
            raise EngineError(f"result for {code!r} rejected: {ack!r}")
    elif action == "advance":
        if "by" in step:
            rt.advance_by(parse_duration(step["by"]))
        elif "to" in step:
            rt.advance_to(parse_instant(step["to"]))
        else:
            raise ScenarioError("advance step needs 'by' or 'to'")
    elif action == "abort":
        rt.engine.abort_case(
            case_id, step.get("reason", "scripted abort"), now,
            actor=step.get("by"),
        )


def _check_expectations(scenario: Scenario, view: CaseView,
                        entries: list[EventLogEntry],
                        transitions: int) -> list[str]:
    expect = scenario.expect
    failures: list[str] = []

    def check(label: str, want: Any, got: Any) -> None:
        if want != got:
            failures.append(f"{label}: expected {want!r}, got {got!r}")

    if "status" in expect:
        check("status", expect["status"], view.status)
    if "outcome" in expect:
        check("outcome", expect["outcome"], view.outcome)
    for key, actual in (
        ("task_states", view.task_states),
        ("bindings", view.bindings),
        ("result_flags", view.result_flags),
        ("taken_branches", view.taken_branches),
    ):
        for name, want in expect.get(key, {}).items():
            check(f"{key}[{name}]", want, actual.get(name))
    if "scene_transitions" in expect:
        check("scene_transitions", expect["scene_transitions"], transitions)
    if "live_work_items" in expect:
        live = sum(
            1 for i in view.work_items
            if i["state"] in {s.value for s in LIVE_ITEM_STATES}
        )
        check("live_work_items", expect["live_work_items"], live)
    if "pending_timers" in expect:
        check("pending_timers", expect["pending_timers"],
              len(view.pending_timers))
    if "event_count" in expect:
        check("event_count", expect["event_count"], len(entries))

    matchers = expect.get("events")
    if matchers is not None:
        for i, matcher in enumerate(matchers):
            if i >= len(entries):
                failures.append(
                    f"events[{i}]: expected {matcher!r} but the log ended "
                    f"after {len(entries)} events"
                )
                break
            flat = _flatten(entries[i])
            for key, want in matcher.items():
                if flat.get(key) != want:
                    failures.append(
                        f"events[{i}].{key}: expected {want!r}, got "
                        f"{flat.get(key)!r}\n"
                        f"    at: {describe_entry(entries[i])}"
                    )
                    break
            if failures:
                break
        else:
            if len(entries) > len(matchers):
                failures.append(
                    f"log has {len(entries)} events but only "
                    f"{len(matchers)} were expected; first extra:\n"
                    f"    {describe_entry(entries[len(matchers)])}"
                )
    return failures


def run_scenario(scenario: Scenario, *, trace: bool = False,
                 out: TextIO | None = None,
                 echo: Callable[[str], None] | None = None) -> ScenarioResult:
    """Play the scenario against a fresh virtual-clock runtime."""
    def say(line: str) -> None:
        if echo is not None:
            echo(line)
        elif out is not None:
            print(line, file=out)

    started = time.perf_counter()
    rt = virtual_runtime()
    result = ScenarioResult(title=scenario.title, passed=False)
    try:
        rt.deploy_document(scenario.document_text)
        case_id = rt.start_case(scenario.guideline_id, scenario.patient).case_id
        for i, step in enumerate(scenario.steps):
            try:
                _run_step(rt, case_id, scenario.patient, step)
            except (EngineError, Hl7DecodeError, DurationError,
                    ScoringError, ValueError) as exc:
                result.failures.append(
                    f"step {i + 1} ({step['action']}): {exc}")
                break

        entries = rt.store.read(case_id=case_id)
        view = rt.engine.case_snapshot(case_id)
        transitions = sum(
            1 for e in entries
            if e.kind == "SceneAnswered" and not e.payload.get("complete")
        )
        result.entries = entries
        result.view = view
        result.scene_transitions = transitions
        result.event_count = len(entries)

        if trace:
            for entry in entries:
                say(describe_entry(entry))

        if not result.failures:
            result.failures = _check_expectations(
                scenario, view, entries, transitions)
            # The log must always reproduce the live snapshot, whatever
            # the scenario author asked for.
            dep = rt.engine.get_deployment(scenario.guideline_id)
            folded = Engine.fold(dep.definition, rt.store.case_events(case_id))
            if folded != view:
                result.failures.append(
                    "folded event log does not reproduce the live snapshot")
    finally:
        rt.close()

    result.elapsed = time.perf_counter() - started
    result.passed = not result.failures
    return result


def run_scenario_file(path: str | Path, *, trace: bool = False,
                      out: TextIO | None = None) -> ScenarioResult:
    return run_scenario(load_scenario(path), trace=trace, out=out)
