"""Guideline document format: JSON text to definitions and back.

A document has four top-level keys — ``guideline`` (metadata and entry
task), ``data_items``, ``tasks``, ``edges``. Conditions are embedded as
infix strings (see :mod:`careflow.conditions`), durations as
``<integer><m|h|d>`` strings. ``parse`` only checks shape; semantic checks
(dangling references, typing, reachability) belong to
:func:`careflow.validation.validate`.

``serialize`` emits a canonical form: fixed key order, two-space indent,
defaults omitted, trailing newline. Two equal definitions always serialize
to identical bytes, and ``parse(serialize(d)) == d``.
"""

from __future__ import annotations

import json
from typing import Any

from .conditions import Condition, ConditionSyntaxError, parse_condition, render_condition
from .model import (
    Branch,
    DataItemDecl,
    DurationError,
    Edge,
    GuidelineDefinition,
    ItemSource,
    Option,
    Question,
    TaskKind,
    TaskNode,
    TemporalConstraint,
    ValueType,
    format_duration,
    parse_duration,
)


class DocumentError(Exception):
    """Base class for document parsing failures."""


class DocumentSyntaxError(DocumentError):
    """Malformed JSON or malformed embedded condition/duration text."""


class DuplicateKeyError(DocumentError):
    """The same key appeared twice within one JSON object."""

    def __init__(self, key: str):
        super().__init__(f"duplicate key {key!r} in document object")
        self.key = key


class UnknownTaskKindError(DocumentError):
    """A task's kind is outside the supported taxonomy."""

    def __init__(self, path: str, kind: object):
        super().__init__(f"{path}: unknown task kind {kind!r}")
        self.kind = kind


class DocumentStructureError(DocumentError):
    """A required key is missing or a value has the wrong shape."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise DuplicateKeyError(key)
        out[key] = value
    return out


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise DocumentStructureError(path, f"missing required key {key!r}")
    return obj[key]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise DocumentStructureError(path, f"expected a string, got {type(value).__name__}")
    return value


def _as_obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise DocumentStructureError(path, f"expected an object, got {type(value).__name__}")
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise DocumentStructureError(path, f"expected a list, got {type(value).__name__}")
    return value


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DocumentStructureError(path, f"expected an integer, got {type(value).__name__}")
    return value


def _condition(text: Any, path: str) -> Condition:
    source = _as_str(text, path)
    try:
        return parse_condition(source)
    except ConditionSyntaxError as exc:
        raise DocumentSyntaxError(f"{path}: {exc}") from exc


def _duration(text: Any, path: str):
    try:
        return parse_duration(_as_str(text, path))
    except DurationError as exc:
        raise DocumentSyntaxError(f"{path}: {exc}") from exc


def _parse_data_item(obj: dict, path: str) -> DataItemDecl:
    type_text = _as_str(_require(obj, "type", path), f"{path}.type")
    try:
        value_type = ValueType(type_text)
    except ValueError:
        raise DocumentStructureError(f"{path}.type", f"unknown value type {type_text!r}")
    source_text = _as_str(_require(obj, "source", path), f"{path}.source")
    try:
        source = ItemSource(source_text)
    except ValueError:
        raise DocumentStructureError(f"{path}.source", f"unknown source {source_text!r}")
    labels = tuple(
        _as_str(v, f"{path}.labels[{i}]")
        for i, v in enumerate(_as_list(obj.get("labels", []), f"{path}.labels"))
    )
    test_code = obj.get("test_code")
    if test_code is not None:
        test_code = _as_str(test_code, f"{path}.test_code")
    return DataItemDecl(
        id=_as_str(_require(obj, "id", path), f"{path}.id"),
        value_type=value_type,
        source=source,
        labels=labels,
        test_code=test_code,
    )


def _parse_question(obj: dict, path: str) -> Question:
    options = []
    for i, raw in enumerate(_as_list(_require(obj, "options", path), f"{path}.options")):
        opt = _as_obj(raw, f"{path}.options[{i}]")
        options.append(
            Option(
                label=_as_str(_require(opt, "label", f"{path}.options[{i}]"), f"{path}.options[{i}].label"),
                score=_as_int(_require(opt, "score", f"{path}.options[{i}]"), f"{path}.options[{i}].score"),
            )
        )
    return Question(
        id=_as_str(_require(obj, "id", path), f"{path}.id"),
        prompt=_as_str(_require(obj, "prompt", path), f"{path}.prompt"),
        options=tuple(options),
    )


def _parse_temporal(obj: dict, path: str) -> TemporalConstraint:
    max_delay = None
    if "max_delay" in obj:
        max_delay = _duration(obj["max_delay"], f"{path}.max_delay")
    return TemporalConstraint(
        anchor=_as_str(_require(obj, "anchor", path), f"{path}.anchor"),
        min_delay=_duration(_require(obj, "min_delay", path), f"{path}.min_delay"),
        max_delay=max_delay,
    )


def _parse_task(obj: dict, path: str) -> TaskNode:
    kind_text = _require(obj, "kind", path)
    try:
        kind = TaskKind(kind_text)
    except (ValueError, TypeError):
        raise UnknownTaskKindError(path, kind_text)
    role = obj.get("role")
    if role is not None:
        role = _as_str(role, f"{path}.role")
    precondition = None
    if "precondition" in obj:
        precondition = _condition(obj["precondition"], f"{path}.precondition")
    temporal = None
    if "temporal" in obj:
        temporal = _parse_temporal(_as_obj(obj["temporal"], f"{path}.temporal"), f"{path}.temporal")
    questions = tuple(
        _parse_question(_as_obj(raw, f"{path}.questions[{i}]"), f"{path}.questions[{i}]")
        for i, raw in enumerate(_as_list(obj.get("questions", []), f"{path}.questions"))
    )
    threshold = None
    if "threshold" in obj:
        threshold = _as_int(obj["threshold"], f"{path}.threshold")
    score_item = obj.get("score_item")
    if score_item is not None:
        score_item = _as_str(score_item, f"{path}.score_item")
    branches = []
    for i, raw in enumerate(_as_list(obj.get("branches", []), f"{path}.branches")):
        branch = _as_obj(raw, f"{path}.branches[{i}]")
        branches.append(
            Branch(
                label=_as_str(_require(branch, "label", f"{path}.branches[{i}]"), f"{path}.branches[{i}].label"),
                condition=_condition(_require(branch, "when", f"{path}.branches[{i}]"), f"{path}.branches[{i}].when"),
            )
        )
    outcome = obj.get("outcome")
    if outcome is not None:
        outcome = _as_str(outcome, f"{path}.outcome")
    return TaskNode(
        id=_as_str(_require(obj, "id", path), f"{path}.id"),
        kind=kind,
        role=role,
        inputs=tuple(_as_str(v, f"{path}.inputs[{i}]") for i, v in enumerate(_as_list(obj.get("inputs", []), f"{path}.inputs"))),
        outputs=tuple(_as_str(v, f"{path}.outputs[{i}]") for i, v in enumerate(_as_list(obj.get("outputs", []), f"{path}.outputs"))),
        precondition=precondition,
        temporal=temporal,
        questions=questions,
        threshold=threshold,
        score_item=score_item,
        branches=tuple(branches),
        orders=tuple(_as_str(v, f"{path}.orders[{i}]") for i, v in enumerate(_as_list(obj.get("orders", []), f"{path}.orders"))),
        outcome=outcome,
    )


def _parse_edge(obj: dict, path: str) -> Edge:
    condition = None
    if "when" in obj:
        condition = _condition(obj["when"], f"{path}.when")
    branch = obj.get("branch")
    if branch is not None:
        branch = _as_str(branch, f"{path}.branch")
    loop = obj.get("loop", False)
    if not isinstance(loop, bool):
        raise DocumentStructureError(f"{path}.loop", "expected true or false")
    return Edge(
        from_task=_as_str(_require(obj, "from", path), f"{path}.from"),
        to_task=_as_str(_require(obj, "to", path), f"{path}.to"),
        condition=condition,
        branch=branch,
        loop=loop,
    )


def parse(text: str) -> GuidelineDefinition:
    """Parse document text into a definition (not yet validated).

    Raises:
        DocumentSyntaxError: malformed JSON (with line/column) or malformed
            embedded condition/duration text.
        DuplicateKeyError: a JSON object repeats a key.
        UnknownTaskKindError: a task kind outside the taxonomy.
        DocumentStructureError: missing keys or wrong value shapes.
    """
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    root = _as_obj(raw, "$")
    meta = _as_obj(_require(root, "guideline", "$"), "$.guideline")
    return GuidelineDefinition(
        id=_as_str(_require(meta, "id", "$.guideline"), "$.guideline.id"),
        title=_as_str(_require(meta, "title", "$.guideline"), "$.guideline.title"),
        version=_as_str(_require(meta, "version", "$.guideline"), "$.guideline.version"),
        entry_task=_as_str(_require(meta, "entry_task", "$.guideline"), "$.guideline.entry_task"),
        data_items=tuple(
            _parse_data_item(_as_obj(raw_item, f"$.data_items[{i}]"), f"$.data_items[{i}]")
            for i, raw_item in enumerate(_as_list(root.get("data_items", []), "$.data_items"))
        ),
        tasks=tuple(
            _parse_task(_as_obj(raw_task, f"$.tasks[{i}]"), f"$.tasks[{i}]")
            for i, raw_task in enumerate(_as_list(root.get("tasks", []), "$.tasks"))
        ),
        edges=tuple(
            _parse_edge(_as_obj(raw_edge, f"$.edges[{i}]"), f"$.edges[{i}]")
            for i, raw_edge in enumerate(_as_list(root.get("edges", []), "$.edges"))
        ),
    )


def _item_to_obj(item: DataItemDecl) -> dict:
    obj: dict[str, Any] = {"id": item.id, "type": item.value_type.value, "source": item.source.value}
    if item.labels:
        obj["labels"] = list(item.labels)
    if item.test_code is not None:
        obj["test_code"] = item.test_code
    return obj


def _task_to_obj(task: TaskNode) -> dict:
    obj: dict[str, Any] = {"id": task.id, "kind": task.kind.value}
    if task.role is not None:
        obj["role"] = task.role
    if task.inputs:
        obj["inputs"] = list(task.inputs)
    if task.outputs:
        obj["outputs"] = list(task.outputs)
    if task.precondition is not None:
        obj["precondition"] = render_condition(task.precondition)
    if task.temporal is not None:
        temporal: dict[str, Any] = {
            "anchor": task.temporal.anchor,
            "min_delay": format_duration(task.temporal.min_delay),
        }
        if task.temporal.max_delay is not None:
            temporal["max_delay"] = format_duration(task.temporal.max_delay)
        obj["temporal"] = temporal
    if task.questions:
        obj["questions"] = [
            {
                "id": q.id,
                "prompt": q.prompt,
                "options": [{"label": o.label, "score": o.score} for o in q.options],
            }
            for q in task.questions
        ]
    if task.threshold is not None:
        obj["threshold"] = task.threshold
    if task.score_item is not None:
        obj["score_item"] = task.score_item
    if task.branches:
        obj["branches"] = [
            {"label": b.label, "when": render_condition(b.condition)} for b in task.branches
        ]
    if task.orders:
        obj["orders"] = list(task.orders)
    if task.outcome is not None:
        obj["outcome"] = task.outcome
    return obj


def _edge_to_obj(edge: Edge) -> dict:
    obj: dict[str, Any] = {"from": edge.from_task, "to": edge.to_task}
    if edge.condition is not None:
        obj["when"] = render_condition(edge.condition)
    if edge.branch is not None:
        obj["branch"] = edge.branch
    if edge.loop:
        obj["loop"] = True
    return obj


def serialize(definition: GuidelineDefinition) -> str:
    """Render a definition as canonical document text."""
    doc = {
        "guideline": {
            "id": definition.id,
            "title": definition.title,
            "version": definition.version,
            "entry_task": definition.entry_task,
        },
        "data_items": [_item_to_obj(i) for i in definition.data_items],
        "tasks": [_task_to_obj(t) for t in definition.tasks],
        "edges": [_edge_to_obj(e) for e in definition.edges],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
