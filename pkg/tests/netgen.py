"""Builders for synthetic task networks used across the test suite.

``definition(...)`` assembles a GuidelineDefinition from terse tuples;
``random_network(rng)`` produces a random layered DAG of manual Action
tasks that always validates, for randomized enablement checks.
"""

from __future__ import annotations

import random

from careflow.conditions import parse_condition
from careflow.model import (
    Branch,
    DataItemDecl,
    Edge,
    GuidelineDefinition,
    ItemSource,
    Question,
    TaskKind,
    TaskNode,
    TemporalConstraint,
    ValueType,
)


def definition(tasks, edges, *, entry=None, data_items=(),
               gid="net", version="1.0") -> GuidelineDefinition:
    """Assemble a definition from short specs.

    ``tasks``: iterable of (id, kind, extras-dict) — extras map straight
    onto TaskNode fields. ``edges``: (from, to) or (from, to, extras).
    """
    nodes = []
    for tid, kind, extras in tasks:
        kw = dict(extras)
        if "precondition" in kw and isinstance(kw["precondition"], str):
            kw["precondition"] = parse_condition(kw["precondition"])
        if "branches" in kw:
            kw["branches"] = tuple(
                Branch(label=b[0], condition=parse_condition(b[1]))
                for b in kw["branches"]
            )
        nodes.append(TaskNode(id=tid, kind=TaskKind(kind), **kw))
    links = []
    for spec in edges:
        src, dst, extras = (spec if len(spec) == 3 else (*spec, {}))
        kw = dict(extras)
        if "condition" in kw and isinstance(kw["condition"], str):
            kw["condition"] = parse_condition(kw["condition"])
        links.append(Edge(from_task=src, to_task=dst, **kw))
    return GuidelineDefinition(
        id=gid,
        title=gid,
        version=version,
        entry_task=entry or nodes[0].id,
        data_items=tuple(data_items),
        tasks=tuple(nodes),
        edges=tuple(links),
    )


def item(item_id, vtype="text", source="doctor-input", labels=(),
         test_code=None) -> DataItemDecl:
    return DataItemDecl(
        id=item_id,
        value_type=ValueType(vtype),
        source=ItemSource(source),
        labels=tuple(labels),
        test_code=test_code,
    )


def random_network(rng: random.Random, max_layers: int = 4,
                   max_width: int = 3) -> GuidelineDefinition:
    """A random layered DAG of manual Action tasks plus a Terminal sink.

    Every non-entry task gets at least one incoming edge from an earlier
    layer, so the whole graph is reachable and acyclic; a final Terminal
    collects every loose end. All edges are unconditional: the point of
    these networks is join/ordering behaviour, not data flow.
    """
    layers: list[list[str]] = [["entry"]]
    n = 0
    for _ in range(rng.randint(1, max_layers)):
        width = rng.randint(1, max_width)
        layer = []
        for _ in range(width):
            n += 1
            layer.append(f"t{n}")
        layers.append(layer)

    tasks = [("entry", "Action", {"role": "tester"})]
    edges = []
    for level in range(1, len(layers)):
        earlier = [t for layer in layers[:level] for t in layer]
        for tid in layers[level]:
            tasks.append((tid, "Action", {"role": "tester"}))
            sources = rng.sample(earlier, rng.randint(1, min(2, len(earlier))))
            for src in sources:
                edges.append((src, tid))

    # Anything without an outgoing edge feeds the terminal sink.
    with_out = {src for src, *_ in edges}
    tasks.append(("done", "Terminal", {"outcome": "done"}))
    for layer in layers:
        for tid in layer:
            if tid not in with_out:
                edges.append((tid, "done"))

    return definition(tasks, edges, entry="entry",
                      gid=f"random-{rng.randint(0, 10**9)}")
