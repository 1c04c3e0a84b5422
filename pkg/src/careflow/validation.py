"""Semantic validation of guideline definitions.

``validate`` is pure and idempotent: it inspects one definition and
returns a report of findings. Error-severity findings block deployment;
warnings do not. Checks cover id uniqueness, referential integrity,
reachability, acyclicity (modulo loop edges), decision-branch shape,
temporal-constraint sanity, and condition typing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .conditions import (
    Bound,
    Comparison,
    Condition,
    ORDERING_OPS,
    TrueLiteral,
    iter_items,
)
from .model import (
    DataItemDecl,
    GuidelineDefinition,
    ItemSource,
    TaskKind,
    TaskNode,
    ValueType,
)

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: str
    code: str
    message: str
    where: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def is_deployable(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == WARNING]


class _Checker:
    def __init__(self, definition: GuidelineDefinition):
        self.definition = definition
        self.findings: list[Finding] = []
        self.tasks: dict[str, TaskNode] = {}
        self.items: dict[str, DataItemDecl] = {}

    def error(self, code: str, message: str, where: str) -> None:
        self.findings.append(Finding(ERROR, code, message, where))

    def warning(self, code: str, message: str, where: str) -> None:
        self.findings.append(Finding(WARNING, code, message, where))

    # -- identity and reference integrity ---------------------------------

    def check_ids(self) -> None:
        for task in self.definition.tasks:
            if task.id in self.tasks:
                self.error("duplicate-task", f"task id {task.id!r} declared twice", f"tasks[{task.id}]")
            self.tasks[task.id] = task
        for item in self.definition.data_items:
            if item.id in self.items:
                self.error("duplicate-item", f"data item {item.id!r} declared twice", f"data_items[{item.id}]")
            self.items[item.id] = item
        seen_questions: set[str] = set()
        for task in self.definition.tasks:
            for question in task.questions:
                if question.id in seen_questions:
                    self.error(
                        "duplicate-question",
                        f"question id {question.id!r} declared twice",
                        f"tasks[{task.id}].questions[{question.id}]",
                    )
                seen_questions.add(question.id)
                labels = [o.label for o in question.options]
                if len(set(labels)) != len(labels):
                    self.error(
                        "duplicate-option",
                        f"question {question.id!r} repeats an option label",
                        f"tasks[{task.id}].questions[{question.id}]",
                    )

    def check_edges(self) -> None:
        for index, edge in enumerate(self.definition.edges):
            where = f"edges[{index}] ({edge.from_task} -> {edge.to_task})"
            source = self.tasks.get(edge.from_task)
            if source is None:
                self.error("dangling-edge", f"unknown source task {edge.from_task!r}", where)
            if edge.to_task not in self.tasks:
                self.error("dangling-edge", f"unknown target task {edge.to_task!r}", where)
            if source is not None:
                if source.kind == TaskKind.DECISION:
                    if edge.branch is None:
                        self.error(
                            "unlabelled-decision-edge",
                            "edges leaving a decision must name a branch",
                            where,
                        )
                    elif edge.branch not in {b.label for b in source.branches}:
                        self.error(
                            "unknown-branch",
                            f"branch {edge.branch!r} is not declared on {source.id!r}",
                            where,
                        )
                    if edge.condition is not None:
                        self.error(
                            "guarded-decision-edge",
                            "decision edges are selected by branch, not by condition",
                            where,
                        )
                else:
                    if edge.branch is not None:
                        self.error(
                            "branch-on-non-decision",
                            f"source task {source.id!r} is not a decision",
                            where,
                        )
                if source.kind == TaskKind.TERMINAL:
                    self.error("edge-from-terminal", "terminal tasks end the case", where)
            if edge.condition is not None:
                self.check_condition(edge.condition, where)

    def check_entry_and_reachability(self) -> None:
        entry = self.definition.entry_task
        if entry not in self.tasks:
            self.error("unknown-entry", f"entry task {entry!r} is not declared", "guideline.entry_task")
            return
        if any(e.to_task == entry and not e.loop for e in self.definition.edges):
            self.error("entry-has-incoming", "the entry task must have no incoming edges", f"tasks[{entry}]")
        reachable: set[str] = set()
        frontier = [entry]
        while frontier:
            current = frontier.pop()
            if current in reachable:
                continue
            reachable.add(current)
            for edge in self.definition.edges:
                if edge.from_task == current and edge.to_task in self.tasks:
                    frontier.append(edge.to_task)
        for task_id in self.tasks:
            if task_id not in reachable:
                self.error("unreachable-task", f"task {task_id!r} cannot be reached from the entry", f"tasks[{task_id}]")
        self.reachable = reachable

    def check_acyclic(self) -> None:
        # Loop-flagged edges are the declared back edges; the rest must form a DAG.
        adjacency: dict[str, list[str]] = {t: [] for t in self.tasks}
        for edge in self.definition.edges:
            if edge.loop or edge.from_task not in self.tasks or edge.to_task not in self.tasks:
                continue
            adjacency[edge.from_task].append(edge.to_task)
        state: dict[str, int] = {}
        stack: list[str] = []

        def visit(node: str) -> list[str] | None:
            state[node] = 1
            stack.append(node)
            for succ in adjacency[node]:
                if state.get(succ, 0) == 1:
                    return stack[stack.index(succ):] + [succ]
                if state.get(succ, 0) == 0:
                    cycle = visit(succ)
                    if cycle:
                        return cycle
            state[node] = 2
            stack.pop()
            return None

        for node in self.tasks:
            if state.get(node, 0) == 0:
                cycle = visit(node)
                if cycle:
                    self.error(
                        "cycle",
                        "cycle not flagged with loop edges: " + " -> ".join(cycle),
                        f"tasks[{cycle[0]}]",
                    )
                    return

    # -- per-kind task shape ----------------------------------------------

    def check_tasks(self) -> None:
        terminals = 0
        for task in self.definition.tasks:
            where = f"tasks[{task.id}]"
            for ref in task.inputs + task.outputs:
                if ref not in self.items:
                    self.error("undeclared-item", f"data item {ref!r} is not declared", where)
            if task.precondition is not None:
                self.check_condition(task.precondition, f"{where}.precondition")
            if task.temporal is not None:
                self.check_temporal(task, where)
            if task.kind == TaskKind.ENQUIRY:
                self.check_enquiry(task, where)
            elif task.kind == TaskKind.DECISION:
                self.check_decision(task, where)
            elif task.kind == TaskKind.TERMINAL:
                terminals += 1
                if task.outcome is None:
                    self.error("missing-outcome", "terminal tasks must declare an outcome", where)
                if task.role is not None:
                    self.warning("role-ignored", "terminal tasks have no work items; role is ignored", where)
            elif task.kind == TaskKind.WAIT:
                if task.temporal is None:
                    self.error("missing-temporal", "wait tasks must declare a temporal constraint", where)
                if task.role is not None:
                    self.warning("role-ignored", "wait tasks have no work items; role is ignored", where)
            if task.kind in (TaskKind.ACTION, TaskKind.SUBPLAN):
                if task.outputs and task.role is None:
                    self.error(
                        "outputs-without-role",
                        "a task with declared outputs needs a role to provide them",
                        where,
                    )
            if task.orders and task.kind not in (TaskKind.ACTION, TaskKind.SUBPLAN):
                self.error("orders-on-wrong-kind", "only action/subplan tasks may place orders", where)
            for code in task.orders:
                if not any(
                    i.source == ItemSource.EMR_RESULT and i.test_code == code
                    for i in self.definition.data_items
                ):
                    self.error(
                        "unmapped-order",
                        f"order code {code!r} has no emr-result data item with that test_code",
                        where,
                    )
        if terminals == 0:
            self.warning("no-terminal", "no terminal task: cases can never complete", "tasks")

    def check_enquiry(self, task: TaskNode, where: str) -> None:
        if not task.questions:
            self.error("empty-enquiry", "enquiry tasks need at least one question", where)
        if task.threshold is None:
            self.error("missing-threshold", "enquiry tasks must declare a score threshold", where)
        if task.role is None:
            self.error("missing-role", "enquiry tasks must be answered by someone; declare a role", where)
        if task.score_item is None:
            self.error("missing-score-item", "enquiry tasks must name the data item receiving the total", where)
        else:
            decl = self.items.get(task.score_item)
            if decl is None:
                self.error("undeclared-item", f"score item {task.score_item!r} is not declared", where)
            elif decl.value_type != ValueType.NUMBER:
                self.error("score-item-type", f"score item {task.score_item!r} must be a number", where)
            if task.score_item not in task.outputs:
                self.error("outputs-incomplete", f"outputs must include the score item {task.score_item!r}", where)
        for question in task.questions:
            qwhere = f"{where}.questions[{question.id}]"
            if not question.options:
                self.error("empty-question", "questions need at least one option", qwhere)
            decl = self.items.get(question.id)
            if decl is None:
                self.error("undeclared-item", f"question {question.id!r} has no matching data item", qwhere)
            else:
                if decl.value_type not in (ValueType.TEXT, ValueType.ENUMERATION):
                    self.error("question-item-type", "question items must be text or enumeration", qwhere)
                if decl.value_type == ValueType.ENUMERATION:
                    missing = [o.label for o in question.options if o.label not in decl.labels]
                    if missing:
                        self.error(
                            "option-label-unknown",
                            f"options {missing!r} are not labels of enumeration {decl.id!r}",
                            qwhere,
                        )
            if question.id not in task.outputs:
                self.error("outputs-incomplete", f"outputs must include question {question.id!r}", qwhere)

    def check_decision(self, task: TaskNode, where: str) -> None:
        if not task.branches:
            self.error("no-branches", "decision tasks need at least one branch", where)
            return
        labels = [b.label for b in task.branches]
        if len(set(labels)) != len(labels):
            self.error("duplicate-branch", "branch labels must be unique", where)
        last = task.branches[-1]
        if not isinstance(last.condition, TrueLiteral):
            self.error(
                "no-default-branch",
                "the last branch must be the default (condition true)",
                f"{where}.branches[{last.label}]",
            )
        for branch in task.branches[:-1]:
            if isinstance(branch.condition, TrueLiteral):
                self.warning(
                    "early-default",
                    f"branch {branch.label!r} is always taken; later branches are unreachable",
                    f"{where}.branches[{branch.label}]",
                )
            self.check_condition(branch.condition, f"{where}.branches[{branch.label}]")
        if task.role is None and task.outputs:
            self.error(
                "outputs-without-role",
                "an automatic decision cannot provide outputs; declare a role",
                where,
            )
        if task.role is not None and not task.outputs:
            self.warning(
                "decision-without-outputs",
                "a manual decision usually records its verdict in an output item",
                where,
            )
        out_branches = {e.branch for e in self.definition.outgoing(task.id)}
        for label in labels:
            if label not in out_branches:
                self.warning("branch-dead-end", f"branch {label!r} has no outgoing edge", where)

    def check_temporal(self, task: TaskNode, where: str) -> None:
        temporal = task.temporal
        assert temporal is not None
        twhere = f"{where}.temporal"
        if temporal.anchor not in self.tasks:
            self.error("unknown-anchor", f"anchor task {temporal.anchor!r} is not declared", twhere)
        else:
            # The anchor must be able to complete before this task is reached.
            reachable: set[str] = set()
            frontier = [temporal.anchor]
            while frontier:
                current = frontier.pop()
                if current in reachable:
                    continue
                reachable.add(current)
                frontier.extend(
                    e.to_task for e in self.definition.edges if e.from_task == current
                )
            if task.id not in reachable and temporal.anchor != task.id:
                self.error(
                    "anchor-not-upstream",
                    f"anchor {temporal.anchor!r} never precedes {task.id!r}",
                    twhere,
                )
        if temporal.max_delay is not None and temporal.max_delay < temporal.min_delay:
            self.error("window-inverted", "max_delay must not be smaller than min_delay", twhere)
        if task.kind != TaskKind.WAIT and temporal.min_delay.total_seconds() > 0:
            self.warning(
                "min-delay-ignored",
                "outside wait tasks only max_delay (as a deadline) is honoured",
                twhere,
            )

    # -- condition typing ---------------------------------------------------

    def check_condition(self, cond: Condition, where: str) -> None:
        if isinstance(cond, Comparison):
            decl = self.items.get(cond.item)
            if decl is None:
                self.error("undeclared-item", f"data item {cond.item!r} is not declared", where)
                return
            literal_is_bool = isinstance(cond.value, bool)
            literal_is_number = isinstance(cond.value, (int, float)) and not literal_is_bool
            literal_is_text = isinstance(cond.value, str)
            if cond.op in ORDERING_OPS:
                if decl.value_type != ValueType.NUMBER or not literal_is_number:
                    self.error(
                        "ordering-on-non-number",
                        f"operator {cond.op!r} needs a number item and literal",
                        where,
                    )
                return
            if decl.value_type == ValueType.NUMBER and not literal_is_number:
                self.error("literal-type", f"item {cond.item!r} is a number", where)
            elif decl.value_type == ValueType.BOOLEAN and not literal_is_bool:
                self.error("literal-type", f"item {cond.item!r} is a boolean", where)
            elif decl.value_type == ValueType.TEXT and not literal_is_text:
                self.error("literal-type", f"item {cond.item!r} is text", where)
            elif decl.value_type == ValueType.ENUMERATION:
                if not literal_is_text:
                    self.error("literal-type", f"item {cond.item!r} is an enumeration", where)
                elif cond.value not in decl.labels:
                    self.error(
                        "unknown-label",
                        f"{cond.value!r} is not a label of enumeration {cond.item!r}",
                        where,
                    )
        elif isinstance(cond, Bound):
            if cond.item not in self.items:
                self.error("undeclared-item", f"data item {cond.item!r} is not declared", where)
        elif hasattr(cond, "operand"):
            self.check_condition(cond.operand, where)
        elif hasattr(cond, "left"):
            self.check_condition(cond.left, where)
            self.check_condition(cond.right, where)

    # -- hygiene warnings ---------------------------------------------------

    def check_unreferenced_items(self) -> None:
        referenced: set[str] = set()
        ordered_codes: set[str] = set()
        for task in self.definition.tasks:
            referenced.update(task.inputs)
            referenced.update(task.outputs)
            referenced.update(q.id for q in task.questions)
            if task.score_item:
                referenced.add(task.score_item)
            if task.precondition is not None:
                referenced.update(iter_items(task.precondition))
            for branch in task.branches:
                referenced.update(iter_items(branch.condition))
            ordered_codes.update(task.orders)
        for edge in self.definition.edges:
            if edge.condition is not None:
                referenced.update(iter_items(edge.condition))
        for item in self.definition.data_items:
            if item.test_code is not None and item.test_code in ordered_codes:
                referenced.add(item.id)
            if item.source == ItemSource.EMR_RESULT and item.test_code is None:
                self.warning(
                    "result-without-code",
                    f"emr-result item {item.id!r} has no test_code; results can never bind it",
                    f"data_items[{item.id}]",
                )
            if item.id not in referenced:
                self.warning(
                    "unreferenced-item",
                    f"data item {item.id!r} is never used",
                    f"data_items[{item.id}]",
                )


def validate(definition: GuidelineDefinition) -> ValidationReport:
    """Check one definition; deployable iff the report has no errors."""
    checker = _Checker(definition)
    checker.check_ids()
    checker.check_edges()
    checker.check_entry_and_reachability()
    checker.check_acyclic()
    checker.check_tasks()
    checker.check_unreferenced_items()
    return ValidationReport(checker.findings)
