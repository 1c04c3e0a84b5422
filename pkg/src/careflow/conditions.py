"""Boolean conditions over case data items.

Conditions guard decision branches, edges, and task preconditions. The
textual form is a small infix language::

    score >= 4 AND troponin = 'abnormal'
    NOT (bound(ecg_result) OR discharged = true)

Precedence, tightest first: NOT, comparison, AND, OR. Parentheses group.
``bound(item)`` tests whether a data item has a value; every other atom is
a comparison of one data item against one literal (number, quoted text, or
true/false), or the literal ``true`` itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

Value = Union[int, float, str, bool]

ORDERING_OPS = ("<", "<=", ">", ">=")
ALL_OPS = ("=", "!=") + ORDERING_OPS


class ConditionError(Exception):
    """Base class for condition parsing and evaluation failures."""


class ConditionSyntaxError(ConditionError):
    """Malformed condition text; ``position`` is a 1-based column."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (column {position})")
        self.position = position


class UnboundDataItem(ConditionError):
    """A comparison referenced a data item with no bound value."""

    def __init__(self, item: str):
        super().__init__(f"data item {item!r} is not bound")
        self.item = item


class ConditionTypeError(ConditionError):
    """Operand types do not support the requested comparison."""


@dataclass(frozen=True)
class TrueLiteral:
    """The always-true condition (used for trailing default branches)."""


@dataclass(frozen=True)
class Comparison:
    item: str
    op: str
    value: Value


@dataclass(frozen=True)
class Bound:
    """True when the named data item currently has a bound value."""

    item: str


@dataclass(frozen=True)
class Not:
    operand: "Condition"


@dataclass(frozen=True)
class And:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Or:
    left: "Condition"
    right: "Condition"


Condition = Union[TrueLiteral, Comparison, Bound, Not, And, Or]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_-]*)
  | (?P<text>'(?:\\.|[^'\\])*')
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<lparen>\()
  | (?P<rparen>\))
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "true", "false", "bound"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int  # 1-based column of the first character


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise ConditionSyntaxError(
                f"unexpected character {source[i]!r}", i + 1
            )
        kind = m.lastgroup or ""
        if kind != "ws":
            text = m.group()
            if kind == "ident" and text.lower() in _KEYWORDS:
                kind = text.lower()
            tokens.append(_Token(kind, text, i + 1))
        i = m.end()
    tokens.append(_Token("end", "", len(source) + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            found = repr(tok.text) if tok.kind != "end" else "end of input"
            raise ConditionSyntaxError(f"expected {what}, found {found}", tok.pos)
        return self.advance()

    def parse(self) -> Condition:
        cond = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ConditionSyntaxError(
                f"unexpected trailing input {tok.text!r}", tok.pos
            )
        return cond

    def or_expr(self) -> Condition:
        node = self.and_expr()
        while self.peek().kind == "or":
            self.advance()
            node = Or(node, self.and_expr())
        return node

    def and_expr(self) -> Condition:
        node = self.unary()
        while self.peek().kind == "and":
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self) -> Condition:
        if self.peek().kind == "not":
            self.advance()
            return Not(self.unary())
        return self.primary()

    def primary(self) -> Condition:
        tok = self.peek()
        if tok.kind == "lparen":
            self.advance()
            node = self.or_expr()
            self.expect("rparen", "')'")
            return node
        if tok.kind == "true":
            self.advance()
            return TrueLiteral()
        if tok.kind == "bound" and self.tokens[self.index + 1].kind == "lparen":
            self.advance()
            self.advance()
            item = self.expect("ident", "a data item name")
            self.expect("rparen", "')'")
            return Bound(item.text)
        if tok.kind in ("ident", "bound"):
            return self.comparison()
        found = repr(tok.text) if tok.kind != "end" else "end of input"
        raise ConditionSyntaxError(f"expected a condition, found {found}", tok.pos)

    def comparison(self) -> Condition:
        item = self.advance()
        op = self.expect("op", "a comparison operator")
        lit = self.peek()
        value: Value
        if lit.kind == "number":
            self.advance()
            value = float(lit.text) if "." in lit.text else int(lit.text)
        elif lit.kind == "text":
            self.advance()
            value = _unescape_text(lit.text[1:-1], lit.pos)
        elif lit.kind in ("true", "false"):
            self.advance()
            value = lit.kind == "true"
        else:
            found = repr(lit.text) if lit.kind != "end" else "end of input"
            raise ConditionSyntaxError(
                f"expected a literal value, found {found}", lit.pos
            )
        return Comparison(item.text, op.text, value)


def _unescape_text(body: str, pos: int) -> str:
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            if i + 1 >= len(body):
                raise ConditionSyntaxError("dangling escape in text literal", pos)
            nxt = body[i + 1]
            if nxt not in ("'", "\\"):
                raise ConditionSyntaxError(
                    f"unknown escape \\{nxt} in text literal", pos
                )
            out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _escape_text(value: str) -> str:
    return value.replace("\\", "\\\\").replace("'", "\\'")


def parse_condition(source: str) -> Condition:
    """Parse infix condition text into its tree form.

    Raises:
        ConditionSyntaxError: on malformed input, with the offending column.
    """
    return _Parser(_tokenize(source)).parse()


def _render_value(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return f"'{_escape_text(value)}'"


# Precedence levels used when re-inserting parentheses: OR < AND < NOT < atom.
_LEVEL_OR, _LEVEL_AND, _LEVEL_NOT, _LEVEL_ATOM = 1, 2, 3, 4


def _render(cond: Condition, min_level: int) -> str:
    if isinstance(cond, TrueLiteral):
        return "true"
    if isinstance(cond, Bound):
        return f"bound({cond.item})"
    if isinstance(cond, Comparison):
        return f"{cond.item} {cond.op} {_render_value(cond.value)}"
    if isinstance(cond, Not):
        text = f"NOT {_render(cond.operand, _LEVEL_NOT)}"
        level = _LEVEL_NOT
    elif isinstance(cond, And):
        text = f"{_render(cond.left, _LEVEL_AND)} AND {_render(cond.right, _LEVEL_AND + 1)}"
        level = _LEVEL_AND
    elif isinstance(cond, Or):
        text = f"{_render(cond.left, _LEVEL_OR)} OR {_render(cond.right, _LEVEL_OR + 1)}"
        level = _LEVEL_OR
    else:  # pragma: no cover - exhaustive over the union
        raise TypeError(f"not a condition: {cond!r}")
    if level < min_level:
        return f"({text})"
    return text


def render_condition(cond: Condition) -> str:
    """Canonical textual form; ``parse_condition`` inverts it exactly."""
    return _render(cond, _LEVEL_OR)


def iter_items(cond: Condition) -> Iterator[str]:
    """Yield every data item id referenced by the condition."""
    if isinstance(cond, (Comparison, Bound)):
        yield cond.item
    elif isinstance(cond, Not):
        yield from iter_items(cond.operand)
    elif isinstance(cond, (And, Or)):
        yield from iter_items(cond.left)
        yield from iter_items(cond.right)


def _same_category(a: Value, b: Value) -> bool:
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool)
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return True
    return isinstance(a, str) and isinstance(b, str)


def eval_condition(cond: Condition, bindings: Mapping[str, Value]) -> bool:
    """Evaluate a condition against bound data-item values.

    Raises:
        UnboundDataItem: a comparison referenced an item with no value.
        ConditionTypeError: an ordering comparison met non-numeric operands.
    """
    if isinstance(cond, TrueLiteral):
        return True
    if isinstance(cond, Bound):
        return cond.item in bindings
    if isinstance(cond, Comparison):
        if cond.item not in bindings:
            raise UnboundDataItem(cond.item)
        actual = bindings[cond.item]
        if cond.op in ORDERING_OPS:
            if (
                isinstance(actual, bool)
                or isinstance(cond.value, bool)
                or not isinstance(actual, (int, float))
                or not isinstance(cond.value, (int, float))
            ):
                raise ConditionTypeError(
                    f"ordering comparison on non-numeric values for {cond.item!r}"
                )
            if cond.op == "<":
                return actual < cond.value
            if cond.op == "<=":
                return actual <= cond.value
            if cond.op == ">":
                return actual > cond.value
            return actual >= cond.value
        equal = _same_category(actual, cond.value) and actual == cond.value
        return equal if cond.op == "=" else not equal
    if isinstance(cond, Not):
        return not eval_condition(cond.operand, bindings)
    if isinstance(cond, And):
        return eval_condition(cond.left, bindings) and eval_condition(
            cond.right, bindings
        )
    if isinstance(cond, Or):
        return eval_condition(cond.left, bindings) or eval_condition(
            cond.right, bindings
        )
    raise TypeError(f"not a condition: {cond!r}")  # pragma: no cover
