"""Condition language: parsing, rendering, evaluation."""

import pytest
from hypothesis import given, strategies as st

from careflow.conditions import (
    And,
    Bound,
    Comparison,
    ConditionSyntaxError,
    ConditionTypeError,
    Not,
    Or,
    TrueLiteral,
    UnboundDataItem,
    eval_condition,
    iter_items,
    parse_condition,
    render_condition,
)


def test_parse_comparison():
    assert parse_condition("score >= 4") == Comparison("score", ">=", 4)
    assert parse_condition("flag = true") == Comparison("flag", "=", True)
    assert parse_condition("name != 'bob'") == Comparison("name", "!=", "bob")
    assert parse_condition("x < -2.5") == Comparison("x", "<", -2.5)


def test_parse_true_literal_and_bound():
    assert parse_condition("true") == TrueLiteral()
    assert parse_condition("bound(ecg-result)") == Bound("ecg-result")


def test_precedence_not_and_or():
    # NOT binds to the nearest atom, AND binds tighter than OR.
    c = parse_condition("not a = true and b = 1 or c = 'x'")
    assert c == Or(
        And(Not(Comparison("a", "=", True)), Comparison("b", "=", 1)),
        Comparison("c", "=", "x"),
    )
    c2 = parse_condition("a = 1 or b = 2 and c = 3")
    assert isinstance(c2, Or)
    assert isinstance(c2.right, And)


def test_parentheses_group():
    c = parse_condition("(a = 1 or b = 2) and c = 3")
    assert isinstance(c, And)
    assert isinstance(c.left, Or)


def test_keywords_case_insensitive():
    assert parse_condition("a = 1 AND b = 2") == parse_condition("a = 1 and b = 2")
    assert parse_condition("NOT a = true") == parse_condition("not a = true")


def test_text_escapes():
    c = parse_condition(r"msg = 'it\'s'")
    assert c == Comparison("msg", "=", "it's")
    assert parse_condition(render_condition(c)) == c


@pytest.mark.parametrize("source,column", [
    ("a >", 4),
    ("", 1),
    ("a = ", 5),
    ("(a = 1", 7),
    ("a = 1 and", 10),
])
def test_syntax_errors_carry_position(source, column):
    with pytest.raises(ConditionSyntaxError) as exc:
        parse_condition(source)
    assert exc.value.position == column


def test_eval_basics():
    env = {"score": 5, "flag": True, "name": "bob"}
    assert eval_condition(parse_condition("score >= 4"), env)
    assert not eval_condition(parse_condition("score < 4"), env)
    assert eval_condition(parse_condition("flag = true"), env)
    assert eval_condition(parse_condition("name = 'bob'"), env)
    assert eval_condition(parse_condition("true"), {})


def test_eval_bound():
    assert eval_condition(parse_condition("bound(x)"), {"x": 0})
    assert not eval_condition(parse_condition("bound(x)"), {})


def test_eval_unbound_item_raises():
    with pytest.raises(UnboundDataItem) as exc:
        eval_condition(parse_condition("x = 1"), {})
    assert exc.value.item == "x"


def test_eval_ordering_needs_numbers():
    with pytest.raises(ConditionTypeError):
        eval_condition(parse_condition("a < 3"), {"a": "small"})
    with pytest.raises(ConditionTypeError):
        eval_condition(parse_condition("a < 3"), {"a": True})


def test_bool_never_equals_number():
    # True == 1 in Python; the condition language keeps the categories apart.
    assert not eval_condition(parse_condition("a = 1"), {"a": True})
    assert eval_condition(parse_condition("a != 1"), {"a": True})
    assert not eval_condition(parse_condition("a = true"), {"a": 1})


def test_iter_items():
    c = parse_condition("not a = 1 and (bound(b) or c = 'x')")
    assert sorted(iter_items(c)) == ["a", "b", "c"]
    assert list(iter_items(TrueLiteral())) == []


# Random condition trees for the render/parse round trip.

_idents = st.from_regex(r"[a-z][a-z0-9_-]{0,8}", fullmatch=True).filter(
    lambda s: s not in {"and", "or", "not", "true", "false", "bound"}
)
_values = st.one_of(
    st.integers(min_value=-999, max_value=999),
    st.booleans(),
    st.text(
        st.characters(codec="ascii", exclude_characters="\x00"),
        max_size=12,
    ),
)
_atoms = st.one_of(
    st.just(TrueLiteral()),
    st.builds(Bound, _idents),
    st.builds(Comparison, _idents, st.sampled_from(["=", "!=", "<", "<=", ">", ">="]), _values),
)
_conditions = st.recursive(
    _atoms,
    lambda inner: st.one_of(
        st.builds(Not, inner),
        st.builds(And, inner, inner),
        st.builds(Or, inner, inner),
    ),
    max_leaves=12,
)


@given(_conditions)
def test_render_parse_round_trip(cond):
    assert parse_condition(render_condition(cond)) == cond
