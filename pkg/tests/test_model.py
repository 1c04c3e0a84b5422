"""Duration grammar and the definition lookup helpers."""

from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from careflow.model import DurationError, format_duration, parse_duration

from netgen import definition


@pytest.mark.parametrize("text,expected", [
    ("30m", timedelta(minutes=30)),
    ("1m", timedelta(minutes=1)),
    ("4h", timedelta(hours=4)),
    ("12h", timedelta(hours=12)),
    ("2d", timedelta(days=2)),
    ("0m", timedelta(0)),
    ("90m", timedelta(minutes=90)),
])
def test_parse_duration(text, expected):
    assert parse_duration(text) == expected


@pytest.mark.parametrize("text", [
    "", "4", "h", "4H", "-4h", "4.5h", "4 h", "4hh", " 4h", "4h ",
    "PT4H", "four hours",
])
def test_parse_duration_rejects(text):
    with pytest.raises(DurationError):
        parse_duration(text)


def test_format_duration_picks_largest_exact_unit():
    assert format_duration(timedelta(days=2)) == "2d"
    assert format_duration(timedelta(hours=26)) == "26h"
    assert format_duration(timedelta(hours=24)) == "1d"
    assert format_duration(timedelta(minutes=90)) == "90m"
    assert format_duration(timedelta(0)) == "0m"


def test_format_duration_rejects_fractional_and_negative():
    with pytest.raises(DurationError):
        format_duration(timedelta(seconds=30))
    with pytest.raises(DurationError):
        format_duration(timedelta(minutes=-5))


@given(st.integers(min_value=0, max_value=10**6))
def test_duration_round_trip(minutes):
    delta = timedelta(minutes=minutes)
    assert parse_duration(format_duration(delta)) == delta


@given(st.integers(min_value=0, max_value=10**4), st.sampled_from("mhd"))
def test_duration_reparse_is_stable(amount, unit):
    # "120m" may canonicalise to "2h", but the value never drifts.
    delta = parse_duration(f"{amount}{unit}")
    assert parse_duration(format_duration(delta)) == delta


def test_definition_lookups():
    d = definition(
        [("a", "Action", {"role": "nurse"}),
         ("end", "Terminal", {"outcome": "done"})],
        [("a", "end")],
    )
    assert d.task("a").role == "nurse"
    assert d.task("end").outcome == "done"
    with pytest.raises(KeyError):
        d.task("missing")
    with pytest.raises(KeyError):
        d.item("missing")
    assert [e.to_task for e in d.outgoing("a")] == ["end"]
    assert [e.from_task for e in d.incoming("end")] == ["a"]
    assert d.outgoing("end") == ()
