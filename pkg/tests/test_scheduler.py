"""Timer ordering, cancellation, and virtual-clock discipline."""

from datetime import timedelta

import pytest

from careflow.clock import DEFAULT_EPOCH, ClockRegression, VirtualClock
from careflow.scheduler import DueInPast, Scheduler, TimerState, UnknownTimer

T0 = DEFAULT_EPOCH


def make() -> tuple[VirtualClock, Scheduler]:
    clock = VirtualClock()
    return clock, Scheduler(clock)


def test_fires_in_due_order_exactly_once():
    clock, sched = make()
    fired = []
    for hours, name in [(3, "c"), (1, "a"), (2, "b")]:
        sched.schedule("case-1", name, T0 + timedelta(hours=hours),
                       callback=lambda t: fired.append(t.task_id))
    done = sched.advance_to(T0 + timedelta(hours=4))
    assert fired == ["a", "b", "c"]
    assert [t.task_id for t in done] == ["a", "b", "c"]
    # nothing left, and a second advance does not re-fire
    assert sched.pending() == []
    assert sched.advance_to(T0 + timedelta(hours=5)) == []


def test_same_due_instant_fires_in_schedule_order():
    clock, sched = make()
    fired = []
    due = T0 + timedelta(hours=1)
    for name in ("first", "second", "third"):
        sched.schedule("case-1", name, due,
                       callback=lambda t: fired.append(t.task_id))
    sched.advance_to(due)
    assert fired == ["first", "second", "third"]


def test_advance_moves_clock_to_each_due_instant():
    clock, sched = make()
    seen = []
    sched.schedule("c", "t", T0 + timedelta(hours=2),
                   callback=lambda t: seen.append(clock.now()))
    sched.advance_to(T0 + timedelta(hours=6))
    assert seen == [T0 + timedelta(hours=2)]
    assert clock.now() == T0 + timedelta(hours=6)


def test_cancel():
    clock, sched = make()
    fired = []
    timer = sched.schedule("c", "t", T0 + timedelta(hours=1),
                           callback=lambda t: fired.append(t.timer_id))
    # cancel reports the state the timer had going in
    assert sched.cancel(timer.timer_id) == TimerState.PENDING
    assert sched.cancel(timer.timer_id) == TimerState.CANCELLED
    sched.advance_to(T0 + timedelta(hours=2))
    assert fired == []
    assert sched.get(timer.timer_id).state is TimerState.CANCELLED


def test_cancel_case_leaves_other_cases_alone():
    clock, sched = make()
    sched.schedule("a", "t1", T0 + timedelta(hours=1))
    sched.schedule("a", "t2", T0 + timedelta(hours=2))
    keep = sched.schedule("b", "t3", T0 + timedelta(hours=1))
    cancelled = sched.cancel_case("a")
    assert sorted(t.task_id for t in cancelled) == ["t1", "t2"]
    assert [t.timer_id for t in sched.pending()] == [keep.timer_id]
    assert sched.pending("a") == []


def test_due_in_past_rejected():
    clock, sched = make()
    clock.advance_to(T0 + timedelta(hours=2))
    with pytest.raises(DueInPast):
        sched.schedule("c", "t", T0 + timedelta(hours=1))


def test_due_exactly_now_is_fine():
    clock, sched = make()
    timer = sched.schedule("c", "t", T0)
    assert sched.advance_to(T0) == [timer]


def test_clock_never_runs_backwards():
    clock, sched = make()
    clock.advance_to(T0 + timedelta(hours=3))
    with pytest.raises(ClockRegression):
        clock.advance_to(T0 + timedelta(hours=1))
    # advancing to the current instant is a no-op, not a regression
    clock.advance_to(T0 + timedelta(hours=3))


def test_window_end_must_not_precede_due():
    clock, sched = make()
    with pytest.raises(ValueError):
        sched.schedule("c", "t", T0 + timedelta(hours=4),
                       window_end=T0 + timedelta(hours=2))


def test_explicit_timer_ids_for_restarts():
    clock, sched = make()
    restored = sched.schedule("c", "t", T0 + timedelta(hours=1), timer_id=17)
    assert restored.timer_id == 17
    with pytest.raises(ValueError):
        sched.schedule("c", "t", T0 + timedelta(hours=1), timer_id=17)
    # fresh ids continue above the restored one
    nxt = sched.schedule("c", "u", T0 + timedelta(hours=1))
    assert nxt.timer_id == 18


def test_unknown_timer():
    _, sched = make()
    with pytest.raises(UnknownTimer):
        sched.get(99)
    with pytest.raises(UnknownTimer):
        sched.cancel(99)


def test_pending_sorted_by_due():
    clock, sched = make()
    sched.schedule("c", "late", T0 + timedelta(hours=9))
    sched.schedule("c", "early", T0 + timedelta(hours=1))
    assert [t.task_id for t in sched.pending()] == ["early", "late"]


def test_callback_may_schedule_more_work():
    """A timer whose callback schedules another timer inside the same advance."""
    clock, sched = make()
    fired = []

    def chain(t):
        fired.append(t.task_id)
        if t.task_id == "first":
            sched.schedule("c", "second", clock.now() + timedelta(hours=1),
                           callback=chain)

    sched.schedule("c", "first", T0 + timedelta(hours=1), callback=chain)
    sched.advance_to(T0 + timedelta(hours=5))
    assert fired == ["first", "second"]
