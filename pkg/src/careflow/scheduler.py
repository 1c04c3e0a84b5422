"""Timer service over a virtual or real clock.

Timers fire in (due_at, creation order) order, exactly once each.
``advance_to`` steps the clock to every due instant in turn before
invoking that timer's callback, so advancing twelve hours in one call or
in twelve one-hour calls produces the same firing sequence with the same
logical timestamps. Callbacks run without the queue lock held and may
schedule or cancel further timers.
"""

from __future__ import annotations

import heapq
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Callable

from .clock import Clock, ClockRegression, isoformat

logger = logging.getLogger(__name__)


class SchedulerError(Exception):
    pass


class DueInPast(SchedulerError):
    """A timer was scheduled with a due instant before the clock."""


class UnknownTimer(SchedulerError):
    """The referenced timer id was never issued."""


class TimerState(str, Enum):
    PENDING = "Pending"
    FIRED = "Fired"
    CANCELLED = "Cancelled"


@dataclass
class Timer:
    timer_id: int
    case_id: str
    task_id: str
    due_at: datetime
    window_end: datetime | None = None
    state: TimerState = TimerState.PENDING
    callback: Callable[["Timer"], None] | None = field(default=None, repr=False)


class Scheduler:
    def __init__(self, clock: Clock):
        self.clock = clock
        self._lock = threading.Lock()  # guards queue, registry, id counter
        self._advance_lock = threading.Lock()  # serialises whole advances
        self._heap: list[tuple[datetime, int]] = []
        self._timers: dict[int, Timer] = {}
        self._next_id = 1

    def schedule(
        self,
        case_id: str,
        task_id: str,
        due_at: datetime,
        window_end: datetime | None = None,
        callback: Callable[[Timer], None] | None = None,
        timer_id: int | None = None,
    ) -> Timer:
        """Register a timer; returns it with its issued id.

        ``timer_id`` may be given to re-register a timer under the id it
        held before a restart; ids then continue above it.

        Raises:
            DueInPast: due_at is before the clock's current instant.
            ValueError: window_end closes before due_at, or timer_id is taken.
        """
        if window_end is not None and window_end < due_at:
            raise ValueError("window_end must not precede due_at")
        with self._lock:
            now = self.clock.now()
            if due_at < now:
                raise DueInPast(
                    f"due {isoformat(due_at)} is before now {isoformat(now)}"
                )
            if timer_id is None:
                timer_id = self._next_id
                self._next_id += 1
            elif timer_id in self._timers:
                raise ValueError(f"timer id {timer_id} already issued")
            else:
                self._next_id = max(self._next_id, timer_id + 1)
            timer = Timer(
                timer_id=timer_id,
                case_id=case_id,
                task_id=task_id,
                due_at=due_at,
                window_end=window_end,
                callback=callback,
            )
            self._timers[timer.timer_id] = timer
            heapq.heappush(self._heap, (due_at, timer.timer_id))
            return timer

    def cancel(self, timer_id: int) -> TimerState:
        """Cancel a pending timer; returns the state it had before."""
        with self._lock:
            timer = self._timers.get(timer_id)
            if timer is None:
                raise UnknownTimer(f"no timer {timer_id}")
            previous = timer.state
            if timer.state == TimerState.PENDING:
                timer.state = TimerState.CANCELLED
            return previous

    def cancel_case(self, case_id: str) -> list[Timer]:
        """Cancel every pending timer belonging to one case."""
        with self._lock:
            cancelled = []
            for timer in self._timers.values():
                if timer.case_id == case_id and timer.state == TimerState.PENDING:
                    timer.state = TimerState.CANCELLED
                    cancelled.append(timer)
            return cancelled

    def pending(self, case_id: str | None = None) -> list[Timer]:
        with self._lock:
            timers = [
                t
                for t in self._timers.values()
                if t.state == TimerState.PENDING
                and (case_id is None or t.case_id == case_id)
            ]
        return sorted(timers, key=lambda t: (t.due_at, t.timer_id))

    def get(self, timer_id: int) -> Timer:
        with self._lock:
            timer = self._timers.get(timer_id)
            if timer is None:
                raise UnknownTimer(f"no timer {timer_id}")
            return timer

    def advance_to(self, instant: datetime) -> list[Timer]:
        """Fire every timer due at or before ``instant``, in order.

        The clock steps to each timer's due instant before its callback
        runs, then settles on ``instant``. Timers scheduled by callbacks
        are picked up within the same advance when already due.

        Raises:
            ClockRegression: instant is before the clock's current time.
        """
        with self._advance_lock:
            if instant < self.clock.now():
                raise ClockRegression(
                    f"cannot advance to {isoformat(instant)}, "
                    f"now is {isoformat(self.clock.now())}"
                )
            fired: list[Timer] = []
            while True:
                with self._lock:
                    timer = self._pop_due(instant)
                    if timer is not None:
                        timer.state = TimerState.FIRED
                        self.clock.advance_to(timer.due_at)
                if timer is None:
                    break
                logger.debug(
                    "timer %s fired for case %s task %s at %s",
                    timer.timer_id,
                    timer.case_id,
                    timer.task_id,
                    isoformat(timer.due_at),
                )
                if timer.callback is not None:
                    timer.callback(timer)
                fired.append(timer)
            self.clock.advance_to(instant)
            return fired

    def _pop_due(self, limit: datetime) -> Timer | None:
        while self._heap:
            due_at, timer_id = self._heap[0]
            if due_at > limit:
                return None
            heapq.heappop(self._heap)
            timer = self._timers[timer_id]
            if timer.state == TimerState.PENDING:
                return timer
            # cancelled entries stay in the heap until popped here
        return None
