"""Time sources: real, scaled, and fully virtual.

Engine and scheduler never call ``datetime.now`` themselves; they ask a
clock. The virtual clock only moves when the scheduler advances it, which
makes runs deterministic and lets tests cover hours of care in
milliseconds.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

# Fixed origin for virtual runs so identical scenarios produce identical
# timestamps everywhere (logs, exports, traces).
DEFAULT_EPOCH = datetime(2024, 1, 1, 8, 0, 0, tzinfo=timezone.utc)


class ClockRegression(Exception):
    """An attempt was made to move a clock backwards."""


class Clock:
    """Minimal time-source interface."""

    def now(self) -> datetime:
        raise NotImplementedError

    def advance_to(self, instant: datetime) -> None:
        """Move the clock forward; real clocks ignore this."""


class WallClock(Clock):
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class ScaledWallClock(Clock):
    """Wall time stretched by a factor, anchored at construction.

    A scale of 60 makes one real second count as one minute, which turns
    the pathway's multi-hour waits into something watchable in a demo.
    """

    def __init__(self, scale: float, origin: datetime | None = None):
        if scale <= 0:
            raise ValueError("time scale must be positive")
        self.scale = scale
        self._wall_origin = datetime.now(timezone.utc)
        self._virtual_origin = origin or self._wall_origin

    def now(self) -> datetime:
        elapsed = datetime.now(timezone.utc) - self._wall_origin
        return self._virtual_origin + elapsed * self.scale


class VirtualClock(Clock):
    def __init__(self, start: datetime = DEFAULT_EPOCH):
        if start.tzinfo is None:
            raise ValueError("virtual clock start must be timezone-aware")
        self._now = start

    def now(self) -> datetime:
        return self._now

    def advance_to(self, instant: datetime) -> None:
        if instant < self._now:
            raise ClockRegression(
                f"cannot move from {isoformat(self._now)} back to {isoformat(instant)}"
            )
        self._now = instant

    def advance_by(self, delta: timedelta) -> None:
        self.advance_to(self._now + delta)


def isoformat(instant: datetime) -> str:
    """ISO-8601 with a Z suffix, the form used in logs and exports."""
    return instant.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_instant(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))
