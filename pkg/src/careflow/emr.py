"""Order/result exchange with the (mock) EMR.

Two halves live here. :class:`Hl7Bridge` is the engine-side boundary: it
turns order requests into ORM bytes, remembers which placer id belongs to
which case, and decodes inbound ORU results back into clinical events
addressed to a case and data item. :class:`EmrSimulator` plays the other
side: it accepts ORM messages and, after a configurable per-test latency,
produces the matching ORU through the shared scheduler — so simulated
results ride the same virtual clock as everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable

from . import hl7
from .scheduler import Scheduler


@dataclass(frozen=True)
class OrderRequest:
    """One test order the engine wants placed."""

    case_id: str
    patient_ref: str
    placer_order_id: str
    test_code: str
    requested_at: datetime


@dataclass(frozen=True)
class ClinicalEvent:
    """One decoded result, addressed to a case and data item."""

    case_id: str
    data_item: str
    value: str
    abnormal_flag: str | None
    observed_at: datetime
    test_code: str
    placer_order_id: str
    filler_order_id: str
    expected: bool = True


@dataclass
class _OrderRecord:
    order: OrderRequest
    fulfilled_at: datetime | None = None


class Hl7Bridge:
    """Engine-side codec plus order registry.

    The registry is what makes decoding total in the application sense:
    every inbound result must land on an order this bridge has seen, and
    its test code must map onto a data item declared for that case.
    """

    def __init__(self) -> None:
        self._orders: dict[str, _OrderRecord] = {}
        self._case_items: dict[str, dict[str, str]] = {}

    def register_case(self, case_id: str, test_code_items: dict[str, str]) -> None:
        """Record the test-code -> data-item mapping for one case."""
        self._case_items[case_id] = dict(test_code_items)

    def forget_case(self, case_id: str) -> None:
        self._case_items.pop(case_id, None)
        self._orders = {
            placer: record
            for placer, record in self._orders.items()
            if record.order.case_id != case_id
        }

    def encode_order(self, order: OrderRequest) -> bytes:
        """Register the order and return its ORM^O01 bytes."""
        self._orders[order.placer_order_id] = _OrderRecord(order)
        return hl7.encode_orm(
            order.patient_ref, order.placer_order_id, order.test_code, order.requested_at
        )

    def restore_order(self, order: OrderRequest,
                      fulfilled_at: datetime | None = None) -> None:
        """Re-seed one order after a restart, without re-encoding it."""
        self._orders[order.placer_order_id] = _OrderRecord(order, fulfilled_at)

    def mark_fulfilled(self, placer_order_id: str, at: datetime) -> None:
        record = self._orders.get(placer_order_id)
        if record is not None:
            record.fulfilled_at = at

    def outstanding(self, case_id: str, test_code: str | None = None) -> list[OrderRequest]:
        """Unfulfilled orders for a case, oldest placer id first."""
        records = [
            record.order
            for record in self._orders.values()
            if record.order.case_id == case_id
            and record.fulfilled_at is None
            and (test_code is None or record.order.test_code == test_code)
        ]
        return sorted(records, key=lambda order: order.placer_order_id)

    def decode_result(self, raw: bytes | str) -> ClinicalEvent:
        """Map ORU bytes to a clinical event for the owning case.

        A result for an already-fulfilled order decodes with
        ``expected=False`` (duplicate delivery) rather than failing; a
        result for an order never placed raises
        :class:`~careflow.hl7.NoMatchingOrder`.
        """
        fields = hl7.decode_oru(raw)
        record = self._orders.get(fields.placer_order_id)
        if record is None:
            raise hl7.NoMatchingOrder(fields.placer_order_id)
        order = record.order
        items = self._case_items.get(order.case_id, {})
        data_item = items.get(fields.test_code)
        if data_item is None:
            raise hl7.UnknownTestCode(fields.test_code)
        expected = record.fulfilled_at is None
        record.fulfilled_at = fields.observed_at
        return ClinicalEvent(
            case_id=order.case_id,
            data_item=data_item,
            value=fields.value,
            abnormal_flag=fields.abnormal_flag,
            observed_at=fields.observed_at,
            test_code=fields.test_code,
            placer_order_id=fields.placer_order_id,
            filler_order_id=fields.filler_order_id,
            expected=expected,
        )

    def make_ack(self, original: bytes | str, code: str, at: datetime,
                 text: str = "") -> bytes:
        return hl7.make_ack(original, code, at, text)


@dataclass(frozen=True)
class ResultProfile:
    """How the simulator answers one test code."""

    latency: timedelta
    value: str
    abnormal_flag: str | None = "N"


DEFAULT_PROFILE = ResultProfile(timedelta(minutes=30), "within normal limits", "N")


class EmrSimulator:
    """Receives ORM messages and emits delayed ORU messages.

    Deliveries are scheduled on the shared scheduler under the order's
    case id, so aborting a case sweeps any in-flight simulated results
    along with the engine's own timers.
    """

    def __init__(self, scheduler: Scheduler,
                 deliver: Callable[[bytes], object] | None = None,
                 profiles: dict[str, ResultProfile] | None = None,
                 auto_respond: bool = True) -> None:
        self._scheduler = scheduler
        self._deliver = deliver
        self._profiles = dict(profiles or {})
        self.auto_respond = auto_respond
        self._received: list[hl7.OrmFields] = []

    def set_deliver(self, deliver: Callable[[bytes], object]) -> None:
        self._deliver = deliver

    def set_profile(self, test_code: str, profile: ResultProfile) -> None:
        self._profiles[test_code] = profile

    @property
    def received(self) -> list[hl7.OrmFields]:
        return list(self._received)

    def handle_order(self, raw: bytes, case_id: str, at: datetime) -> bytes:
        """Accept one ORM; schedule its result if auto-response is on."""
        try:
            order = hl7.decode_orm(raw)
        except hl7.Hl7DecodeError as exc:
            return hl7.make_ack(raw, "AE", at, str(exc))
        self._received.append(order)
        if self.auto_respond and self._deliver is not None:
            profile = self._profiles.get(order.test_code, DEFAULT_PROFILE)
            due = at + profile.latency
            self._scheduler.schedule(
                case_id=case_id,
                task_id=f"emr:{order.test_code}",
                due_at=due,
                callback=lambda timer, order=order, profile=profile: self._emit(
                    order, profile, timer.due_at
                ),
            )
        return hl7.make_ack(raw, "AA", at)

    def _emit(self, order: hl7.OrmFields, profile: ResultProfile, at: datetime) -> None:
        raw = self.build_result(order.placer_order_id, order.patient_ref,
                                order.test_code, profile.value,
                                profile.abnormal_flag, at)
        if self._deliver is not None:
            self._deliver(raw)

    @staticmethod
    def build_result(placer_order_id: str, patient_ref: str, test_code: str,
                     value: str, abnormal_flag: str | None,
                     observed_at: datetime) -> bytes:
        """ORU bytes for one fulfilled order; filler id derives from placer."""
        return hl7.encode_oru(
            patient_ref=patient_ref,
            placer_order_id=placer_order_id,
            filler_order_id=f"F-{placer_order_id}",
            test_code=test_code,
            value=value,
            abnormal_flag=abnormal_flag,
            observed_at=observed_at,
        )
