"""Assembled system: clock, scheduler, engine, log, EMR loop, notifier.

One :class:`Runtime` owns every moving part and the wiring between them:

* engine events flow into the event store and fan out to subscribers;
* placed orders are encoded to HL7, registered with the bridge, and —
  when the simulator is on — answered after their configured latency;
* inbound HL7 results are decoded, delivered, and acknowledged;
* opening a runtime over an existing log file replays it: deployments
  come back from the sidecar file, cases are rebuilt event by event, and
  pending timers are re-registered under their original ids.

Virtual-clock runtimes advance only through :meth:`advance_to` /
:meth:`advance_by`; wall-clock ones can run a background ticker instead.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
from datetime import datetime, timedelta
from typing import Any

from . import document, hl7
from .clock import Clock, VirtualClock, isoformat
from .emr import EmrSimulator, Hl7Bridge, OrderRequest, ResultProfile
from .engine import CaseNotRunning, CaseView, Deployment, Engine
from .events import EngineEvent, EventKind
from .eventlog import EventLogEntry, FileEventStore, MemoryEventStore
from .model import GuidelineDefinition
from .scheduler import Scheduler

logger = logging.getLogger(__name__)


class Notifier:
    """Fan-out of log entries to live subscribers (the SSE stream)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subscribers: dict[int, "queue.Queue[EventLogEntry]"] = {}
        self._next_token = 1

    def subscribe(self) -> tuple[int, "queue.Queue[EventLogEntry]"]:
        with self._lock:
            token = self._next_token
            self._next_token += 1
            channel: "queue.Queue[EventLogEntry]" = queue.Queue()
            self._subscribers[token] = channel
            return token, channel

    def unsubscribe(self, token: int) -> None:
        with self._lock:
            self._subscribers.pop(token, None)

    def publish(self, entry: EventLogEntry) -> None:
        with self._lock:
            channels = list(self._subscribers.values())
        for channel in channels:
            channel.put(entry)


class _RuntimeSink:
    def __init__(self, store: MemoryEventStore, notifier: Notifier):
        self._store = store
        self._notifier = notifier

    def append(self, event: EngineEvent, *, actor: str | None = None,
               raw: bytes | None = None,
               extra: dict[str, Any] | None = None) -> None:
        entry = self._store.append(event, actor=actor, raw=raw, extra=extra)
        self._notifier.publish(entry)


class Runtime:
    def __init__(self, store: MemoryEventStore | None = None,
                 clock: Clock | None = None, *,
                 emr_auto: bool = True,
                 emr_profiles: dict[str, ResultProfile] | None = None,
                 recover: bool = True):
        self.clock = clock if clock is not None else VirtualClock()
        self.store = store if store is not None else MemoryEventStore()
        self.notifier = Notifier()
        self.scheduler = Scheduler(self.clock)
        self.engine = Engine(self.scheduler, sink=_RuntimeSink(self.store, self.notifier))
        self.bridge = Hl7Bridge()
        self.simulator = EmrSimulator(
            self.scheduler,
            deliver=lambda raw: self.inbound_hl7(raw),
            profiles=emr_profiles,
            auto_respond=emr_auto,
        )
        self.engine.order_encoder = self._encode_order
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()
        if recover and isinstance(self.store, FileEventStore) and len(self.store):
            self._recover()

    # -- configuration ------------------------------------------------------

    @property
    def test_mode(self) -> bool:
        return isinstance(self.clock, VirtualClock)

    def now(self) -> datetime:
        return self.clock.now()

    # -- deployment ---------------------------------------------------------

    def deploy_document(self, text: str, persist: bool = True) -> Deployment:
        definition = document.parse(text)
        deployment = self.engine.deploy(definition)
        if persist:
            self._persist_deployment(definition, deployment, text)
        return deployment

    def _sidecar_path(self) -> str | None:
        if isinstance(self.store, FileEventStore):
            return self.store.path + ".deployments.json"
        return None

    def _persist_deployment(self, definition: GuidelineDefinition,
                            deployment: Deployment, text: str) -> None:
        path = self._sidecar_path()
        if path is None:
            return
        records = []
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fp:
                records = json.load(fp)
        records.append({
            "guideline_id": definition.id,
            "version": deployment.version,
            "document": text,
        })
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fp:
            json.dump(records, fp, indent=2)
        os.replace(tmp, path)

    # -- case operations ----------------------------------------------------

    def start_case(self, guideline_id: str, patient_ref: str,
                   at: datetime | None = None, actor: str | None = None,
                   version: int | None = None) -> CaseView:
        at = at or self.now()
        view = self.engine.start_case(guideline_id, patient_ref, at,
                                      actor=actor, version=version)
        deployment = self.engine.get_deployment(
            view.guideline_id, view.deployment_version
        )
        self.bridge.register_case(view.case_id, deployment.order_items)
        # the entry task may already have placed orders during start
        return self.engine.case_snapshot(view.case_id)

    def _encode_order(self, order: OrderRequest) -> bytes:
        raw = self.bridge.encode_order(order)
        ack = self.simulator.handle_order(raw, case_id=order.case_id,
                                          at=order.requested_at)
        logger.debug("order %s acknowledged: %r", order.placer_order_id, ack)
        return raw

    def inbound_hl7(self, raw: bytes | str,
                    at: datetime | None = None) -> tuple[bytes, CaseView | None]:
        """Decode one inbound message, deliver it, and acknowledge.

        Anything that cannot be matched to a running case's order comes
        back as an application error (AE) acknowledgement; the caller
        always receives an ACK, never an exception.
        """
        at = at or self.now()
        if isinstance(raw, str):
            raw = raw.encode("latin-1")
        try:
            event = self.bridge.decode_result(raw)
        except hl7.Hl7DecodeError as exc:
            logger.warning("inbound message rejected: %s", exc)
            return self.bridge.make_ack(raw, "AE", at, str(exc)), None
        try:
            view = self.engine.deliver_clinical_event(event, at, raw=raw)
        except CaseNotRunning as exc:
            return self.bridge.make_ack(raw, "AE", at, str(exc)), None
        return self.bridge.make_ack(raw, "AA", at), view

    # -- time ---------------------------------------------------------------

    def advance_to(self, instant: datetime) -> None:
        self.scheduler.advance_to(instant)

    def advance_by(self, delta: timedelta) -> None:
        self.scheduler.advance_to(self.now() + delta)

    def start_ticker(self, interval: float = 0.2) -> None:
        """Poll-fire timers against a real clock (serve mode)."""
        if self._ticker is not None:
            return
        def run() -> None:
            while not self._stop.wait(interval):
                try:
                    self.scheduler.advance_to(self.clock.now())
                except Exception:
                    logger.exception("timer tick failed")
        self._ticker = threading.Thread(target=run, name="careflow-ticker", daemon=True)
        self._ticker.start()

    def close(self) -> None:
        self._stop.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2)
            self._ticker = None
        self.store.close()

    # -- recovery -----------------------------------------------------------

    def _recover(self) -> None:
        """Rebuild engine and bridge state from the log and its sidecar."""
        sidecar = self._sidecar_path()
        if sidecar and os.path.exists(sidecar):
            with open(sidecar, "r", encoding="utf-8") as fp:
                for record in json.load(fp):
                    definition = document.parse(record["document"])
                    deployment = self.engine.deploy(definition)
                    if deployment.version != record["version"]:
                        logger.warning(
                            "deployment version drift for %s: sidecar %s, engine %s",
                            definition.id, record["version"], deployment.version,
                        )
        now = self.now()
        for case_id in self.store.case_ids():
            events = self.store.case_events(case_id)
            started = events[0]
            if started.kind is not EventKind.CASE_STARTED:
                logger.error("case %s log does not begin at the start; skipped", case_id)
                continue
            deployment = self.engine.get_deployment(
                started.detail["guideline_id"],
                started.detail["deployment_version"],
            )
            view = self.engine.restore_case(
                deployment.definition, events, now, deployment
            )
            self.bridge.register_case(case_id, deployment.order_items)
            patient_ref = view.patient_ref
            for entry in self.store.read(case_id=case_id, kind=EventKind.ORDER_PLACED.value):
                self.bridge.restore_order(OrderRequest(
                    case_id=case_id,
                    patient_ref=patient_ref,
                    placer_order_id=entry.payload["placer_order_id"],
                    test_code=entry.payload["test_code"],
                    requested_at=entry.at,
                ))
            for entry in self.store.read(case_id=case_id, kind=EventKind.DATA_BOUND.value):
                placer = entry.payload.get("placer_order_id")
                if placer:
                    self.bridge.mark_fulfilled(placer, entry.at)
            logger.info("recovered case %s (%s)", case_id, view.status)


def virtual_runtime(store: MemoryEventStore | None = None, *,
                    emr_auto: bool = False,
                    emr_profiles: dict[str, ResultProfile] | None = None) -> Runtime:
    """A deterministic runtime: virtual clock, quiet EMR unless asked."""
    return Runtime(store=store, clock=VirtualClock(),
                   emr_auto=emr_auto, emr_profiles=emr_profiles)
