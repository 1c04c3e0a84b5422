"""Append-only event log with CSV and XES export.

Every engine event becomes one :class:`EventLogEntry` carrying a global
sequence number on top of the per-case one, the acting user when there
was one, the raw HL7 bytes when the event came from or produced a wire
message, and free-form annotations (such as scene processing latency)
that sit outside the event payload so replay stays byte-deterministic.

The file store writes length-prefixed JSON records and recovers from a
torn tail: on open, a partial final record — the signature of a crash
mid-write — is dropped and the file truncated back to the last complete
record. Everything before it is preserved verbatim.
"""

from __future__ import annotations

import base64
import csv
import io
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Iterator
from xml.etree import ElementTree

from .clock import isoformat, parse_instant
from .events import EngineEvent, EventKind

_LENGTH = struct.Struct(">I")


@dataclass(frozen=True)
class EventLogEntry:
    global_seq: int
    case_id: str
    case_seq: int
    kind: str
    at: datetime
    actor: str | None = None
    payload: dict[str, Any] = field(default_factory=dict)
    annotations: dict[str, Any] = field(default_factory=dict)
    raw_hl7: bytes | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "global_seq": self.global_seq,
            "case_id": self.case_id,
            "case_seq": self.case_seq,
            "kind": self.kind,
            "at": isoformat(self.at),
            "actor": self.actor,
            "payload": self.payload,
            "annotations": self.annotations,
            "raw_hl7": (
                base64.b64encode(self.raw_hl7).decode("ascii")
                if self.raw_hl7 is not None
                else None
            ),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EventLogEntry":
        raw = data.get("raw_hl7")
        return cls(
            global_seq=data["global_seq"],
            case_id=data["case_id"],
            case_seq=data["case_seq"],
            kind=data["kind"],
            at=parse_instant(data["at"]),
            actor=data.get("actor"),
            payload=data.get("payload", {}),
            annotations=data.get("annotations", {}),
            raw_hl7=base64.b64decode(raw) if raw else None,
        )

    def to_engine_event(self) -> EngineEvent:
        return EngineEvent(
            case_id=self.case_id,
            seq=self.case_seq,
            at=self.at,
            kind=EventKind(self.kind),
            detail=self.payload,
        )


class MemoryEventStore:
    """In-process log; also the in-memory half of the file store."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: list[EventLogEntry] = []

    def append(self, event: EngineEvent, *, actor: str | None = None,
               raw: bytes | None = None,
               extra: dict[str, Any] | None = None) -> EventLogEntry:
        with self._lock:
            entry = EventLogEntry(
                global_seq=len(self._entries) + 1,
                case_id=event.case_id,
                case_seq=event.seq,
                kind=event.kind.value,
                at=event.at,
                actor=actor,
                payload=event.detail,
                annotations=dict(extra) if extra else {},
                raw_hl7=raw,
            )
            self._entries.append(entry)
            self._persist(entry)
            return entry

    def _persist(self, entry: EventLogEntry) -> None:
        pass

    def read(self, case_id: str | None = None, kind: str | None = None,
             after_global_seq: int = 0,
             limit: int | None = None) -> list[EventLogEntry]:
        with self._lock:
            entries = list(self._entries)
        out = [
            e for e in entries
            if e.global_seq > after_global_seq
            and (case_id is None or e.case_id == case_id)
            and (kind is None or e.kind == kind)
        ]
        return out[:limit] if limit is not None else out

    def case_events(self, case_id: str) -> list[EngineEvent]:
        """The case's events in order, ready to fold."""
        return [e.to_engine_event() for e in self.read(case_id=case_id)]

    def case_ids(self) -> list[str]:
        with self._lock:
            seen: dict[str, None] = {}
            for entry in self._entries:
                seen.setdefault(entry.case_id, None)
            return list(seen)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def close(self) -> None:
        pass


class FileEventStore(MemoryEventStore):
    """Durable log: 4-byte big-endian length + JSON, one record per entry.

    Opening an existing file replays it into memory, so a restarted
    process sees exactly what the crashed one had acknowledged. With
    ``fsync=True`` (the default) every append reaches the disk before
    the engine moves on.
    """

    def __init__(self, path: str | os.PathLike, fsync: bool = True) -> None:
        super().__init__()
        self.path = os.fspath(path)
        self._fsync = fsync
        good_end = self._replay()
        self._file = open(self.path, "ab")
        if self._file.tell() != good_end:
            # torn tail from a crash mid-write: drop the partial record
            self._file.truncate(good_end)
            self._file.seek(good_end)

    def _replay(self) -> int:
        if not os.path.exists(self.path):
            return 0
        good_end = 0
        with open(self.path, "rb") as fp:
            while True:
                header = fp.read(_LENGTH.size)
                if len(header) < _LENGTH.size:
                    break
                (length,) = _LENGTH.unpack(header)
                body = fp.read(length)
                if len(body) < length:
                    break
                try:
                    entry = EventLogEntry.from_dict(json.loads(body.decode("utf-8")))
                except (ValueError, KeyError):
                    break
                self._entries.append(entry)
                good_end = fp.tell()
        return good_end

    def _persist(self, entry: EventLogEntry) -> None:
        body = json.dumps(
            entry.to_dict(), separators=(",", ":"), ensure_ascii=False
        ).encode("utf-8")
        self._file.write(_LENGTH.pack(len(body)) + body)
        self._file.flush()
        if self._fsync:
            os.fsync(self._file.fileno())

    def close(self) -> None:
        self._file.close()


def export_csv(entries: Iterable[EventLogEntry], fp: io.TextIOBase) -> int:
    """Write one row per entry; returns the row count (header excluded)."""
    writer = csv.writer(fp, lineterminator="\r\n")
    writer.writerow(
        ["global_seq", "case_id", "case_seq", "kind", "task_id", "actor", "timestamp"]
    )
    count = 0
    for entry in entries:
        writer.writerow([
            entry.global_seq,
            entry.case_id,
            entry.case_seq,
            entry.kind,
            entry.payload.get("task_id", ""),
            entry.actor or "",
            isoformat(entry.at),
        ])
        count += 1
    return count


def _xes_string(parent: ElementTree.Element, key: str, value: str) -> None:
    ElementTree.SubElement(parent, "string", {"key": key, "value": value})


def export_xes(entries: Iterable[EventLogEntry], fp: io.BufferedIOBase) -> int:
    """Write one trace per case, one event per entry; returns event count.

    Events carry ``concept:name`` (the task when there is one, else the
    event kind), ``time:timestamp``, and ``org:resource`` for attributed
    actions, which is what mainstream process-mining tools expect.
    """
    log = ElementTree.Element("log", {
        "xes.version": "1.0",
        "xmlns": "http://www.xes-standard.org/",
    })
    for prefix, uri in (
        ("concept", "http://www.xes-standard.org/concept.xesext"),
        ("time", "http://www.xes-standard.org/time.xesext"),
        ("org", "http://www.xes-standard.org/org.xesext"),
    ):
        ElementTree.SubElement(log, "extension", {
            "name": prefix.capitalize(), "prefix": prefix, "uri": uri,
        })
    traces: dict[str, ElementTree.Element] = {}
    count = 0
    for entry in entries:
        trace = traces.get(entry.case_id)
        if trace is None:
            trace = ElementTree.SubElement(log, "trace")
            _xes_string(trace, "concept:name", entry.case_id)
            traces[entry.case_id] = trace
        event = ElementTree.SubElement(trace, "event")
        name = entry.payload.get("task_id") or entry.kind
        _xes_string(event, "concept:name", name)
        _xes_string(event, "careflow:kind", entry.kind)
        ElementTree.SubElement(event, "date", {
            "key": "time:timestamp", "value": isoformat(entry.at),
        })
        if entry.actor:
            _xes_string(event, "org:resource", entry.actor)
        count += 1
    tree = ElementTree.ElementTree(log)
    ElementTree.indent(tree)
    tree.write(fp, encoding="utf-8", xml_declaration=True)
    return count


def read_file_entries(path: str | os.PathLike) -> Iterator[EventLogEntry]:
    """Stream a log file without holding it open for writing."""
    with open(path, "rb") as fp:
        while True:
            header = fp.read(_LENGTH.size)
            if len(header) < _LENGTH.size:
                return
            (length,) = _LENGTH.unpack(header)
            body = fp.read(length)
            if len(body) < length:
                return
            try:
                yield EventLogEntry.from_dict(json.loads(body.decode("utf-8")))
            except (ValueError, KeyError):
                return
