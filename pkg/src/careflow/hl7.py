"""Pipe-delimited HL7 v2.5 subset: ORM^O01 out, ORU^R01 in, ACK both ways.

Segments understood: MSH, PID, ORC, OBR, OBX, MSA. Encoding characters
are the standard ``^~\\&``; segments end with CR (0x0D). Field values are
escaped with the standard sequences (\\F\\ \\S\\ \\T\\ \\R\\ \\E\\), so
values containing delimiters round-trip byte-exactly.

Numbering follows HL7 convention: MSH-1 is the field separator itself and
MSH-2 the encoding characters, so for MSH the Nth field lives at split
position N-1; for every other segment it lives at position N.

``parse_message`` and ``decode_oru`` are total: any byte string either
parses or raises :class:`Hl7DecodeError` — never anything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

FIELD_SEP = "|"
ENCODING_CHARS = "^~\\&"
SEGMENT_TERMINATOR = "\r"
VERSION = "2.5"

ORM_TYPE = "ORM^O01"
ORU_TYPE = "ORU^R01"
ACK_TYPE = "ACK"

APP_ENGINE = "CAREFLOW"
FACILITY_ENGINE = "WARD"
APP_EMR = "EMR"
FACILITY_EMR = "LAB"

_TS_FORMAT = "%Y%m%d%H%M%S"

_ESCAPES = (
    ("\\", "\\E\\"),  # escape character first, it appears in the others
    ("|", "\\F\\"),
    ("^", "\\S\\"),
    ("&", "\\T\\"),
    ("~", "\\R\\"),
)


class Hl7DecodeError(Exception):
    """Raised for any malformed inbound message; carries a reason code."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class UnknownTestCode(Hl7DecodeError):
    """The result's test code maps to no declared data item."""

    def __init__(self, test_code: str):
        super().__init__("unknown-test-code", f"no data item mapped for test code {test_code!r}")
        self.test_code = test_code


class NoMatchingOrder(Hl7DecodeError):
    """The result references no order this system placed."""

    def __init__(self, placer_order_id: str):
        super().__init__("no-matching-order", f"no order with placer id {placer_order_id!r}")
        self.placer_order_id = placer_order_id


def escape_field(value: str) -> str:
    for char, seq in _ESCAPES:
        value = value.replace(char, seq)
    return value


def unescape_field(value: str) -> str:
    out: list[str] = []
    i = 0
    decode = {"F": "|", "S": "^", "T": "&", "R": "~", "E": "\\"}
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 2 < len(value) and value[i + 2] == "\\" and value[i + 1] in decode:
            out.append(decode[value[i + 1]])
            i += 3
        else:
            # Unknown or dangling escape: keep the raw text (lenient decode).
            out.append(ch)
            i += 1
    return "".join(out)


@dataclass
class Segment:
    name: str
    fields: list[str]

    def field(self, number: int) -> str:
        """Raw field content by HL7 number; empty string when absent."""
        if self.name == "MSH":
            if number == 1:
                return FIELD_SEP
            index = number - 1
        else:
            index = number
        if 0 < index < len(self.fields):
            return self.fields[index]
        return ""

    def value(self, number: int) -> str:
        """Unescaped field content by HL7 number."""
        return unescape_field(self.field(number))


@dataclass
class Hl7Message:
    segments: list[Segment]

    def segment(self, name: str) -> Segment | None:
        for segment in self.segments:
            if segment.name == name:
                return segment
        return None

    @property
    def msh(self) -> Segment:
        segment = self.segment("MSH")
        if segment is None:
            raise Hl7DecodeError("missing-msh", "message has no MSH segment")
        return segment

    @property
    def message_type(self) -> str:
        return self.msh.field(9)

    @property
    def control_id(self) -> str:
        return self.msh.field(10)


def parse_message(raw: bytes | str) -> Hl7Message:
    """Split raw bytes into segments and fields. Total over any input."""
    if isinstance(raw, bytes):
        text = raw.decode("latin-1")
    else:
        text = raw
    lines = [
        line
        for line in text.replace("\r\n", "\r").replace("\n", "\r").split("\r")
        if line.strip()
    ]
    if not lines:
        raise Hl7DecodeError("empty", "message contains no segments")
    segments = []
    for line in lines:
        fields = line.split(FIELD_SEP)
        name = fields[0]
        if len(name) != 3 or not name.isalnum():
            raise Hl7DecodeError("bad-segment", f"malformed segment name {name[:8]!r}")
        segments.append(Segment(name, fields))
    message = Hl7Message(segments)
    if message.segments[0].name != "MSH":
        raise Hl7DecodeError("missing-msh", "first segment must be MSH")
    return message


def format_instant(instant: datetime) -> str:
    return instant.astimezone(timezone.utc).strftime(_TS_FORMAT)


def parse_instant(text: str) -> datetime:
    try:
        return datetime.strptime(text, _TS_FORMAT).replace(tzinfo=timezone.utc)
    except ValueError:
        raise Hl7DecodeError("bad-timestamp", f"unparseable timestamp {text!r}")


def _message(segments: list[list[str]]) -> bytes:
    lines = [FIELD_SEP.join(fields) for fields in segments]
    return (SEGMENT_TERMINATOR.join(lines) + SEGMENT_TERMINATOR).encode("latin-1")


def _msh(sending: tuple[str, str], receiving: tuple[str, str], msg_type: str,
         control_id: str, at: datetime) -> list[str]:
    return [
        "MSH",
        ENCODING_CHARS,
        escape_field(sending[0]),
        escape_field(sending[1]),
        escape_field(receiving[0]),
        escape_field(receiving[1]),
        format_instant(at),
        "",
        msg_type,
        escape_field(control_id),
        "P",
        VERSION,
    ]


@dataclass(frozen=True)
class OruFields:
    """Structured content of one decoded ORU^R01 result."""

    control_id: str
    patient_ref: str
    placer_order_id: str
    filler_order_id: str
    test_code: str
    value: str
    abnormal_flag: str | None
    observed_at: datetime


@dataclass(frozen=True)
class OrmFields:
    """Structured content of one decoded ORM^O01 order."""

    control_id: str
    patient_ref: str
    placer_order_id: str
    test_code: str
    requested_at: datetime


def encode_orm(patient_ref: str, placer_order_id: str, test_code: str,
               requested_at: datetime) -> bytes:
    """Build an ORM^O01 new-order message. Same inputs, same bytes."""
    return _message([
        _msh((APP_ENGINE, FACILITY_ENGINE), (APP_EMR, FACILITY_EMR),
             ORM_TYPE, placer_order_id, requested_at),
        ["PID", "1", "", escape_field(patient_ref)],
        ["ORC", "NW", escape_field(placer_order_id)],
        ["OBR", "1", escape_field(placer_order_id), "", escape_field(test_code)],
    ])


def decode_orm(raw: bytes | str) -> OrmFields:
    message = parse_message(raw)
    if message.message_type != ORM_TYPE:
        raise Hl7DecodeError(
            "wrong-type", f"expected {ORM_TYPE}, got {message.message_type!r}"
        )
    orc = message.segment("ORC")
    obr = message.segment("OBR")
    pid = message.segment("PID")
    if orc is None or obr is None:
        raise Hl7DecodeError("missing-segment", "ORM needs ORC and OBR segments")
    placer = orc.value(2) or obr.value(2)
    if not placer:
        raise Hl7DecodeError("missing-field", "order carries no placer order id")
    test_code = obr.value(4)
    if not test_code:
        raise Hl7DecodeError("missing-field", "OBR-4 test code is empty")
    return OrmFields(
        control_id=message.msh.value(10),
        patient_ref=pid.value(3) if pid else "",
        placer_order_id=placer,
        test_code=test_code,
        requested_at=parse_instant(message.msh.field(7)),
    )


def encode_oru(patient_ref: str, placer_order_id: str, filler_order_id: str,
               test_code: str, value: str, abnormal_flag: str | None,
               observed_at: datetime) -> bytes:
    """Build an ORU^R01 result message (the mock EMR's side)."""
    return _message([
        _msh((APP_EMR, FACILITY_EMR), (APP_ENGINE, FACILITY_ENGINE),
             ORU_TYPE, filler_order_id, observed_at),
        ["PID", "1", "", escape_field(patient_ref)],
        ["OBR", "1", escape_field(placer_order_id), escape_field(filler_order_id),
         escape_field(test_code), "", "", format_instant(observed_at)],
        ["OBX", "1", "ST", escape_field(test_code), "",
         escape_field(value), "", "", escape_field(abnormal_flag or ""),
         "", "", "F", "", "", format_instant(observed_at)],
    ])


def decode_oru(raw: bytes | str) -> OruFields:
    """Decode a result message into its fields.

    Raises:
        Hl7DecodeError: for any structural problem (reason-coded).
    """
    message = parse_message(raw)
    if message.message_type != ORU_TYPE:
        raise Hl7DecodeError(
            "wrong-type", f"expected {ORU_TYPE}, got {message.message_type!r}"
        )
    obr = message.segment("OBR")
    obx = message.segment("OBX")
    pid = message.segment("PID")
    if obr is None or obx is None:
        raise Hl7DecodeError("missing-segment", "ORU needs OBR and OBX segments")
    test_code = obx.value(3) or obr.value(4)
    if not test_code:
        raise Hl7DecodeError("missing-field", "result carries no test code")
    placer = obr.value(2)
    if not placer:
        raise Hl7DecodeError("missing-field", "result carries no placer order id")
    timestamp_text = obx.field(14) or obr.field(7) or message.msh.field(7)
    flag = obx.value(8)
    return OruFields(
        control_id=message.msh.value(10),
        patient_ref=pid.value(3) if pid else "",
        placer_order_id=placer,
        filler_order_id=obr.value(3),
        test_code=test_code,
        value=obx.value(5),
        abnormal_flag=flag or None,
        observed_at=parse_instant(timestamp_text),
    )


def make_ack(original: bytes | str | Hl7Message, code: str, at: datetime,
             text: str = "") -> bytes:
    """Acknowledge a message: AA accepts, AE reports an application error."""
    if code not in ("AA", "AE", "AR"):
        raise ValueError(f"not an acknowledgement code: {code!r}")
    try:
        message = original if isinstance(original, Hl7Message) else parse_message(original)
        control_id = message.control_id
        sender = (message.msh.field(5) or APP_ENGINE, message.msh.field(6) or FACILITY_ENGINE)
        receiver = (message.msh.field(3) or APP_EMR, message.msh.field(4) or FACILITY_EMR)
    except Hl7DecodeError:
        control_id = ""
        sender = (APP_ENGINE, FACILITY_ENGINE)
        receiver = (APP_EMR, FACILITY_EMR)
    msa = ["MSA", code, control_id]
    if text:
        msa.append(escape_field(text))
    return _message([
        ["MSH", ENCODING_CHARS, sender[0], sender[1], receiver[0], receiver[1],
         format_instant(at), "", ACK_TYPE, f"ACK-{control_id}" if control_id else "ACK",
         "P", VERSION],
        msa,
    ])
