"""The v2 wire codec: escapes, round trips, acknowledgements, bad input."""

from datetime import datetime, timezone
from importlib import resources

import pytest
from hypothesis import given, settings, strategies as st

from careflow import hl7
from careflow.hl7 import (
    Hl7DecodeError,
    decode_orm,
    decode_oru,
    encode_orm,
    encode_oru,
    escape_field,
    make_ack,
    parse_message,
    unescape_field,
)

AT = datetime(2024, 1, 1, 8, 30, 0, tzinfo=timezone.utc)


def sample_blocks() -> list[bytes]:
    """The bundled vectors: blank-line-separated, one segment per line."""
    text = (
        resources.files("careflow.fixtures")
        .joinpath("hl7_samples.er7")
        .read_text()
    )
    blocks = []
    current: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        if not line.strip():
            if current:
                blocks.append(("\r".join(current) + "\r").encode("latin-1"))
                current = []
            continue
        current.append(line)
    if current:
        blocks.append(("\r".join(current) + "\r").encode("latin-1"))
    return blocks


# -- escapes ---------------------------------------------------------------

@pytest.mark.parametrize("plain,wire", [
    ("a|b", r"a\F\b"),
    ("a^b", r"a\S\b"),
    ("a&b", r"a\T\b"),
    ("a~b", r"a\R\b"),
    ("a\\b", r"a\E\b"),
    ("", ""),
    ("plain", "plain"),
])
def test_escape_table(plain, wire):
    assert escape_field(plain) == wire
    assert unescape_field(wire) == plain


def test_escape_all_separators_at_once():
    nasty = "|^&~\\" * 3
    assert unescape_field(escape_field(nasty)) == nasty
    assert "|" not in escape_field(nasty)


def test_unescape_is_lenient_on_unknown_sequences():
    # \X\ is not ours; a lenient decode keeps the raw text
    assert unescape_field(r"a\X\b") == r"a\X\b"
    assert unescape_field("trailing\\") == "trailing\\"


@given(st.text(st.characters(codec="latin-1", exclude_characters="\r\n"), max_size=40))
def test_escape_round_trip(value):
    assert unescape_field(escape_field(value)) == value


# -- bundled vectors -------------------------------------------------------

def test_bundled_orm_vector():
    orm = decode_orm(sample_blocks()[0])
    assert orm.patient_ref == "PAT-7^^^WARD"
    assert orm.placer_order_id == "case-0001-O01"
    assert orm.test_code == "TROPONIN"
    assert orm.requested_at == datetime(2024, 1, 1, 8, 0, tzinfo=timezone.utc)


def test_bundled_oru_vectors():
    blocks = sample_blocks()
    normal = decode_oru(blocks[1])
    assert normal.test_code == "TROPONIN"
    assert normal.value == "0.01 ng/mL"
    assert normal.abnormal_flag == "N"
    assert normal.placer_order_id == "case-0001-O01"
    assert normal.filler_order_id == "F-case-0001-O01"
    assert normal.observed_at == datetime(2024, 1, 1, 8, 25, tzinfo=timezone.utc)

    cbc = decode_oru(blocks[4])
    assert cbc.abnormal_flag == "H"
    assert cbc.value == "WBC 13.1 H; platelets ok"


def test_bundled_escaped_vector_decodes_every_separator():
    ecg = decode_oru(sample_blocks()[2])
    assert ecg.value == "rate 61 & PR ^ 210ms | QRS ~ QT ok \\ end"
    assert ecg.abnormal_flag == "A"


def test_bundled_ack_vector():
    ack = parse_message(sample_blocks()[3])
    assert ack.message_type == "ACK"
    msa = ack.segment("MSA")
    assert msa.field(1) == "AA"
    assert msa.field(2) == "F-case-0001-O01"


# -- encode / decode round trips -------------------------------------------

def test_orm_round_trip():
    raw = encode_orm("PAT-1", "case-0001-O01", "TROPONIN", AT)
    orm = decode_orm(raw)
    assert orm.patient_ref == "PAT-1"
    assert orm.placer_order_id == "case-0001-O01"
    assert orm.test_code == "TROPONIN"
    assert orm.requested_at == AT
    assert orm.control_id == "case-0001-O01"
    # deterministic bytes
    assert raw == encode_orm("PAT-1", "case-0001-O01", "TROPONIN", AT)


def test_oru_round_trip_with_flag():
    raw = encode_oru("PAT-1", "case-0001-O03", "F-17", "TROPONIN",
                     "2.30 ng/mL", "H", AT)
    oru = decode_oru(raw)
    assert oru.value == "2.30 ng/mL"
    assert oru.abnormal_flag == "H"
    assert oru.filler_order_id == "F-17"
    assert oru.observed_at == AT


def test_oru_round_trip_without_flag():
    raw = encode_oru("PAT-1", "O-1", "F-1", "ECG", "sinus rhythm", None, AT)
    assert decode_oru(raw).abnormal_flag is None


def test_msh_field_numbering():
    """MSH-1 is the separator itself; later fields shift by one slot."""
    msh = parse_message(encode_orm("P", "O-1", "ECG", AT)).msh
    assert msh.field(1) == "|"
    assert msh.field(2) == r"^~\&"
    assert msh.field(9) == "ORM^O01"
    assert msh.field(10) == "O-1"
    assert msh.field(12) == "2.5"


@given(
    patient=st.text(st.characters(codec="latin-1", exclude_characters="\r\n"), min_size=1, max_size=24),
    order_id=st.text(st.characters(codec="latin-1", exclude_characters="\r\n"), min_size=1, max_size=24),
    value=st.text(st.characters(codec="latin-1", exclude_characters="\r\n"), max_size=64),
    flag=st.sampled_from([None, "N", "H", "L", "A"]),
)
@settings(max_examples=200)
def test_oru_survives_any_field_content(patient, order_id, value, flag):
    """Separators inside field values never corrupt neighbouring fields."""
    raw = encode_oru(patient, order_id, "F-" + order_id, "CBC", value, flag, AT)
    oru = decode_oru(raw)
    assert oru.patient_ref == patient
    assert oru.placer_order_id == order_id
    assert oru.value == value
    assert oru.abnormal_flag == flag


# -- acknowledgements ------------------------------------------------------

def test_ack_swaps_endpoints_and_quotes_control_id():
    original = encode_oru("PAT-1", "O-1", "F-1", "ECG", "ok", None, AT)
    ack_raw = make_ack(original, "AA", AT)
    ack = parse_message(ack_raw)
    assert ack.message_type == "ACK"
    assert ack.segment("MSA").field(2) == "F-1"
    # sender/receiver swapped relative to the original
    original_msh = parse_message(original).msh
    assert ack.msh.field(3) == original_msh.field(5)
    assert ack.msh.field(5) == original_msh.field(3)


def test_ack_error_carries_text():
    original = encode_orm("P", "O-1", "ECG", AT)
    ack = parse_message(make_ack(original, "AE", AT, text="no such order"))
    msa = ack.segment("MSA")
    assert msa.field(1) == "AE"
    assert "no such order" in msa.value(3)


def test_ack_on_garbage_still_produces_an_ack():
    ack = parse_message(make_ack(b"\x00\xff not hl7", "AE", AT, text="unparseable"))
    assert ack.segment("MSA").field(1) == "AE"


def test_ack_rejects_unknown_code():
    with pytest.raises(ValueError):
        make_ack(encode_orm("P", "O", "ECG", AT), "OK", AT)


# -- malformed input -------------------------------------------------------

@pytest.mark.parametrize("raw,reason", [
    (b"", "empty"),
    (b"   \r  \r", "empty"),
    (b"PID|1|x\rMSH|^~\\&|", "missing-msh"),
    (b"XXXX|field", "bad-segment"),
    (b"M|1", "bad-segment"),
])
def test_parse_rejections(raw, reason):
    with pytest.raises(Hl7DecodeError) as exc:
        parse_message(raw)
    assert exc.value.reason == reason


def test_decode_wrong_type():
    orm = encode_orm("P", "O-1", "ECG", AT)
    with pytest.raises(Hl7DecodeError) as exc:
        decode_oru(orm)
    assert exc.value.reason == "wrong-type"
    oru = encode_oru("P", "O-1", "F-1", "ECG", "v", None, AT)
    with pytest.raises(Hl7DecodeError) as exc:
        decode_orm(oru)
    assert exc.value.reason == "wrong-type"


def test_decode_missing_segments_and_fields():
    headerless = b"MSH|^~\\&|EMR|LAB|CAREFLOW|WARD|20240101080000||ORU^R01|C1|P|2.5\r"
    with pytest.raises(Hl7DecodeError) as exc:
        decode_oru(headerless)
    assert exc.value.reason == "missing-segment"

    no_placer = (
        b"MSH|^~\\&|EMR|LAB|CAREFLOW|WARD|20240101080000||ORU^R01|C1|P|2.5\r"
        b"OBR|1|||ECG\r"
        b"OBX|1|ST|ECG||v\r"
    )
    with pytest.raises(Hl7DecodeError) as exc:
        decode_oru(no_placer)
    assert exc.value.reason == "missing-field"


def test_line_ending_tolerance():
    """\\n and \\r\\n framed messages parse the same as \\r framed ones."""
    strict = encode_orm("P", "O-1", "ECG", AT)
    relaxed = strict.replace(b"\r", b"\n")
    windows = strict.replace(b"\r", b"\r\n")
    assert decode_orm(relaxed) == decode_orm(strict)
    assert decode_orm(windows) == decode_orm(strict)


@given(st.binary(max_size=200))
@settings(max_examples=300)
def test_parser_is_total(raw):
    """Arbitrary bytes either parse or raise the structured error. Nothing else."""
    try:
        message = parse_message(raw)
        assert message.segments
    except Hl7DecodeError:
        pass


def test_timestamp_format():
    assert hl7.format_instant(AT) == "20240101083000"
    assert hl7.parse_instant("20240101083000") == AT
    with pytest.raises(Hl7DecodeError):
        hl7.parse_instant("yesterday")
