"""The HTTP console: REST surface, role gates, exports, and the SSE feed."""

import csv
import io
import json
from xml.etree import ElementTree

import pytest
from fastapi.testclient import TestClient

from careflow.runtime import virtual_runtime
from careflow.server import create_app

ANSWERS_HIGH = [
    ("pain-character", "typical"),
    ("pain-location", "left-side"),
    ("pain-radiation", "none"),
    ("pain-triggers", "rest"),
]

ANSWERS_LOW = [
    ("pain-character", "atypical"),
    ("pain-location", "left-side"),
    ("pain-radiation", "none"),
    ("pain-triggers", "exertion"),
]


@pytest.fixture
def client(chest_pain_text):
    rt = virtual_runtime()
    rt.deploy_document(chest_pain_text)
    with TestClient(create_app(rt)) as c:
        c.runtime = rt
        yield c
    rt.close()


def start_case(client, patient="PAT-1") -> str:
    resp = client.post("/v1/cases", json={
        "guideline_id": "chest-pain-v1", "patient_ref": patient,
    }, headers={"X-Actor": "reception"})
    assert resp.status_code == 201
    return resp.json()["case_id"]


def answer_all(client, case_id, answers=ANSWERS_HIGH, role="doctor"):
    for question_id, option in answers:
        resp = client.post(f"/v1/cases/{case_id}/answers",
                           json={"question_id": question_id, "option": option},
                           headers={"X-Role": role, "X-Actor": "doctor-1"})
        assert resp.status_code == 200, resp.text
    return resp.json()


def items_for(client, case_id, task_id):
    resp = client.get("/v1/work-items", params={"case_id": case_id})
    return [wi for wi in resp.json() if wi["task_id"] == task_id]


# -- health and time ----------------------------------------------------------

def test_health(client):
    body = client.get("/v1/health").json()
    assert body["status"] == "ok"
    assert body["test_mode"] is True
    assert body["now"] == "2024-01-01T08:00:00Z"


def test_time_advance(client):
    assert client.post("/v1/time/advance", json={"by": "90m"}).json()[
        "now"] == "2024-01-01T09:30:00Z"
    assert client.post("/v1/time/advance", json={
        "to": "2024-01-01T12:00:00Z"}).json()["now"] == "2024-01-01T12:00:00Z"


def test_time_advance_rejects_bad_requests(client):
    assert client.post("/v1/time/advance", json={}).status_code == 422
    assert client.post("/v1/time/advance", json={"by": "soon"}).status_code == 422
    # backwards is a conflict with the clock discipline
    resp = client.post("/v1/time/advance", json={"to": "2023-01-01T00:00:00Z"})
    assert resp.status_code == 409


# -- guidelines -----------------------------------------------------------------

def test_guideline_listing_and_fetch(client, chest_pain_text):
    listing = client.get("/v1/guidelines").json()
    assert [(g["guideline_id"], g["version"]) for g in listing] == [
        ("chest-pain-v1", 1)]
    assert listing[0]["tasks"] == 15

    fetched = client.get("/v1/guidelines/chest-pain-v1")
    assert fetched.status_code == 200
    # semantically identical to what was deployed
    from careflow import document
    assert document.parse(fetched.text) == document.parse(chest_pain_text)

    assert client.get("/v1/guidelines/unknown").status_code == 404
    assert client.get("/v1/guidelines/chest-pain-v1",
                      params={"version": 7}).status_code == 404


def test_deploy_new_version(client, chest_pain_text):
    resp = client.post("/v1/guidelines", content=chest_pain_text)
    assert resp.status_code == 201
    assert resp.json()["version"] == 2


def test_deploy_rejects_malformed_and_invalid(client, chest_pain_text):
    assert client.post("/v1/guidelines", content="{oops").status_code == 422

    broken = json.loads(chest_pain_text)
    broken["tasks"][-1].pop("outcome")  # terminal without outcome
    resp = client.post("/v1/guidelines", content=json.dumps(broken))
    assert resp.status_code == 422
    findings = resp.json()["findings"]
    assert any(f["code"] == "missing-outcome" for f in findings)


def test_validate_endpoint_reports_without_deploying(client, chest_pain_text):
    ok = client.post("/v1/guidelines/validate", content=chest_pain_text).json()
    assert ok["deployable"] is True
    assert ok["errors"] == []

    broken = json.loads(chest_pain_text)
    broken["edges"].append({"from": "pathway-done", "to": "survey"})
    bad = client.post("/v1/guidelines/validate",
                      content=json.dumps(broken)).json()
    assert bad["deployable"] is False
    assert bad["errors"]
    # validate must not register anything
    assert len(client.get("/v1/guidelines").json()) == 1


# -- case flow --------------------------------------------------------------------

def test_case_lifecycle_over_http(client):
    case_id = start_case(client)

    survey = client.get(f"/v1/cases/{case_id}/survey").json()
    assert survey["active"] is True
    assert survey["question"]["id"] == "pain-character"
    assert survey["index"] == 1 and survey["total"] == 4

    final_scene = answer_all(client, case_id)
    assert final_scene["active"] is False
    assert final_scene["kind"] == "SurveyComplete"
    assert final_scene["transitions"] == 3

    snap = client.get(f"/v1/cases/{case_id}").json()
    assert snap["bindings"]["chest-pain-score"] == 4
    assert snap["task_states"]["initial-tests"] == "Enabled"
    assert snap["status"] == "Running"

    listing = client.get("/v1/cases", params={"status": "Running"}).json()
    assert [c["case_id"] for c in listing] == [case_id]
    assert client.get("/v1/cases", params={"status": "Aborted"}).json() == []
    assert client.get("/v1/cases/case-9999").status_code == 404


def test_survey_role_gate(client):
    case_id = start_case(client)
    resp = client.post(f"/v1/cases/{case_id}/answers",
                       json={"question_id": "pain-character", "option": "typical"},
                       headers={"X-Role": "janitor"})
    assert resp.status_code == 403
    # no claimed role = operator tooling; allowed
    resp = client.post(f"/v1/cases/{case_id}/answers",
                       json={"question_id": "pain-character", "option": "typical"})
    assert resp.status_code == 200


def test_survey_error_codes(client):
    case_id = start_case(client)
    bad_option = client.post(f"/v1/cases/{case_id}/answers",
                             json={"question_id": "pain-character",
                                   "option": "purple"})
    assert bad_option.status_code == 422

    answer_all(client, case_id, ANSWERS_LOW)
    after = client.post(f"/v1/cases/{case_id}/answers",
                        json={"question_id": "pain-character",
                              "option": "typical"})
    assert after.status_code == 409  # survey is over
    assert client.get(f"/v1/cases/{case_id}/survey").json() == {"active": False}


def test_work_item_flow_and_role_gate(client):
    case_id = start_case(client)
    answer_all(client, case_id)
    (wi,) = items_for(client, case_id, "initial-tests")
    assert wi["role"] == "staff"

    denied = client.post(f"/v1/work-items/{wi['item_id']}/start",
                         headers={"X-Role": "doctor"})
    assert denied.status_code == 403

    started = client.post(f"/v1/work-items/{wi['item_id']}/start",
                          headers={"X-Role": "staff", "X-Actor": "staff-1"})
    assert started.status_code == 200
    assert started.json()["state"] == "InProgress"

    done = client.post(f"/v1/work-items/{wi['item_id']}/complete",
                       json={"outputs": {}},
                       headers={"X-Role": "staff", "X-Actor": "staff-1"})
    assert done.status_code == 200
    assert done.json()["task_states"]["initial-tests"] == "Completed"

    again = client.post(f"/v1/work-items/{wi['item_id']}/complete",
                        json={"outputs": {}})
    assert again.status_code == 409  # stale
    assert client.get("/v1/work-items/missing-wi-01").status_code == 404

    by_role = client.get("/v1/work-items", params={"role": "staff"}).json()
    assert by_role == []  # the staff item closed; nothing else is staff's


def test_completion_output_validation_maps_to_422(client):
    case_id = start_case(client)
    answer_all(client, case_id)
    complete = items_for(client, case_id, "initial-tests")[0]
    client.post(f"/v1/work-items/{complete['item_id']}/complete", json={"outputs": {}})

    # four results arrive; then the review decision wants its verdict output
    for code, value in [("ECG", "sinus"), ("CBC", "ok"),
                        ("TROPONIN", "0.01"), ("MYOGLOBIN", "40")]:
        order = client.runtime.bridge.outstanding(case_id, code)[0]
        from careflow.emr import EmrSimulator
        raw = EmrSimulator.build_result(order.placer_order_id, "PAT-1", code,
                                        value, "N", client.runtime.now())
        assert client.post("/v1/hl7", content=raw).headers["X-Ack-Code"] == "AA"

    (review,) = items_for(client, case_id, "evaluate-first")
    resp = client.post(f"/v1/work-items/{review['item_id']}/complete",
                       json={"outputs": {"verdict-first": "meh"}})
    assert resp.status_code == 422  # not one of the enumeration labels
    resp = client.post(f"/v1/work-items/{review['item_id']}/complete",
                       json={"outputs": {}})
    assert resp.status_code == 422  # missing output


def test_abort_over_http(client):
    case_id = start_case(client)
    resp = client.post(f"/v1/cases/{case_id}/abort",
                       json={"reason": "left against advice"},
                       headers={"X-Actor": "doctor-1"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "Aborted"
    assert body["work_items"] == [] or all(
        wi["state"] == "Cancelled" for wi in body["work_items"])
    assert client.post(f"/v1/cases/{case_id}/abort",
                       json={"reason": "again"}).status_code == 409


def test_start_case_unknown_guideline_404(client):
    resp = client.post("/v1/cases", json={
        "guideline_id": "no-such", "patient_ref": "P"})
    assert resp.status_code == 404


# -- HL7 endpoint ------------------------------------------------------------------

def test_hl7_endpoint_always_acks(client):
    resp = client.post("/v1/hl7", content=b"complete garbage")
    assert resp.status_code == 200
    assert resp.headers["X-Ack-Code"] == "AE"
    assert resp.headers["content-type"].startswith("application/hl7-v2")
    assert b"MSA|AE" in resp.content


# -- event log over HTTP -------------------------------------------------------------

def test_events_endpoints_and_filters(client):
    case_id = start_case(client)
    answer_all(client, case_id, ANSWERS_LOW)

    all_events = client.get("/v1/events").json()
    case_events = client.get(f"/v1/cases/{case_id}/events").json()
    assert len(all_events) == len(case_events) == 27

    tail = client.get(f"/v1/cases/{case_id}/events",
                      params={"after": case_events[-3]["global_seq"]}).json()
    assert [e["kind"] for e in tail] == ["TaskCompleted", "CaseCompleted"]

    two = client.get("/v1/events", params={"limit": 2}).json()
    assert [e["global_seq"] for e in two] == [1, 2]

    scenes = client.get("/v1/events", params={"kind": "SceneAnswered"}).json()
    assert len(scenes) == 4
    assert client.get("/v1/cases/case-9999/events").status_code == 404


def test_exports_agree(client):
    case_id = start_case(client)
    answer_all(client, case_id, ANSWERS_LOW)

    csv_resp = client.get("/v1/export/events.csv")
    assert csv_resp.headers["Content-Disposition"].endswith("events.csv")
    rows = list(csv.reader(io.StringIO(csv_resp.text)))
    csv_count = len(rows) - 1

    xes_resp = client.get("/v1/export/events.xes")
    root = ElementTree.fromstring(xes_resp.content)
    xes_events = root.findall(
        ".//{http://www.xes-standard.org/}event")
    assert csv_count == len(xes_events) == 27


def test_scene_latency_metrics(client):
    empty = client.get("/v1/metrics/scene-latency").json()
    assert empty == {"count": 0, "p50_ms": None, "p95_ms": None, "max_ms": None}

    for patient in ("PAT-1", "PAT-2"):
        answer_all(client, start_case(client, patient), ANSWERS_LOW)
    stats = client.get("/v1/metrics/scene-latency").json()
    assert stats["count"] == 8
    assert 0 < stats["p50_ms"] <= stats["p95_ms"] <= stats["max_ms"]


# -- SSE ----------------------------------------------------------------------------

def parse_sse(text):
    frames = []
    for block in text.split("\n\n"):
        if not block.strip() or block.startswith(":"):
            continue
        frame = {}
        for line in block.splitlines():
            key, _, value = line.partition(": ")
            frame[key] = value
        frames.append(frame)
    return frames


def test_stream_replays_and_closes_at_limit(client):
    case_id = start_case(client)
    answer_all(client, case_id, ANSWERS_LOW)
    resp = client.get("/v1/stream", params={"limit": 5, "max_wait": 0.2,
                                            "case_id": case_id})
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/event-stream")
    frames = parse_sse(resp.text)
    assert len(frames) == 5
    assert frames[0]["event"] == "CaseStarted"
    assert [int(f["id"]) for f in frames] == sorted(
        int(f["id"]) for f in frames)
    payload = json.loads(frames[0]["data"])
    assert payload["case_id"] == case_id


def test_stream_resumes_from_last_event_id(client):
    case_id = start_case(client)
    answer_all(client, case_id, ANSWERS_LOW)
    first = parse_sse(client.get(
        "/v1/stream",
        params={"limit": 3, "max_wait": 0.2, "case_id": case_id}).text)
    resume = parse_sse(client.get(
        "/v1/stream", params={"limit": 2, "max_wait": 0.2, "case_id": case_id},
        headers={"Last-Event-ID": first[-1]["id"]}).text)
    assert int(resume[0]["id"]) == int(first[-1]["id"]) + 1


def test_stream_role_filter(client):
    case_id = start_case(client)
    answer_all(client, case_id, ANSWERS_LOW)
    staff_view = parse_sse(client.get(
        "/v1/stream",
        params={"case_id": case_id, "role": "staff", "max_wait": 0.05}).text)
    # the survey work item is addressed to the doctor; staff never sees it
    kinds = [f["event"] for f in staff_view]
    assert "WorkItemCreated" not in kinds
    assert "CaseStarted" in kinds  # unaddressed events always pass
