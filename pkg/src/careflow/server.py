"""HTTP console for the enactment runtime.

Everything the engine can do is reachable under ``/v1``: deploy and
inspect guidelines, start and drive cases, answer survey scenes, pick up
and complete work items, feed lab results in as raw HL7, export the
event log, and follow live activity over SSE.

Role checks are header-based and deliberately lightweight: a client that
sends ``X-Role`` is held to it (403 on mismatch with the task's role); a
client that sends nothing is treated as an operator tool and waved
through. ``X-Actor`` is recorded on every event the call produces.
"""

from __future__ import annotations

import json
import math
import queue
import statistics
from io import BytesIO, StringIO
from typing import Any, Iterator

from fastapi import FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from . import document
from .clock import ClockRegression, isoformat, parse_instant
from .engine import (
    AlreadyAnswered,
    CaseNotRunning,
    DeploymentBlocked,
    EngineError,
    InvalidOutputValue,
    MissingOutput,
    NoActiveSurvey,
    StaleWorkItem,
    UndeclaredOutput,
    UnknownCase,
    UnknownGuideline,
    UnknownWorkItem,
)
from .eventlog import export_csv, export_xes
from .model import DurationError, parse_duration
from .runtime import Runtime
from .scheduler import DueInPast, UnknownTimer
from .scoring import SCENE, SceneState, ScoringError
from .validation import validate

_NOT_FOUND = (UnknownGuideline, UnknownCase, UnknownWorkItem, UnknownTimer)
_CONFLICT = (CaseNotRunning, StaleWorkItem, AlreadyAnswered, NoActiveSurvey,
             DueInPast, ClockRegression)
_UNPROCESSABLE = (MissingOutput, UndeclaredOutput, InvalidOutputValue,
                  ScoringError, document.DocumentError, DurationError)

_HEARTBEAT_SECONDS = 15.0


class StartCaseBody(BaseModel):
    guideline_id: str
    patient_ref: str
    version: int | None = None


class AbortBody(BaseModel):
    reason: str = "aborted via console"


class AnswerBody(BaseModel):
    question_id: str
    option: str


class CompleteBody(BaseModel):
    outputs: dict[str, Any] = {}


class AdvanceBody(BaseModel):
    by: str | None = None
    to: str | None = None


def _scene_to_dict(scene: SceneState | None) -> dict[str, Any]:
    if scene is None:
        return {"active": False}
    out: dict[str, Any] = {
        "active": scene.kind == SCENE,
        "kind": scene.kind,
        "index": scene.index,
        "total": scene.total,
        "transitions": scene.transitions,
    }
    if scene.question is not None:
        out["question"] = {
            "id": scene.question.id,
            "prompt": scene.question.prompt,
            "options": [o.label for o in scene.question.options],
        }
    return out


def _finding_dicts(findings) -> list[dict[str, str]]:
    return [
        {"severity": f.severity, "code": f.code,
         "message": f.message, "where": f.where}
        for f in findings
    ]


def _role_allowed(claimed: str | None, required: str | None) -> bool:
    # No claim means an operator tool; no requirement means anyone.
    return claimed is None or required is None or claimed == required


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="careflow console", version="1.0")
    rt = runtime

    @app.exception_handler(EngineError)
    async def _engine_error(request: Request, exc: EngineError):
        if isinstance(exc, _NOT_FOUND):
            status = 404
        elif isinstance(exc, _CONFLICT):
            status = 409
        else:
            status = 422
        body: dict[str, Any] = {
            "detail": str(exc),
            "code": getattr(exc, "code", "engine-error"),
        }
        if isinstance(exc, DeploymentBlocked):
            body["findings"] = _finding_dicts(exc.report.findings)
        return JSONResponse(body, status_code=status)

    @app.exception_handler(ScoringError)
    async def _scoring_error(request: Request, exc: ScoringError):
        return JSONResponse({"detail": str(exc)}, status_code=422)

    @app.exception_handler(document.DocumentError)
    async def _document_error(request: Request, exc: document.DocumentError):
        return JSONResponse({"detail": str(exc)}, status_code=422)

    @app.exception_handler(DurationError)
    async def _duration_error(request: Request, exc: DurationError):
        return JSONResponse({"detail": str(exc)}, status_code=422)

    @app.exception_handler(ClockRegression)
    async def _clock_error(request: Request, exc: ClockRegression):
        return JSONResponse({"detail": str(exc)}, status_code=409)

    @app.exception_handler(DueInPast)
    async def _due_error(request: Request, exc: DueInPast):
        return JSONResponse({"detail": str(exc)}, status_code=409)

    # -- meta ---------------------------------------------------------------

    @app.get("/v1/health")
    def health() -> dict[str, Any]:
        return {"status": "ok", "now": isoformat(rt.now()),
                "test_mode": rt.test_mode, "events": len(rt.store)}

    @app.get("/v1/time")
    def get_time() -> dict[str, Any]:
        return {"now": isoformat(rt.now()), "test_mode": rt.test_mode}

    @app.post("/v1/time/advance")
    def advance_time(body: AdvanceBody):
        if not rt.test_mode:
            return JSONResponse(
                {"detail": "virtual time is only adjustable in test mode"},
                status_code=409)
        if body.by is not None:
            rt.advance_by(parse_duration(body.by))
        elif body.to is not None:
            rt.advance_to(parse_instant(body.to))
        else:
            return JSONResponse(
                {"detail": "need 'by' (duration) or 'to' (instant)"},
                status_code=422)
        return {"now": isoformat(rt.now())}

    # -- guidelines ---------------------------------------------------------

    @app.post("/v1/guidelines", status_code=201)
    async def deploy_guideline(request: Request) -> dict[str, Any]:
        text = (await request.body()).decode("utf-8")
        deployment = rt.deploy_document(text)
        report = validate(deployment.definition)
        return {
            "guideline_id": deployment.definition.id,
            "version": deployment.version,
            "document_version": deployment.definition.version,
            "warnings": _finding_dicts(report.warnings),
        }

    @app.get("/v1/guidelines")
    def list_guidelines() -> list[dict[str, Any]]:
        out = []
        for dep in rt.engine.list_deployments():
            d = dep.definition
            out.append({
                "guideline_id": d.id,
                "title": d.title,
                "version": dep.version,
                "document_version": d.version,
                "tasks": len(d.tasks),
            })
        return out

    @app.get("/v1/guidelines/{guideline_id}")
    def get_guideline(guideline_id: str, version: int | None = None):
        dep = rt.engine.get_deployment(guideline_id, version)
        return Response(document.serialize(dep.definition),
                        media_type="application/json")

    @app.post("/v1/guidelines/validate")
    async def validate_guideline(request: Request) -> dict[str, Any]:
        text = (await request.body()).decode("utf-8")
        definition = document.parse(text)
        report = validate(definition)
        return {
            "deployable": report.is_deployable,
            "errors": _finding_dicts(report.errors),
            "warnings": _finding_dicts(report.warnings),
        }

    # -- cases --------------------------------------------------------------

    @app.post("/v1/cases", status_code=201)
    def start_case(body: StartCaseBody,
                   x_actor: str | None = Header(default=None)):
        view = rt.start_case(body.guideline_id, body.patient_ref,
                             version=body.version, actor=x_actor)
        return view.to_dict()

    @app.get("/v1/cases")
    def list_cases(status: str | None = None,
                   guideline_id: str | None = None) -> list[dict[str, Any]]:
        return [v.to_dict() for v in rt.engine.list_cases(status, guideline_id)]

    @app.get("/v1/cases/{case_id}")
    def get_case(case_id: str) -> dict[str, Any]:
        return rt.engine.case_snapshot(case_id).to_dict()

    @app.post("/v1/cases/{case_id}/abort")
    def abort_case(case_id: str, body: AbortBody,
                   x_actor: str | None = Header(default=None)):
        view = rt.engine.abort_case(case_id, body.reason, rt.now(),
                                    actor=x_actor)
        return view.to_dict()

    @app.get("/v1/cases/{case_id}/events")
    def case_events(case_id: str, after: int = 0,
                    limit: int | None = Query(default=None, ge=1)):
        rt.engine.case_snapshot(case_id)  # 404 for unknown cases
        entries = rt.store.read(case_id=case_id, after_global_seq=after,
                                limit=limit)
        return [e.to_dict() for e in entries]

    @app.get("/v1/cases/{case_id}/survey")
    def survey_state(case_id: str) -> dict[str, Any]:
        return _scene_to_dict(rt.engine.survey_state(case_id))

    @app.post("/v1/cases/{case_id}/answers")
    def answer(case_id: str, body: AnswerBody,
               x_actor: str | None = Header(default=None),
               x_role: str | None = Header(default=None)):
        scene = rt.engine.survey_state(case_id)
        if scene is None:
            raise NoActiveSurvey(f"case {case_id} has no open survey")
        required = rt.engine.survey_role(case_id)
        if not _role_allowed(x_role, required):
            return JSONResponse(
                {"detail": f"survey requires role {required!r}"},
                status_code=403)
        result = rt.engine.answer_scene(case_id, body.question_id,
                                        body.option, rt.now(), actor=x_actor)
        return _scene_to_dict(result)

    # -- work items ---------------------------------------------------------

    @app.get("/v1/work-items")
    def work_items(role: str | None = None, case_id: str | None = None,
                   include_closed: bool = False) -> list[dict[str, Any]]:
        return rt.engine.list_work_items(role, case_id, include_closed)

    @app.get("/v1/work-items/{item_id}")
    def work_item(item_id: str) -> dict[str, Any]:
        return rt.engine.get_work_item(item_id)

    @app.post("/v1/work-items/{item_id}/start")
    def start_item(item_id: str,
                   x_actor: str | None = Header(default=None),
                   x_role: str | None = Header(default=None)):
        item = rt.engine.get_work_item(item_id)
        if not _role_allowed(x_role, item["role"]):
            return JSONResponse(
                {"detail": f"work item requires role {item['role']!r}"},
                status_code=403)
        return rt.engine.start_work_item(item_id, rt.now(), actor=x_actor)

    @app.post("/v1/work-items/{item_id}/complete")
    def complete_item(item_id: str, body: CompleteBody,
                      x_actor: str | None = Header(default=None),
                      x_role: str | None = Header(default=None)):
        item = rt.engine.get_work_item(item_id)
        if not _role_allowed(x_role, item["role"]):
            return JSONResponse(
                {"detail": f"work item requires role {item['role']!r}"},
                status_code=403)
        view = rt.engine.complete_work_item(item_id, body.outputs, rt.now(),
                                            actor=x_actor)
        return view.to_dict()

    # -- HL7 inbound --------------------------------------------------------

    @app.post("/v1/hl7")
    async def hl7_inbound(request: Request) -> Response:
        raw = await request.body()
        ack, _ = rt.inbound_hl7(raw)
        code = "AA" if b"|AA|" in ack else "AE"
        return Response(ack, media_type="application/hl7-v2",
                        headers={"X-Ack-Code": code})

    # -- event log ----------------------------------------------------------

    @app.get("/v1/events")
    def events(case_id: str | None = None, kind: str | None = None,
               after: int = 0,
               limit: int | None = Query(default=None, ge=1)):
        entries = rt.store.read(case_id=case_id, kind=kind,
                                after_global_seq=after, limit=limit)
        return [e.to_dict() for e in entries]

    @app.get("/v1/export/events.csv")
    def export_events_csv(case_id: str | None = None) -> Response:
        buf = StringIO()
        export_csv(rt.store.read(case_id=case_id), buf)
        return Response(buf.getvalue(), media_type="text/csv",
                        headers={"Content-Disposition":
                                 "attachment; filename=events.csv"})

    @app.get("/v1/export/events.xes")
    def export_events_xes(case_id: str | None = None) -> Response:
        buf = BytesIO()
        export_xes(rt.store.read(case_id=case_id), buf)
        return Response(buf.getvalue(), media_type="application/xml",
                        headers={"Content-Disposition":
                                 "attachment; filename=events.xes"})

    @app.get("/v1/metrics/scene-latency")
    def scene_latency() -> dict[str, Any]:
        samples = [
            e.annotations["processing_ms"]
            for e in rt.store.read(kind="SceneAnswered")
            if "processing_ms" in e.annotations
        ]
        if not samples:
            return {"count": 0, "p50_ms": None, "p95_ms": None, "max_ms": None}
        ordered = sorted(samples)

        def rank(q: float) -> float:
            # nearest-rank percentile
            idx = math.ceil(q * len(ordered)) - 1
            return ordered[min(max(idx, 0), len(ordered) - 1)]

        return {
            "count": len(ordered),
            "p50_ms": statistics.median(ordered),
            "p95_ms": rank(0.95),
            "max_ms": ordered[-1],
        }

    # -- live stream --------------------------------------------------------

    @app.get("/v1/stream")
    def stream(request: Request, case_id: str | None = None,
               role: str | None = None, after: int | None = None,
               limit: int | None = Query(default=None, ge=1),
               max_wait: float | None = Query(default=None, gt=0),
               last_event_id: str | None = Header(default=None)) -> StreamingResponse:
        """Server-sent events: replay from a point, then follow live.

        ``Last-Event-ID`` (or ``after``) is the global sequence number of
        the last entry the client saw. A ``role`` filter drops entries
        addressed to a different role; unaddressed entries always pass.
        ``limit`` closes the stream after that many events and
        ``max_wait`` closes it after that many seconds without one —
        both mainly for sampling the stream from scripts.
        """
        resume_from = 0
        if after is not None:
            resume_from = after
        elif last_event_id is not None:
            try:
                resume_from = int(last_event_id)
            except ValueError:
                resume_from = 0

        def wanted(entry) -> bool:
            if case_id is not None and entry.case_id != case_id:
                return False
            addressed = entry.payload.get("role")
            if role is not None and addressed is not None and addressed != role:
                return False
            return True

        def render(entry) -> str:
            data = json.dumps(entry.to_dict(), separators=(",", ":"))
            return f"id: {entry.global_seq}\nevent: {entry.kind}\ndata: {data}\n\n"

        def feed() -> Iterator[str]:
            token, q = rt.notifier.subscribe()
            sent = 0
            try:
                seen = resume_from
                for entry in rt.store.read(after_global_seq=resume_from):
                    seen = entry.global_seq
                    if wanted(entry):
                        yield render(entry)
                        sent += 1
                        if limit is not None and sent >= limit:
                            return
                while True:
                    timeout = _HEARTBEAT_SECONDS
                    if max_wait is not None:
                        timeout = min(timeout, max_wait)
                    try:
                        entry = q.get(timeout=timeout)
                    except queue.Empty:
                        if max_wait is not None:
                            return
                        yield ": keep-alive\n\n"
                        continue
                    if entry.global_seq <= seen:
                        continue  # already replayed from the store
                    seen = entry.global_seq
                    if wanted(entry):
                        yield render(entry)
                        sent += 1
                        if limit is not None and sent >= limit:
                            return
            finally:
                rt.notifier.unsubscribe(token)

        return StreamingResponse(feed(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache",
                                          "X-Accel-Buffering": "no"})

    return app
