"""HTTP facade: session lifecycle, message delivery, events, student inspection.

One app serves many concurrent sessions; each session's events are processed
under its own lock (arrival order), and the student store serializes per
student. Observations are persisted before any ack leaves the process.
"""

from __future__ import annotations

import threading
import time
import uuid

from fastapi import Body, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .errors import (
    ConfigError,
    PhaseError,
    SessionError,
    SourceError,
    ValidationError,
    VideotutorError,
)
from .gateway import Gateway
from .ingestion import load_config, parse_config
from .orchestrator import InboundEvent, Session
from .pipeline import build_session
from .dsl import serialize_document
from .student_model import StudentStore


class SessionRecord:
    def __init__(self, session: Session | None, descriptor: dict):
        self.session = session
        self.descriptor = descriptor
        self.lock = threading.Lock()


def create_app(data_dir, gateway_factory, auth_token: str | None = None,
               offline: bool = True) -> FastAPI:
    """Build the service app.

    ``gateway_factory`` returns a fresh gateway per session, so scripted mock
    gateways start at their first entry for every new session.
    """
    app = FastAPI(title="videotutor")
    # the chat client is served from its own origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = StudentStore(data_dir)
    records: dict[str, SessionRecord] = {}

    app.state.store = store
    app.state.records = records

    def _auth(request: Request) -> None:
        if auth_token and request.headers.get("x-auth-token") != auth_token:
            raise HTTPException(status_code=401, detail="bad or missing X-Auth-Token")

    def _record(session_id: str) -> SessionRecord:
        record = records.get(session_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return record

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(records)}

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(...), request: Request = None):
        _auth(request)
        student_id = payload.get("student_id")
        if not student_id:
            raise HTTPException(status_code=422, detail="student_id is required")
        try:
            if "config" in payload:
                config = parse_config(payload["config"])
            elif "config_path" in payload:
                config = load_config(payload["config_path"], offline=offline)
            else:
                raise HTTPException(status_code=422, detail="config or config_path required")
        except (ConfigError, ValidationError, SourceError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        session_id = payload.get("session_id") or uuid.uuid4().hex[:12]
        if session_id in records:
            raise HTTPException(status_code=409, detail=f"session {session_id!r} exists")
        descriptor = {
            "session_id": session_id,
            "student_id": student_id,
            "created_at": time.time(),
            "video_label": None,
            "status": "preparing",
        }
        gateway: Gateway = gateway_factory()
        try:
            session, assets = build_session(
                config, gateway, store, student_id,
                session_id=session_id,
                offline=offline,
                window_s=payload.get("window_s"),
            )
        except (ValidationError, SourceError) as exc:
            descriptor.update(status="failed", stage="ingestion", cause=str(exc))
            records[session_id] = SessionRecord(None, descriptor)
            raise HTTPException(status_code=400, detail=descriptor) from exc
        except VideotutorError as exc:
            descriptor.update(status="failed", stage="pipeline", cause=str(exc))
            records[session_id] = SessionRecord(None, descriptor)
            raise HTTPException(status_code=500, detail=descriptor) from exc

        descriptor.update(
            status="active",
            video_label=config.topic,
            queue_length=len(session.queue),
            goal_summary=assets.goal_summary,
            dropped_knowledge=[item.id for item in assets.dropped],
        )
        records[session_id] = SessionRecord(session, descriptor)
        return descriptor

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, request: Request = None):
        _auth(request)
        return _record(session_id).descriptor

    @app.get("/sessions/{session_id}/message")
    def next_message(session_id: str, request: Request = None):
        _auth(request)
        record = _record(session_id)
        if record.session is None:
            raise HTTPException(status_code=409, detail=record.descriptor)
        with record.lock:
            result = record.session.step()
            if result.status == "message":
                return result.envelope.to_dict()
            if result.status == "blocked":
                return {"blocked": True, "phase": record.session.phase.value}
            record.descriptor["status"] = "done"
            return {"done": True}

    @app.post("/sessions/{session_id}/events")
    def post_event(session_id: str, payload: dict = Body(...), request: Request = None):
        _auth(request)
        record = _record(session_id)
        if record.session is None:
            raise HTTPException(status_code=409, detail=record.descriptor)
        event_id = payload.get("event_id")
        if not event_id:
            raise HTTPException(status_code=422, detail="event_id is required")
        with record.lock:
            cached = record.session.event_acks.get(event_id)
            if cached is not None:
                return {**cached, "duplicate": True}
            try:
                event = InboundEvent.from_dict(payload)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            try:
                outcome = record.session.handle_event(event)
            except PhaseError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except SessionError as exc:
                raise HTTPException(status_code=500, detail=str(exc)) from exc
            ack = {"ok": outcome.ok, "event_id": event_id}
            if outcome.reply is not None:
                ack["reply"] = outcome.reply.to_dict()
            # The observation (if any) was persisted inside handle_event,
            # strictly before this ack is cached or returned.
            record.session.event_acks[event_id] = ack
            return ack

    @app.get("/sessions/{session_id}/dsl")
    def get_dsl(session_id: str, request: Request = None):
        _auth(request)
        record = _record(session_id)
        if record.session is None:
            raise HTTPException(status_code=409, detail=record.descriptor)
        return Response(content=serialize_document(record.session.document),
                        media_type="application/json")

    @app.get("/students/{student_id}/model")
    def get_student_model(student_id: str, request: Request = None):
        _auth(request)
        return store.get(student_id).to_dict()

    return app
