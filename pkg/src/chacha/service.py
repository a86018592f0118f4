"""HTTP chat service: session lifecycle, messaging, export.

Endpoints are synchronous on purpose: FastAPI runs them on a threadpool,
which pairs with the engine's per-session non-blocking lock to give the
one-in-flight guarantee without asyncio re-entrancy concerns.

DELETE ends a session rather than erasing it; transcripts stay exportable.
"""

from __future__ import annotations

import logging
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .engine import DialogueEngine, HandleResult
from .errors import (
    AnalyzerError,
    BudgetError,
    BusyError,
    ChaChaError,
    InvalidStateError,
    NotFoundError,
    UpstreamError,
    ValidationError,
)
from .gateway import Usage
from .logstore import SessionLogStore, record_from_turn, turn_from_record
from .model import Phase, Session, SessionStatus, Turn, utc_now

log = logging.getLogger("chacha.service")

EXPORT_MEDIA_TYPE = "application/x-ndjson"


class CreateSessionBody(BaseModel):
    name: str
    age: int
    locale: Optional[str] = None


class MessageBody(BaseModel):
    text: str = ""
    picked_emotion_ids: Optional[list[str]] = None


def turn_to_api(turn: Turn, pending: bool = False) -> dict:
    return {
        "index": turn.index,
        "role": turn.role.value,
        "content": turn.content,
        "phase": turn.phase.value,
        "attachments": turn.attachments.to_dict() if turn.attachments else None,
        "timestamp": turn.timestamp.isoformat(),
        "pending": pending,
    }


class SessionRegistry:
    """In-memory sessions backed by the log store for restarts."""

    def __init__(
        self, engine: DialogueEngine, store: SessionLogStore, default_locale: str = "ko"
    ) -> None:
        self.engine = engine
        self.store = store
        self.default_locale = default_locale
        self._sessions: dict[str, Session] = {}
        self._guard = threading.Lock()

    def create(self, name: str, age: int, locale: Optional[str]):
        result = self.engine.create_session(name, age, locale or self.default_locale)
        session = result.session
        self.store.write_meta(
            session.session_id,
            {
                "name": session.user_name,
                "age": session.user_age,
                "locale": session.locale,
                "created_at": session.created_at.isoformat(),
                "status": session.status.value,
            },
        )
        self.store.append_record(
            session.session_id,
            record_from_turn(
                session.session_id,
                result.greeting,
                prompt_digest=result.prompt_digest,
                usage=result.usage,
            ),
        )
        with self._guard:
            self._sessions[session.session_id] = session
        return result

    def get(self, session_id: str) -> Session:
        with self._guard:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        if not self.store.session_exists(session_id):
            raise NotFoundError(f"unknown session: {session_id}")
        rehydrated = self._rehydrate(session_id)
        with self._guard:
            # Another thread may have rehydrated meanwhile; keep the first.
            return self._sessions.setdefault(session_id, rehydrated)

    def _rehydrate(self, session_id: str) -> Session:
        meta = self.store.read_meta(session_id)
        records = self.store.read_records(session_id)
        turns = [turn_from_record(record) for record in records]
        phase = turns[-1].phase if turns else Phase.EXPLORE
        previous_phase = None
        for turn in reversed(turns):
            if turn.phase is not phase:
                previous_phase = turn.phase
                break
        shown_in_visit = False
        if phase is Phase.LABEL:
            for turn in reversed(turns):
                if turn.phase is not Phase.LABEL:
                    break
                if turn.attachments and turn.attachments.picker_shown:
                    shown_in_visit = True
                    break
        session = Session(
            session_id=session_id,
            user_name=str(meta.get("name", "")),
            user_age=int(meta.get("age", 0)),
            locale=str(meta.get("locale", self.default_locale)),
            phase=phase,
            turns=turns,
            status=SessionStatus(meta.get("status", "active")),
            created_at=datetime.fromisoformat(meta["created_at"])
            if meta.get("created_at")
            else utc_now(),
            previous_phase=previous_phase,
            picker_armed=not shown_in_visit,
            picker_shown_in_visit=shown_in_visit,
        )
        # Goal summaries are not logged; a resumed session rebuilds them
        # from the next analyzer pass.
        log.info("rehydrated session %s at phase %s", session_id, phase.value)
        return session

    def persist_status(self, session: Session) -> None:
        self.store.write_meta(
            session.session_id,
            {
                "name": session.user_name,
                "age": session.user_age,
                "locale": session.locale,
                "created_at": session.created_at.isoformat(),
                "status": session.status.value,
            },
        )

    def end(self, session: Session) -> bool:
        result = self.engine.end_session(session)
        if not result.noop:
            self.persist_status(session)
        return result.noop


def _error(status_code: int, message: str, **extra) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"detail": message, **extra})


def create_app(
    engine: DialogueEngine,
    store: SessionLogStore,
    default_locale: str = "ko",
    max_session_minutes: Optional[float] = None,
) -> FastAPI:
    app = FastAPI(title="chacha", docs_url=None, redoc_url=None)
    registry = SessionRegistry(engine, store, default_locale)
    app.state.registry = registry

    def _expired(session: Session) -> bool:
        if max_session_minutes is None or not session.is_active:
            return False
        now = utc_now()
        created = session.created_at
        if created.tzinfo is None:
            created = created.replace(tzinfo=timezone.utc)
        return (now - created).total_seconds() > max_session_minutes * 60

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            result = registry.create(body.name, body.age, body.locale)
        except ValidationError as exc:
            return _error(422, str(exc))
        except (UpstreamError, BudgetError) as exc:
            return _error(502, str(exc), retry_safe=True)
        return {
            "session_id": result.session.session_id,
            "phase": result.session.phase.value,
            "messages": [turn_to_api(result.greeting)],
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody):
        try:
            session = registry.get(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        if _expired(session):
            registry.end(session)
            return _error(410, "session time limit reached")
        if not session.is_active:
            return _error(410, "session has ended")
        try:
            result: HandleResult = engine.handle_user_message(
                session, body.text, body.picked_emotion_ids
            )
        except BusyError as exc:
            return _error(409, str(exc))
        except InvalidStateError as exc:
            return _error(410, str(exc))
        except ValidationError as exc:
            return _error(422, str(exc))
        except (UpstreamError, BudgetError, AnalyzerError) as exc:
            # Nothing was committed or logged; the client may retry the
            # same message verbatim.
            return _error(502, str(exc), retry_safe=True)

        (system_turn,) = result.system_turns
        store.append_exchange(
            session_id,
            record_from_turn(session_id, result.user_turn),
            record_from_turn(
                session_id,
                system_turn,
                prompt_digest=result.prompt_digest,
                usage=result.usage,
            ),
        )
        if result.session_ended:
            registry.persist_status(session)
        return {
            "messages": [turn_to_api(turn) for turn in result.system_turns],
            "phase": result.phase_after.value,
            "picker": result.picker,
            "session_ended": result.session_ended,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            session = registry.get(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        return {
            "session_id": session.session_id,
            "phase": session.phase.value,
            "status": session.status.value,
            "locale": session.locale,
            "created_at": session.created_at.isoformat(),
            "messages": [turn_to_api(turn) for turn in session.turns],
        }

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str):
        try:
            lines = store.export_lines(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        return PlainTextResponse("".join(lines), media_type=EXPORT_MEDIA_TYPE)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        try:
            session = registry.get(session_id)
        except NotFoundError as exc:
            return _error(404, str(exc))
        registry.end(session)
        return Response(status_code=204)

    @app.exception_handler(ChaChaError)
    def _domain_error(request, exc: ChaChaError):  # pragma: no cover - safety net
        log.exception("unhandled domain error")
        return _error(500, str(exc))

    return app
