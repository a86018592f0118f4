"""Append-only JSONL dialogue logs with crash-consistent exchanges.

One file per session under ``<data_dir>/sessions``. The two turns of an
exchange (user message plus system reply) are serialized into a single
unbuffered write followed by fsync, so a crash leaves the log with either
the whole exchange or none of it. Opening a store repairs torn tails:
an incomplete final line is truncated, and a complete user record whose
system mate never landed is dropped with it.

Names and ages never enter the log records; they live in a separate
per-session metadata file so transcripts can be shared without sharing
identities.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Union

from .errors import NotFoundError, ParseError, ValidationError
from .gateway import Usage
from .model import Attachments, Phase, Role, Turn

RECORD_FIELDS = (
    "session_id",
    "turn_index",
    "role",
    "content",
    "phase",
    "attachments",
    "timestamp",
    "prompt_digest",
    "usage",
)


@dataclass(frozen=True)
class LogRecord:
    """One logged turn, wire-shaped."""

    session_id: str
    turn_index: int
    role: str
    content: str
    phase: str
    attachments: Optional[dict]
    timestamp: str
    prompt_digest: str = ""
    usage: Optional[dict] = None

    def to_json_line(self) -> str:
        doc = {name: getattr(self, name) for name in RECORD_FIELDS}
        return json.dumps(doc, ensure_ascii=False) + "\n"


def record_from_turn(
    session_id: str,
    turn: Turn,
    prompt_digest: str = "",
    usage: Optional[Usage] = None,
) -> LogRecord:
    attachments = turn.attachments.to_dict() if turn.attachments else None
    usage_doc = None
    if usage is not None:
        usage_doc = {
            "input_tokens": usage.input_tokens,
            "output_tokens": usage.output_tokens,
        }
    return LogRecord(
        session_id=session_id,
        turn_index=turn.index,
        role=turn.role.value,
        content=turn.content,
        phase=turn.phase.value,
        attachments=attachments if attachments else None,
        timestamp=turn.timestamp.isoformat(),
        prompt_digest=prompt_digest,
        usage=usage_doc,
    )


def parse_record(obj: object, origin: str = "<record>") -> LogRecord:
    if not isinstance(obj, dict):
        raise ParseError(f"{origin}: record is not a JSON object")
    try:
        session_id = obj["session_id"]
        turn_index = obj["turn_index"]
        role = obj["role"]
        content = obj["content"]
        phase = obj["phase"]
        timestamp = obj["timestamp"]
    except KeyError as exc:
        raise ParseError(f"{origin}: missing field {exc.args[0]!r}") from exc
    if not isinstance(session_id, str) or not isinstance(turn_index, int):
        raise ParseError(f"{origin}: bad session_id or turn_index")
    if role not in ("user", "system"):
        raise ParseError(f"{origin}: bad role {role!r}")
    if not isinstance(content, str) or not isinstance(phase, str):
        raise ParseError(f"{origin}: bad content or phase")
    if not isinstance(timestamp, str):
        raise ParseError(f"{origin}: bad timestamp")
    attachments = obj.get("attachments")
    if attachments is not None and not isinstance(attachments, dict):
        raise ParseError(f"{origin}: bad attachments")
    usage = obj.get("usage")
    if usage is not None and not isinstance(usage, dict):
        raise ParseError(f"{origin}: bad usage")
    digest = obj.get("prompt_digest", "")
    if not isinstance(digest, str):
        raise ParseError(f"{origin}: bad prompt_digest")
    return LogRecord(
        session_id=session_id,
        turn_index=turn_index,
        role=role,
        content=content,
        phase=phase,
        attachments=attachments,
        timestamp=timestamp,
        prompt_digest=digest,
        usage=usage,
    )


def turn_from_record(record: LogRecord) -> Turn:
    """Rebuild a domain Turn from its logged form."""
    from datetime import datetime

    attachments = None
    if record.attachments:
        attachments = Attachments(
            picker_shown=bool(record.attachments.get("picker_shown")),
            picker_emotions=tuple(
                dict(e) for e in record.attachments.get("picker_emotions", [])
            ),
            picked_emotion_ids=tuple(
                record.attachments.get("picked_emotion_ids", [])
            ),
        )
    return Turn(
        index=record.turn_index,
        role=Role(record.role),
        content=record.content,
        phase=Phase(record.phase),
        timestamp=datetime.fromisoformat(record.timestamp),
        attachments=attachments,
    )


class SessionLogStore:
    """Filesystem-backed session logs, metadata, and index."""

    def __init__(
        self,
        data_dir: Union[str, Path],
        fault_hook: Optional[Callable[[str], None]] = None,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._index_path = self.data_dir / "index.json"
        # Test seam: called at named stages of an append so suites can
        # simulate a crash at any boundary. Production leaves it inert.
        self._fault = fault_hook or (lambda stage: None)
        self._handles: dict[str, object] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self._repair_all()

    # -- paths -------------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _meta_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.meta.json"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- recovery ----------------------------------------------------------

    def _repair_all(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            self._repair(path)

    @staticmethod
    def _repair(path: Path) -> None:
        """Truncate to the last point where the log is exchange-consistent.

        Valid prefixes end with a complete system-role record (a greeting or
        the second half of an exchange) or are empty.
        """
        data = path.read_bytes()
        offset = 0
        safe = 0
        while True:
            newline = data.find(b"\n", offset)
            if newline < 0:
                break
            line = data[offset : newline + 1]
            offset = newline + 1
            try:
                obj = json.loads(line.decode("utf-8"))
                role = obj.get("role")
            except (ValueError, UnicodeDecodeError):
                break
            if role == "system":
                safe = offset
            elif role != "user":
                break
        if safe != len(data):
            with open(path, "r+b") as handle:
                handle.truncate(safe)

    # -- appends -----------------------------------------------------------

    def _handle_for(self, session_id: str):
        handle = self._handles.get(session_id)
        if handle is None or handle.closed:
            handle = open(self._log_path(session_id), "ab", buffering=0)
            self._handles[session_id] = handle
        return handle

    def _write_payload(self, session_id: str, payload: bytes) -> None:
        handle = self._handle_for(session_id)
        self._fault("pre_write")
        handle.write(payload)
        self._fault("post_write")
        os.fsync(handle.fileno())
        self._fault("post_sync")

    def append_record(self, session_id: str, record: LogRecord) -> None:
        """Append one standalone system record (the greeting)."""
        if record.role != "system":
            raise ValidationError("standalone appends are for system records only")
        with self._lock(session_id):
            self._write_payload(session_id, record.to_json_line().encode("utf-8"))

    def append_exchange(
        self, session_id: str, user_record: LogRecord, system_record: LogRecord
    ) -> None:
        """Append a user turn and its system reply as one atomic write."""
        if user_record.role != "user" or system_record.role != "system":
            raise ValidationError("an exchange is one user record then one system record")
        payload = (
            user_record.to_json_line() + system_record.to_json_line()
        ).encode("utf-8")
        with self._lock(session_id):
            self._write_payload(session_id, payload)

    # -- reads -------------------------------------------------------------

    def read_records(self, session_id: str) -> list[LogRecord]:
        path = self._log_path(session_id)
        if not path.exists():
            if not self._meta_path(session_id).exists():
                raise NotFoundError(f"no session log: {session_id}")
            return []
        records = []
        with self._lock(session_id):
            lines = path.read_text(encoding="utf-8").splitlines()
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            records.append(parse_record(obj, f"{path}:{lineno}"))
        return records

    def export_lines(self, session_id: str) -> Iterator[str]:
        """Raw JSONL lines exactly as stored."""
        path = self._log_path(session_id)
        if not path.exists():
            if not self._meta_path(session_id).exists():
                raise NotFoundError(f"no session log: {session_id}")
            return iter(())
        with self._lock(session_id):
            text = path.read_text(encoding="utf-8")
        return iter(text.splitlines(keepends=True))

    # -- metadata and index ------------------------------------------------

    def write_meta(self, session_id: str, meta: dict) -> None:
        path = self._meta_path(session_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        os.replace(tmp, path)
        self._update_index(session_id, meta.get("created_at"))

    def read_meta(self, session_id: str) -> dict:
        path = self._meta_path(session_id)
        if not path.exists():
            raise NotFoundError(f"no session metadata: {session_id}")
        try:
            meta = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(meta, dict):
            raise ParseError(f"{path}: metadata must be a JSON object")
        return meta

    def session_exists(self, session_id: str) -> bool:
        return self._meta_path(session_id).exists()

    def _update_index(self, session_id: str, created_at: Optional[str]) -> None:
        with self._guard:
            index = self._read_index_unlocked()
            index["sessions"][session_id] = created_at or index["sessions"].get(
                session_id
            )
            self._write_index_unlocked(index)

    def _read_index_unlocked(self) -> dict:
        if not self._index_path.exists():
            return {"sessions": {}}
        try:
            index = json.loads(self._index_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return {"sessions": {}}
        if not isinstance(index, dict) or not isinstance(index.get("sessions"), dict):
            return {"sessions": {}}
        return index

    def _write_index_unlocked(self, index: dict) -> None:
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(index, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        os.replace(tmp, self._index_path)

    def list_sessions(self) -> list[str]:
        with self._guard:
            return sorted(self._read_index_unlocked()["sessions"])

    # -- lifecycle ---------------------------------------------------------

    def delete_session(self, session_id: str) -> None:
        """Remove a session's files; safe to repeat."""
        with self._lock(session_id):
            handle = self._handles.pop(session_id, None)
            if handle is not None and not handle.closed:
                handle.close()
            for path in (self._log_path(session_id), self._meta_path(session_id)):
                try:
                    path.unlink()
                except FileNotFoundError:
                    pass
        with self._guard:
            index = self._read_index_unlocked()
            if session_id in index["sessions"]:
                del index["sessions"][session_id]
                self._write_index_unlocked(index)

    def close(self) -> None:
        for handle in self._handles.values():
            if not handle.closed:
                handle.close()
        self._handles.clear()
