"""Durable session logs: wire format, atomic exchanges, crash repair."""

import json
from datetime import datetime, timezone

import pytest

from chacha.errors import NotFoundError, ParseError, ValidationError
from chacha.gateway import Usage
from chacha.logstore import (
    RECORD_FIELDS,
    LogRecord,
    SessionLogStore,
    parse_record,
    record_from_turn,
    turn_from_record,
)
from chacha.model import Attachments, Phase, Role, Turn


def make_turn(index, role, content="hello", phase=Phase.EXPLORE, picks=()):
    return Turn(
        index=index,
        role=role,
        content=content,
        phase=phase,
        timestamp=datetime(2026, 3, 1, 9, 0, index, tzinfo=timezone.utc),
        attachments=Attachments(picked_emotion_ids=tuple(picks)) if picks else None,
    )


def make_record(index, role, content="안녕", **kwargs):
    turn = make_turn(index, role, content, **kwargs)
    return record_from_turn("s1", turn)


@pytest.fixture
def store(tmp_path):
    store = SessionLogStore(tmp_path)
    yield store
    store.close()


# -- wire format ------------------------------------------------------------


def test_record_line_keeps_field_order_and_unicode():
    turn = make_turn(0, Role.SYSTEM, "안녕! 나는 차차야.")
    record = record_from_turn("s1", turn, prompt_digest="ab" * 32, usage=Usage(12, 7))
    line = record.to_json_line()
    assert line.endswith("\n")
    doc = json.loads(line)
    assert list(doc) == list(RECORD_FIELDS)
    assert "안녕" in line  # not ascii-escaped
    assert doc["usage"] == {"input_tokens": 12, "output_tokens": 7}
    assert doc["timestamp"] == "2026-03-01T09:00:00+00:00"


def test_record_round_trips_through_parse():
    record = record_from_turn(
        "s1",
        make_turn(3, Role.USER, "", phase=Phase.LABEL, picks=("joy", "fear")),
    )
    parsed = parse_record(json.loads(record.to_json_line()))
    assert parsed == record
    rebuilt = turn_from_record(parsed)
    assert rebuilt.picked_emotion_ids == ("joy", "fear")
    assert rebuilt.phase is Phase.LABEL
    assert rebuilt.timestamp == datetime(2026, 3, 1, 9, 0, 3, tzinfo=timezone.utc)


def test_picker_attachments_survive_the_round_trip():
    turn = Turn(
        index=2,
        role=Role.SYSTEM,
        content="골라 볼래?",
        phase=Phase.LABEL,
        timestamp=datetime(2026, 3, 1, tzinfo=timezone.utc),
        attachments=Attachments(
            picker_shown=True,
            picker_emotions=({"id": "joy", "label": "기쁨", "emoji": "😀"},),
        ),
    )
    record = record_from_turn("s1", turn)
    rebuilt = turn_from_record(parse_record(json.loads(record.to_json_line())))
    assert rebuilt.attachments.picker_shown is True
    assert rebuilt.attachments.picker_emotions == (
        {"id": "joy", "label": "기쁨", "emoji": "😀"},
    )


@pytest.mark.parametrize(
    "mutate,fragment",
    [
        (lambda d: d.pop("role"), "missing field 'role'"),
        (lambda d: d.update(role="assistant"), "bad role"),
        (lambda d: d.update(turn_index="3"), "bad session_id or turn_index"),
        (lambda d: d.update(content=7), "bad content or phase"),
        (lambda d: d.update(timestamp=123), "bad timestamp"),
        (lambda d: d.update(attachments=[1]), "bad attachments"),
        (lambda d: d.update(usage="lots"), "bad usage"),
        (lambda d: d.update(prompt_digest=5), "bad prompt_digest"),
    ],
)
def test_parse_record_names_origin_and_field(mutate, fragment):
    doc = json.loads(make_record(0, Role.SYSTEM).to_json_line())
    mutate(doc)
    with pytest.raises(ParseError) as excinfo:
        parse_record(doc, "log.jsonl:4")
    assert str(excinfo.value).startswith("log.jsonl:4: ")
    assert fragment in str(excinfo.value)


def test_parse_record_rejects_non_objects():
    with pytest.raises(ParseError, match="not a JSON object"):
        parse_record([1, 2], "x:1")


# -- appends and reads ------------------------------------------------------


def test_append_and_read_one_session(store):
    greeting = make_record(0, Role.SYSTEM)
    store.append_record("s1", greeting)
    store.append_exchange(
        "s1", make_record(1, Role.USER, "놀이공원!"), make_record(2, Role.SYSTEM, "우와!")
    )
    records = store.read_records("s1")
    assert [r.turn_index for r in records] == [0, 1, 2]
    assert records[1].content == "놀이공원!"


def test_standalone_append_refuses_user_records(store):
    with pytest.raises(ValidationError):
        store.append_record("s1", make_record(1, Role.USER))


def test_exchange_validates_role_order(store):
    with pytest.raises(ValidationError):
        store.append_exchange(
            "s1", make_record(1, Role.SYSTEM), make_record(2, Role.USER)
        )


def test_exchange_is_one_write(tmp_path):
    writes = []
    store = SessionLogStore(tmp_path, fault_hook=writes.append)
    store.append_exchange(
        "s1", make_record(1, Role.USER), make_record(2, Role.SYSTEM)
    )
    assert writes == ["pre_write", "post_write", "post_sync"]
    store.close()


def test_read_unknown_session_raises(store):
    with pytest.raises(NotFoundError):
        store.read_records("ghost")
    with pytest.raises(NotFoundError):
        list(store.export_lines("ghost"))


def test_read_reports_corrupt_line_with_position(store, tmp_path):
    store.append_record("s1", make_record(0, Role.SYSTEM))
    store.close()
    path = tmp_path / "sessions" / "s1.jsonl"
    path.write_text(path.read_text() + '{"role": "system"}\n', encoding="utf-8")
    with pytest.raises(ParseError) as excinfo:
        SessionLogStore(tmp_path).read_records("s1")
    assert "s1.jsonl:2" in str(excinfo.value)


def test_export_returns_stored_bytes_exactly(store, tmp_path):
    store.append_record("s1", make_record(0, Role.SYSTEM))
    store.append_exchange(
        "s1", make_record(1, Role.USER, "뿌듯했어"), make_record(2, Role.SYSTEM)
    )
    exported = "".join(store.export_lines("s1"))
    stored = (tmp_path / "sessions" / "s1.jsonl").read_text(encoding="utf-8")
    assert exported == stored
    assert len(exported.splitlines()) == 3


# -- crash repair -----------------------------------------------------------


def seed_log(tmp_path, lines):
    sessions = tmp_path / "sessions"
    sessions.mkdir(parents=True, exist_ok=True)
    (sessions / "s1.jsonl").write_text("".join(lines), encoding="utf-8")
    (sessions / "s1.meta.json").write_text("{}", encoding="utf-8")
    return sessions / "s1.jsonl"


def test_repair_truncates_torn_final_line(tmp_path):
    good = make_record(0, Role.SYSTEM).to_json_line()
    torn = make_record(1, Role.USER).to_json_line()[:20]
    path = seed_log(tmp_path, [good, torn])
    store = SessionLogStore(tmp_path)
    assert path.read_text(encoding="utf-8") == good
    assert [r.turn_index for r in store.read_records("s1")] == [0]
    store.close()


def test_repair_drops_user_record_without_reply(tmp_path):
    good = make_record(0, Role.SYSTEM).to_json_line()
    dangling = make_record(1, Role.USER).to_json_line()
    path = seed_log(tmp_path, [good, dangling])
    SessionLogStore(tmp_path).close()
    assert path.read_text(encoding="utf-8") == good


def test_repair_keeps_complete_exchanges(tmp_path):
    lines = [
        make_record(0, Role.SYSTEM).to_json_line(),
        make_record(1, Role.USER).to_json_line(),
        make_record(2, Role.SYSTEM).to_json_line(),
    ]
    path = seed_log(tmp_path, lines)
    SessionLogStore(tmp_path).close()
    assert path.read_text(encoding="utf-8") == "".join(lines)


def test_repair_cuts_at_garbage_not_after_it(tmp_path):
    lines = [
        make_record(0, Role.SYSTEM).to_json_line(),
        "not json at all\n",
        make_record(2, Role.SYSTEM).to_json_line(),
    ]
    path = seed_log(tmp_path, lines)
    SessionLogStore(tmp_path).close()
    assert path.read_text(encoding="utf-8") == lines[0]


def test_append_resumes_after_repair(tmp_path):
    good = make_record(0, Role.SYSTEM).to_json_line()
    seed_log(tmp_path, [good, make_record(1, Role.USER).to_json_line()[:-5]])
    store = SessionLogStore(tmp_path)
    store.append_exchange(
        "s1", make_record(1, Role.USER, "다시"), make_record(2, Role.SYSTEM, "좋아")
    )
    assert [r.turn_index for r in store.read_records("s1")] == [0, 1, 2]
    store.close()


def test_fault_hook_pre_write_leaves_file_untouched(tmp_path):
    class Crash(RuntimeError):
        pass

    def explode(stage):
        if stage == "pre_write":
            raise Crash

    store = SessionLogStore(tmp_path, fault_hook=explode)
    with pytest.raises(Crash):
        store.append_record("s1", make_record(0, Role.SYSTEM))
    store.close()
    assert (tmp_path / "sessions" / "s1.jsonl").read_bytes() == b""


def test_fault_hook_post_write_is_healed_on_restart(tmp_path):
    class Crash(RuntimeError):
        pass

    stage_to_fail = {"stage": None}

    def explode(stage):
        if stage == stage_to_fail["stage"]:
            raise Crash

    store = SessionLogStore(tmp_path, fault_hook=explode)
    store.append_record("s1", make_record(0, Role.SYSTEM))
    stage_to_fail["stage"] = "post_write"
    with pytest.raises(Crash):
        store.append_exchange(
            "s1", make_record(1, Role.USER), make_record(2, Role.SYSTEM)
        )
    store.close()
    # The exchange made it to the file (write preceded the crash), so a
    # restart keeps it; both halves are present or neither would be.
    reopened = SessionLogStore(tmp_path)
    (tmp_path / "sessions" / "s1.meta.json").write_text("{}", encoding="utf-8")
    indexes = [r.turn_index for r in reopened.read_records("s1")]
    assert indexes in ([0], [0, 1, 2])
    reopened.close()


# -- metadata and lifecycle -------------------------------------------------


def test_meta_round_trip_and_index(store):
    meta = {"name": "지민", "age": 9, "locale": "ko", "created_at": "2026-03-01"}
    store.write_meta("s1", meta)
    assert store.read_meta("s1") == meta
    assert store.session_exists("s1") is True
    assert store.list_sessions() == ["s1"]


def test_name_and_age_live_only_in_meta(store, tmp_path):
    store.write_meta("s1", {"name": "지민", "age": 9, "created_at": "x"})
    store.append_record("s1", make_record(0, Role.SYSTEM, "안녕!"))
    log_text = (tmp_path / "sessions" / "s1.jsonl").read_text(encoding="utf-8")
    assert "지민" not in log_text
    assert '"age"' not in log_text


def test_list_sessions_is_sorted(store):
    for session_id in ("s3", "s1", "s2"):
        store.write_meta(session_id, {"created_at": "2026-03-01"})
    assert store.list_sessions() == ["s1", "s2", "s3"]


def test_delete_session_is_idempotent(store, tmp_path):
    store.write_meta("s1", {"created_at": "x"})
    store.append_record("s1", make_record(0, Role.SYSTEM))
    store.delete_session("s1")
    assert not (tmp_path / "sessions" / "s1.jsonl").exists()
    assert not store.session_exists("s1")
    assert store.list_sessions() == []
    store.delete_session("s1")  # second delete is a no-op


def test_store_survives_reopen(tmp_path):
    first = SessionLogStore(tmp_path)
    first.write_meta("s1", {"created_at": "x"})
    first.append_record("s1", make_record(0, Role.SYSTEM))
    first.close()
    second = SessionLogStore(tmp_path)
    assert second.list_sessions() == ["s1"]
    assert len(second.read_records("s1")) == 1
    second.close()
