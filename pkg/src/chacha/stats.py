"""Descriptive statistics over exported dialogue logs.

Syllable counting follows the korean-letters-only rule: only precomposed
Hangul syllables (U+AC00..U+D7A3) count; Latin text, digits, symbols,
emoji, and decomposed Jamo all contribute zero. Latency is the gap
between a system turn's timestamp and the next user turn's, which
approximates how long the child took to read and type.

Corpus-level syllable and latency figures are unweighted means of
per-session means, not pooled per-message means; every report format
that can carry a note says so.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import ParseError, ValidationError
from .logstore import LogRecord, parse_record

HANGUL_SYLLABLE_FIRST = 0xAC00
HANGUL_SYLLABLE_LAST = 0xD7A3

RULES = ("korean_letters_only",)
FORMATS = ("table", "csv", "json")

CSV_COLUMNS = (
    "session_id",
    "total_turns",
    "user_turns",
    "system_turns",
    "mean_user_syllables",
    "mean_system_syllables",
    "mean_user_latency_seconds",
)

AGGREGATION_NOTE = (
    "corpus syllable and latency figures are unweighted means of "
    "per-session means"
)


def count_syllables(text: str, rule: str = "korean_letters_only") -> int:
    if rule not in RULES:
        raise ValidationError(f"unknown syllable rule: {rule!r}")
    return sum(
        1 for ch in text if HANGUL_SYLLABLE_FIRST <= ord(ch) <= HANGUL_SYLLABLE_LAST
    )


@dataclass(frozen=True)
class SessionStats:
    session_id: str
    total_turns: int
    user_turns: int
    system_turns: int
    mean_user_syllables: Optional[float]
    mean_system_syllables: Optional[float]
    mean_user_latency_seconds: Optional[float]
    phase_turn_histogram: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "total_turns": self.total_turns,
            "user_turns": self.user_turns,
            "system_turns": self.system_turns,
            "mean_user_syllables": self.mean_user_syllables,
            "mean_system_syllables": self.mean_system_syllables,
            "mean_user_latency_seconds": self.mean_user_latency_seconds,
            "phase_turn_histogram": dict(self.phase_turn_histogram),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionStats":
        return cls(
            session_id=doc["session_id"],
            total_turns=doc["total_turns"],
            user_turns=doc["user_turns"],
            system_turns=doc["system_turns"],
            mean_user_syllables=doc["mean_user_syllables"],
            mean_system_syllables=doc["mean_system_syllables"],
            mean_user_latency_seconds=doc["mean_user_latency_seconds"],
            phase_turn_histogram=dict(doc.get("phase_turn_histogram", {})),
        )


@dataclass(frozen=True)
class CorpusStats:
    session_count: int
    total_turns: int
    total_user_turns: int
    total_system_turns: int
    mean_turns: Optional[float]
    sd_turns: Optional[float]
    min_turns: Optional[int]
    max_turns: Optional[int]
    mean_user_syllables: Optional[float]
    mean_system_syllables: Optional[float]
    mean_user_latency_seconds: Optional[float]
    code_tally: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "session_count": self.session_count,
            "total_turns": self.total_turns,
            "total_user_turns": self.total_user_turns,
            "total_system_turns": self.total_system_turns,
            "mean_turns": self.mean_turns,
            "sd_turns": self.sd_turns,
            "min_turns": self.min_turns,
            "max_turns": self.max_turns,
            "mean_user_syllables": self.mean_user_syllables,
            "mean_system_syllables": self.mean_system_syllables,
            "mean_user_latency_seconds": self.mean_user_latency_seconds,
            "code_tally": dict(self.code_tally),
        }


@dataclass(frozen=True)
class StatsReport:
    rule: str
    sessions: tuple[SessionStats, ...]
    corpus: CorpusStats


def _parse_timestamp(value: str) -> Optional[datetime]:
    if not value:
        return None
    return datetime.fromisoformat(value)


def _mean(values: Sequence[float]) -> Optional[float]:
    return statistics.fmean(values) if values else None


def session_stats_from_records(
    session_id: str, records: Sequence[LogRecord], rule: str = "korean_letters_only"
) -> SessionStats:
    ordered = sorted(records, key=lambda r: r.turn_index)
    user_syllables: list[int] = []
    system_syllables: list[int] = []
    histogram: dict[str, int] = {}
    latencies: list[float] = []
    for record in ordered:
        histogram[record.phase] = histogram.get(record.phase, 0) + 1
        count = count_syllables(record.content, rule)
        if record.role == "user":
            user_syllables.append(count)
        else:
            system_syllables.append(count)
    for previous, current in zip(ordered, ordered[1:]):
        if previous.role == "system" and current.role == "user":
            start = _parse_timestamp(previous.timestamp)
            end = _parse_timestamp(current.timestamp)
            if start is not None and end is not None:
                latencies.append((end - start).total_seconds())
    return SessionStats(
        session_id=session_id,
        total_turns=len(ordered),
        user_turns=len(user_syllables),
        system_turns=len(system_syllables),
        mean_user_syllables=_mean(user_syllables),
        mean_system_syllables=_mean(system_syllables),
        mean_user_latency_seconds=_mean(latencies),
        phase_turn_histogram=histogram,
    )


def _read_source(path: Path) -> Iterable[tuple[LogRecord, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            origin = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{origin}: invalid JSON: {exc}") from exc
            record = parse_record(obj, origin)
            try:
                _parse_timestamp(record.timestamp)
            except ValueError as exc:
                raise ParseError(f"{origin}: bad timestamp: {exc}") from exc
            yield record, obj


def resolve_inputs(inputs: Sequence[Union[str, Path]]) -> list[Path]:
    """Expand directories to their .jsonl files; keep explicit files as-is."""
    paths: list[Path] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            paths.extend(sorted(path.rglob("*.jsonl")))
        elif path.exists():
            paths.append(path)
        else:
            raise ParseError(f"input not found: {path}")
    return paths


def compute_stats(
    sources: Sequence[Union[str, Path]], rule: str = "korean_letters_only"
) -> StatsReport:
    if rule not in RULES:
        raise ValidationError(f"unknown syllable rule: {rule!r}")
    by_session: dict[str, list[LogRecord]] = {}
    code_tally: dict[str, int] = {}
    for path in resolve_inputs(sources):
        for record, raw in _read_source(Path(path)):
            by_session.setdefault(record.session_id, []).append(record)
            codes = raw.get("codes")
            if isinstance(codes, list):
                for code in codes:
                    if isinstance(code, str):
                        code_tally[code] = code_tally.get(code, 0) + 1

    sessions = tuple(
        session_stats_from_records(session_id, records, rule)
        for session_id, records in sorted(by_session.items())
    )
    turn_counts = [s.total_turns for s in sessions]
    user_syllable_means = [
        s.mean_user_syllables for s in sessions if s.mean_user_syllables is not None
    ]
    system_syllable_means = [
        s.mean_system_syllables for s in sessions if s.mean_system_syllables is not None
    ]
    latency_means = [
        s.mean_user_latency_seconds
        for s in sessions
        if s.mean_user_latency_seconds is not None
    ]
    corpus = CorpusStats(
        session_count=len(sessions),
        total_turns=sum(turn_counts),
        total_user_turns=sum(s.user_turns for s in sessions),
        total_system_turns=sum(s.system_turns for s in sessions),
        mean_turns=_mean(turn_counts),
        sd_turns=statistics.stdev(turn_counts) if len(turn_counts) >= 2 else None,
        min_turns=min(turn_counts) if turn_counts else None,
        max_turns=max(turn_counts) if turn_counts else None,
        mean_user_syllables=_mean(user_syllable_means),
        mean_system_syllables=_mean(system_syllable_means),
        mean_user_latency_seconds=_mean(latency_means),
        code_tally=code_tally,
    )
    return StatsReport(rule=rule, sessions=sessions, corpus=corpus)


# -- report rendering ------------------------------------------------------


def _cell(value: Optional[float]) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}".rstrip("0").rstrip(".")
    return str(value)


def _render_csv(report: StatsReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in report.sessions:
        writer.writerow(
            [
                s.session_id,
                s.total_turns,
                s.user_turns,
                s.system_turns,
                _cell(s.mean_user_syllables),
                _cell(s.mean_system_syllables),
                _cell(s.mean_user_latency_seconds),
            ]
        )
    return buffer.getvalue()


def _render_json(report: StatsReport) -> str:
    doc = {
        "rule": report.rule,
        "aggregation_note": AGGREGATION_NOTE,
        "sessions": [s.to_dict() for s in report.sessions],
        "corpus": report.corpus.to_dict(),
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def _render_table(report: StatsReport) -> str:
    # 24+7+6+7+9+9+11 plus separators stays under 100 columns.
    header = (
        f"{'session_id':<24} {'turns':>6} {'user':>5} {'system':>6} "
        f"{'u_syll':>8} {'s_syll':>8} {'latency_s':>10}"
    )
    lines = [header, "-" * len(header)]
    for s in report.sessions:
        lines.append(
            f"{s.session_id[:24]:<24} {s.total_turns:>6} {s.user_turns:>5} "
            f"{s.system_turns:>6} {_cell_fixed(s.mean_user_syllables):>8} "
            f"{_cell_fixed(s.mean_system_syllables):>8} "
            f"{_cell_fixed(s.mean_user_latency_seconds):>10}"
        )
    c = report.corpus
    lines.append("")
    lines.append(
        f"sessions: {c.session_count}  total turns: {c.total_turns} "
        f"({c.total_user_turns} user / {c.total_system_turns} system)"
    )
    if c.mean_turns is not None:
        sd = f", sd {c.sd_turns:.2f}" if c.sd_turns is not None else ""
        lines.append(
            f"turns per session: mean {c.mean_turns:.2f}{sd}, "
            f"min {c.min_turns}, max {c.max_turns}"
        )
    if c.mean_user_syllables is not None:
        lines.append(f"mean user syllables per message: {c.mean_user_syllables:.2f}")
    if c.mean_system_syllables is not None:
        lines.append(
            f"mean system syllables per message: {c.mean_system_syllables:.2f}"
        )
    if c.mean_user_latency_seconds is not None:
        lines.append(
            f"mean user latency: {c.mean_user_latency_seconds:.2f} s"
        )
    if c.code_tally:
        tally = ", ".join(f"{k}={v}" for k, v in sorted(c.code_tally.items()))
        lines.append(f"code tally: {tally}")
    lines.append(f"note: {AGGREGATION_NOTE}")
    return "\n".join(lines) + "\n"


def _cell_fixed(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def emit_report(report: StatsReport, format: str = "table") -> str:
    if format == "csv":
        return _render_csv(report)
    if format == "json":
        return _render_json(report)
    if format == "table":
        return _render_table(report)
    raise ValidationError(f"unknown report format: {format!r}")
