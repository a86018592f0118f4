"""Core dialogue state: phases, turns, sessions, and transition decisions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from .errors import ContractError, ValidationError

MIN_AGE = 1
MAX_AGE = 150


class Phase(str, Enum):
    """Conversational phases of the dialogue state machine."""

    EXPLORE = "explore"
    LABEL = "label"
    FIND = "find"
    RECORD = "record"
    SHARE = "share"
    HELP = "help"


# Edges the transition engine may ever emit (Help entry is a safety override
# handled outside the transition test, and Share may also end the session).
ALLOWED_EDGES: frozenset[tuple[Phase, Phase]] = frozenset(
    {
        (Phase.EXPLORE, Phase.LABEL),
        (Phase.LABEL, Phase.FIND),
        (Phase.LABEL, Phase.RECORD),
        (Phase.FIND, Phase.SHARE),
        (Phase.RECORD, Phase.SHARE),
        (Phase.SHARE, Phase.EXPLORE),
    }
)


class Role(str, Enum):
    USER = "user"
    SYSTEM = "system"


class SessionStatus(str, Enum):
    ACTIVE = "active"
    ENDED = "ended"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Attachments:
    """Structured extras on a turn: picker directive or picked emotions."""

    picker_shown: bool = False
    picker_emotions: tuple[dict, ...] = ()  # [{id, label, emoji}] in catalog order
    picked_emotion_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {}
        if self.picker_shown:
            out["picker_shown"] = True
            out["picker_emotions"] = [dict(e) for e in self.picker_emotions]
        if self.picked_emotion_ids:
            out["picked_emotion_ids"] = list(self.picked_emotion_ids)
        return out


@dataclass(frozen=True)
class Turn:
    """A single message by either party, with the phase in effect at emission."""

    index: int
    role: Role
    content: str
    phase: Phase
    timestamp: datetime
    attachments: Optional[Attachments] = None

    def __post_init__(self) -> None:
        picked = self.attachments.picked_emotion_ids if self.attachments else ()
        shown = self.attachments.picker_shown if self.attachments else False
        if not self.content and not picked:
            raise ValidationError("turn content must be non-empty unless emotions were picked")
        if shown and self.role is not Role.SYSTEM:
            raise ValidationError("picker_shown is only valid on system turns")
        if picked and self.role is not Role.USER:
            raise ValidationError("picked_emotion_ids are only valid on user turns")

    @property
    def picked_emotion_ids(self) -> tuple[str, ...]:
        return self.attachments.picked_emotion_ids if self.attachments else ()


@dataclass
class Session:
    """One child's conversation and its goal-tracking state."""

    session_id: str
    user_name: str
    user_age: int
    locale: str
    phase: Phase = Phase.EXPLORE
    turns: list[Turn] = field(default_factory=list)
    summaries: dict[Phase, object] = field(default_factory=dict)
    status: SessionStatus = SessionStatus.ACTIVE
    created_at: datetime = field(default_factory=utc_now)
    # Phase most recently advanced from; its summary feeds the composer.
    previous_phase: Optional[Phase] = None
    # Label-visit picker discipline: armed on entry, disarmed once shown,
    # re-armed when the user sends no picks and re-declares struggle.
    picker_armed: bool = True
    picker_shown_in_visit: bool = False

    def __post_init__(self) -> None:
        name = self.user_name.strip()
        if not name:
            raise ValidationError("user_name must be non-empty")
        self.user_name = name
        if not (MIN_AGE <= self.user_age <= MAX_AGE):
            raise ValidationError(
                f"user_age must be between {MIN_AGE} and {MAX_AGE}, got {self.user_age}"
            )

    @property
    def is_active(self) -> bool:
        return self.status is SessionStatus.ACTIVE

    def next_index(self) -> int:
        return len(self.turns)

    def check_alternation(self) -> None:
        """Turns must alternate roles starting with a system greeting."""
        for i, turn in enumerate(self.turns):
            expected = Role.SYSTEM if i % 2 == 0 else Role.USER
            if turn.role is not expected:
                raise ContractError(
                    f"turn alternation broken at index {i}: expected {expected.value}"
                )
            if turn.index != i:
                raise ContractError(f"turn index mismatch at position {i}")

    def user_turn_count(self) -> int:
        return sum(1 for t in self.turns if t.role is Role.USER)


@dataclass(frozen=True)
class TransitionDecision:
    """Outcome of a phase's transition test over its summary."""

    outcome: str  # "stay" | "advance"
    reason: str
    next_phase: Optional[Phase] = None
    end_session: bool = False

    def __post_init__(self) -> None:
        if self.outcome not in ("stay", "advance"):
            raise ContractError(f"invalid outcome: {self.outcome!r}")
        if self.outcome == "advance":
            if (self.next_phase is None) == (not self.end_session):
                raise ContractError("advance must carry next_phase or end_session, not both")
        elif self.next_phase is not None or self.end_session:
            raise ContractError("stay decision must not carry next_phase or end_session")

    @property
    def advances(self) -> bool:
        return self.outcome == "advance"


def stay(reason: str) -> TransitionDecision:
    return TransitionDecision(outcome="stay", reason=reason)


def advance(next_phase: Phase, reason: str) -> TransitionDecision:
    return TransitionDecision(outcome="advance", next_phase=next_phase, reason=reason)


def advance_to_end(reason: str) -> TransitionDecision:
    return TransitionDecision(outcome="advance", end_session=True, reason=reason)


def with_index(turn: Turn, index: int) -> Turn:
    return replace(turn, index=index)
