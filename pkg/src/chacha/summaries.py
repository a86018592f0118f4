"""Structured per-phase summaries extracted from the dialogue history.

Each phase has its own payload shape carrying exactly the facts its
transition test needs. Summaries normally come from the analyzer-tier
model, so constructors normalize invariant violations deterministically
instead of raising: a sloppy model keeps the engine probing, not crashing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .model import Phase

# Marker stored in FindSummary.solutions when the child declines to look for
# solutions and accepts the emotion as-is; counts as an explored outcome.
REFUSAL_MARKER = "user declined; accepts the emotion"


@dataclass(frozen=True)
class EmotionItem:
    """One identified emotion and its tracking flags."""

    id_or_free_text: str
    from_picker: bool = False
    acknowledged: bool = False
    is_negative: bool = False


@dataclass(frozen=True)
class ExploreSummary:
    phase: Phase = field(default=Phase.EXPLORE, init=False)
    key_event_shared: bool = False
    key_event_description: Optional[str] = None


@dataclass(frozen=True)
class LabelSummary:
    phase: Phase = field(default=Phase.LABEL, init=False)
    emotions: tuple[EmotionItem, ...] = ()
    user_struggling_to_describe: bool = False

    def all_acknowledged(self) -> bool:
        return bool(self.emotions) and all(e.acknowledged for e in self.emotions)

    def any_negative(self) -> bool:
        return any(e.is_negative for e in self.emotions)

    def unacknowledged(self) -> tuple[EmotionItem, ...]:
        return tuple(e for e in self.emotions if not e.acknowledged)


@dataclass(frozen=True)
class FindSummary:
    phase: Phase = field(default=Phase.FIND, init=False)
    others_involved: bool = False
    others_feelings_discussed: bool = False
    solutions: tuple[str, ...] = ()
    solutions_explored: bool = False

    def __post_init__(self) -> None:
        # solutions_explored requires at least one recorded solution (the
        # refusal marker counts); normalize rather than trust the model.
        if self.solutions_explored and not self.solutions:
            object.__setattr__(self, "solutions_explored", False)


@dataclass(frozen=True)
class RecordSummary:
    phase: Phase = field(default=Phase.RECORD, init=False)
    keeps_diary_asked: bool = False
    benefits_explained: bool = False
    sample_diary_offered: bool = False
    diary_discussed: bool = False

    def __post_init__(self) -> None:
        # diary_discussed implies both sub-goals; coerce when the model
        # claims completion it has not earned.
        if self.diary_discussed and not (self.benefits_explained and self.sample_diary_offered):
            object.__setattr__(self, "diary_discussed", False)


@dataclass(frozen=True)
class ShareSummary:
    phase: Phase = field(default=Phase.SHARE, init=False)
    already_shared_with_parents: Optional[bool] = None
    sharing_encouraged_or_praised: bool = False
    new_event_requested: bool = False
    user_done: bool = False


PhaseSummary = Union[ExploreSummary, LabelSummary, FindSummary, RecordSummary, ShareSummary]

_EMPTY_BY_PHASE = {
    Phase.EXPLORE: ExploreSummary,
    Phase.LABEL: LabelSummary,
    Phase.FIND: FindSummary,
    Phase.RECORD: RecordSummary,
    Phase.SHARE: ShareSummary,
}


def empty_summary(phase: Phase) -> PhaseSummary:
    """Fresh all-goals-unmet summary for a phase just entered."""
    try:
        return _EMPTY_BY_PHASE[phase]()
    except KeyError:
        raise ValueError(f"no summary variant for phase {phase.value}")


def merge_picked_emotions(
    summary: LabelSummary,
    picked: dict[str, bool],
) -> LabelSummary:
    """Fold picker selections into a label summary deterministically.

    ``picked`` maps emotion id -> is_negative (resolved via the catalog).
    A picked emotion is identified with from_picker=True unconditionally,
    regardless of what the model reported; model-reported flags for the
    same id are preserved.
    """
    by_key = {e.id_or_free_text: e for e in summary.emotions}
    merged = list(summary.emotions)
    for emotion_id, is_negative in picked.items():
        existing = by_key.get(emotion_id)
        if existing is None:
            merged.append(
                EmotionItem(
                    id_or_free_text=emotion_id,
                    from_picker=True,
                    acknowledged=False,
                    is_negative=is_negative,
                )
            )
        elif not existing.from_picker:
            merged[merged.index(existing)] = replace(existing, from_picker=True)
    return replace(summary, emotions=tuple(merged))


def render_summary_brief(summary: PhaseSummary, locale: str = "en") -> str:
    """One-paragraph deterministic rendering used for prompt context."""
    if isinstance(summary, ExploreSummary):
        if summary.key_event_shared and summary.key_event_description:
            return f"The user shared this key event: {summary.key_event_description}"
        if summary.key_event_shared:
            return "The user shared a key event."
        return "No key event has been identified yet."
    if isinstance(summary, LabelSummary):
        if not summary.emotions:
            return "No emotions have been identified yet."
        parts = []
        for e in summary.emotions:
            polarity = "negative" if e.is_negative else "positive"
            status = "acknowledged" if e.acknowledged else "not yet acknowledged"
            parts.append(f"{e.id_or_free_text} ({polarity}, {status})")
        return "Emotions identified about the event: " + "; ".join(parts) + "."
    if isinstance(summary, FindSummary):
        if summary.solutions:
            return "Solutions the user explored: " + "; ".join(summary.solutions) + "."
        return "No solutions have been explored yet."
    if isinstance(summary, RecordSummary):
        if summary.diary_discussed:
            return "The benefits of keeping a diary were explained and a sample diary was offered."
        return "The diary conversation is not finished yet."
    if isinstance(summary, ShareSummary):
        if summary.already_shared_with_parents is True:
            return "The user has already shared the episode with their parents."
        if summary.already_shared_with_parents is False:
            return "The user has not shared the episode with their parents yet."
        return "It is unknown whether the user shared the episode with their parents."
    raise TypeError(f"unknown summary type: {type(summary)!r}")
