"""Pure transition tests deciding whether a phase's goal is met.

Explore advances once a key event is shared; Label once every identified
emotion is acknowledged, branching on valence; Find once solutions are
explored; Record once the diary discussion is complete; Share loops back
to Explore for a new event or ends the session; Help never auto-exits.
"""

from __future__ import annotations

from typing import Optional

from .errors import ContractError
from .model import Phase, TransitionDecision, advance, advance_to_end, stay
from .summaries import (
    ExploreSummary,
    FindSummary,
    LabelSummary,
    PhaseSummary,
    RecordSummary,
    ShareSummary,
)

_EXPECTED_SUMMARY = {
    Phase.EXPLORE: ExploreSummary,
    Phase.LABEL: LabelSummary,
    Phase.FIND: FindSummary,
    Phase.RECORD: RecordSummary,
    Phase.SHARE: ShareSummary,
}


def evaluate_transition(phase: Phase, summary: Optional[PhaseSummary]) -> TransitionDecision:
    """Decide stay/advance for ``phase`` from its summary. Pure: no side effects.

    Help ignores the summary (there is no Help analyzer) and always stays.
    For every other phase the summary variant must match the phase.
    """
    if phase is Phase.HELP:
        return stay("help phase never exits automatically")

    expected = _EXPECTED_SUMMARY[phase]
    if not isinstance(summary, expected):
        raise ContractError(
            f"summary for phase {phase.value} must be {expected.__name__}, "
            f"got {type(summary).__name__}"
        )

    if phase is Phase.EXPLORE:
        if summary.key_event_shared:
            return advance(Phase.LABEL, "key event shared")
        return stay("no key event shared yet")

    if phase is Phase.LABEL:
        if not summary.emotions:
            return stay("no emotions identified yet")
        pending = summary.unacknowledged()
        if pending:
            names = ", ".join(e.id_or_free_text for e in pending)
            return stay(f"emotions not yet acknowledged: {names}")
        if summary.any_negative():
            return advance(Phase.FIND, "all emotions acknowledged; at least one negative")
        return advance(Phase.RECORD, "all emotions acknowledged; none negative")

    if phase is Phase.FIND:
        if summary.solutions_explored:
            return advance(Phase.SHARE, "actionable solutions explored")
        return stay("solutions not explored yet")

    if phase is Phase.RECORD:
        if summary.diary_discussed:
            return advance(Phase.SHARE, "diary benefits explained and sample offered")
        return stay("diary discussion not finished")

    # Share: a request for another story outranks a goodbye; the session
    # must not end unless the user explicitly asks to finish.
    if summary.new_event_requested:
        return advance(Phase.EXPLORE, "user has another event to share")
    if summary.user_done:
        return advance_to_end("user has nothing more to share and said goodbye")
    return stay("sharing conversation still in progress")
