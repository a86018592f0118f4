"""Per-turn orchestration: safety, analysis, transition, composition, reply.

The loop for every accepted user message is fixed: screen the message for
safety (a flag overrides everything and jumps to Help), run the current
phase's analyzer over the whole history, evaluate the transition test,
switch phase when the goal is met, compose the prompt for the phase now in
effect, and generate exactly one system turn. Nothing is committed to the
session until the system turn exists, so a gateway failure leaves the
session exactly as it was and the client can retry the same message.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Callable, Optional

from .analyzers import ConversationAnalyzer, SafetyCategory
from .composer import PromptComposer, render_picker_directive
from .emotions import EmotionCatalog
from .errors import BusyError, ContractError, InvalidStateError, ValidationError
from .gateway import CompletionRequest, LLMGateway, Tier, Usage
from .model import (
    ALLOWED_EDGES,
    Attachments,
    Phase,
    Role,
    Session,
    SessionStatus,
    Turn,
    utc_now,
)
from .summaries import LabelSummary, PhaseSummary, empty_summary
from .transitions import evaluate_transition


@dataclass(frozen=True)
class TurnTrace:
    """What actually ran while handling one user turn; drives audits."""

    phase_before: Phase
    phase_after: Phase
    safety_flagged: bool
    safety_category: SafetyCategory
    analyzer_invoked: bool
    transition_evaluated: bool
    transition_reason: str
    picker_shown: bool


@dataclass(frozen=True)
class HandleResult:
    system_turns: tuple[Turn, ...]
    phase_after: Phase
    session_ended: bool
    user_turn: Turn
    picker: Optional[dict]
    prompt_digest: str
    usage: Usage
    trace: TurnTrace


@dataclass(frozen=True)
class CreateResult:
    session: Session
    greeting: Turn
    prompt_digest: str
    usage: Usage


@dataclass(frozen=True)
class EndResult:
    session: Session
    noop: bool


class DialogueEngine:
    """Serves many sessions; within one session, one message at a time."""

    def __init__(
        self,
        gateway: LLMGateway,
        catalog: EmotionCatalog,
        composer: PromptComposer,
        analyzer: ConversationAnalyzer,
        clock: Callable[[], datetime] = utc_now,
        id_factory: Callable[[], str] = lambda: uuid.uuid4().hex,
    ) -> None:
        self.gateway = gateway
        self.catalog = catalog
        self.composer = composer
        self.analyzer = analyzer
        self._clock = clock
        self._id_factory = id_factory
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def forget_session(self, session_id: str) -> None:
        with self._locks_guard:
            self._locks.pop(session_id, None)

    # -- session lifecycle -------------------------------------------------

    def create_session(
        self, user_name: str, user_age: int, locale: str = "ko"
    ) -> CreateResult:
        """New Explore session whose turn 0 is a generated greeting."""
        session = Session(
            session_id=self._id_factory(),
            user_name=user_name,
            user_age=user_age,
            locale=locale,
            created_at=self._clock(),
        )
        bundle = self.composer.compose(
            Phase.EXPLORE, session, empty_summary(Phase.EXPLORE)
        )
        result = self.gateway.complete(
            Tier.GENERATOR,
            CompletionRequest(
                messages=bundle.to_messages(),
                temperature=bundle.generation_params.temperature,
                max_output_tokens=bundle.generation_params.max_output_tokens,
            ),
        )
        greeting = Turn(
            index=0,
            role=Role.SYSTEM,
            content=result.content,
            phase=Phase.EXPLORE,
            timestamp=self._clock(),
        )
        session.turns.append(greeting)
        return CreateResult(
            session=session,
            greeting=greeting,
            prompt_digest=bundle.digest(),
            usage=result.usage,
        )

    def end_session(self, session: Session) -> EndResult:
        if session.status is SessionStatus.ENDED:
            return EndResult(session=session, noop=True)
        session.status = SessionStatus.ENDED
        return EndResult(session=session, noop=False)

    # -- message handling --------------------------------------------------

    def handle_user_message(
        self,
        session: Session,
        content: str,
        picked_emotion_ids: Optional[list[str]] = None,
    ) -> HandleResult:
        lock = self._session_lock(session.session_id)
        if not lock.acquire(blocking=False):
            raise BusyError(
                f"a message for session {session.session_id} is already being processed"
            )
        try:
            return self._handle_locked(session, content, picked_emotion_ids)
        finally:
            lock.release()

    def _handle_locked(
        self,
        session: Session,
        content: str,
        picked_emotion_ids: Optional[list[str]],
    ) -> HandleResult:
        if not session.is_active:
            raise InvalidStateError(
                f"session {session.session_id} has ended; no further messages accepted"
            )
        text = (content or "").strip()
        picks = self._validate_picks(session, picked_emotion_ids)
        if not text and not picks:
            raise ValidationError("message needs text or picked emotions")

        staged_user = Turn(
            index=session.next_index(),
            role=Role.USER,
            content=text,
            phase=session.phase,
            timestamp=self._clock(),
            attachments=Attachments(picked_emotion_ids=picks) if picks else None,
        )
        history = session.turns + [staged_user]
        phase_before = session.phase

        flag = self.analyzer.safety_screen(staged_user, session.turns)
        if flag.flagged:
            return self._respond_help(session, staged_user, history, flag)

        analyzer_invoked = phase_before is not Phase.HELP
        if analyzer_invoked:
            summary = self.analyzer.analyze(phase_before, history, self.catalog)
        else:
            # Help has no analyzer; its transition test holds the phase.
            summary = None
        decision = evaluate_transition(phase_before, summary)

        session_ended = False
        new_phase = phase_before
        new_previous = session.previous_phase
        summaries = dict(session.summaries)
        if summary is not None:
            summaries[phase_before] = summary

        if decision.advances:
            if decision.end_session:
                session_ended = True
            else:
                new_phase = decision.next_phase
                if (phase_before, new_phase) not in ALLOWED_EDGES:
                    raise ContractError(
                        f"illegal transition {phase_before.value} -> {new_phase.value}"
                    )
                new_previous = phase_before
                if new_phase is Phase.EXPLORE:
                    # Share loop: fresh goal tracking for the next event.
                    for reset in (Phase.EXPLORE, Phase.LABEL, Phase.FIND, Phase.RECORD):
                        summaries.pop(reset, None)

        compose_summary: Optional[PhaseSummary]
        if session_ended or not decision.advances:
            compose_summary = summary
        else:
            compose_summary = empty_summary(new_phase)

        entering_label = decision.advances and new_phase is Phase.LABEL
        picker_armed, picker_shown_in_visit = self._picker_state(
            session, entering_label, staged_user, compose_summary
        )
        show_picker = (
            new_phase is Phase.LABEL
            and isinstance(compose_summary, LabelSummary)
            and compose_summary.user_struggling_to_describe
            and picker_armed
        )
        picker_payload: Optional[dict] = None
        if show_picker:
            picker_payload = render_picker_directive(self.catalog, session.locale)
            picker_armed = False
            picker_shown_in_visit = True

        previous_summary = summaries.get(new_previous) if new_previous else None
        draft = replace(
            session,
            turns=history,
            summaries=summaries,
            phase=new_phase,
            previous_phase=new_previous,
        )
        bundle = self.composer.compose(
            new_phase,
            draft,
            compose_summary,
            previous_summary,
            picker_shown=show_picker,
        )
        completion = self.gateway.complete(
            Tier.GENERATOR,
            CompletionRequest(
                messages=bundle.to_messages(),
                temperature=bundle.generation_params.temperature,
                max_output_tokens=bundle.generation_params.max_output_tokens,
            ),
        )
        attachments = None
        if picker_payload is not None:
            attachments = Attachments(
                picker_shown=True,
                picker_emotions=tuple(picker_payload["emotions"]),
            )
        system_turn = Turn(
            index=staged_user.index + 1,
            role=Role.SYSTEM,
            content=completion.content,
            phase=new_phase,
            timestamp=self._clock(),
            attachments=attachments,
        )

        # Commit point: everything before this line touched only local state.
        session.turns.append(staged_user)
        session.turns.append(system_turn)
        session.summaries = summaries
        session.phase = new_phase
        session.previous_phase = new_previous
        session.picker_armed = picker_armed
        session.picker_shown_in_visit = picker_shown_in_visit
        if session_ended:
            session.status = SessionStatus.ENDED
        session.check_alternation()

        trace = TurnTrace(
            phase_before=phase_before,
            phase_after=new_phase,
            safety_flagged=False,
            safety_category=SafetyCategory.NONE,
            analyzer_invoked=analyzer_invoked,
            transition_evaluated=True,
            transition_reason=decision.reason,
            picker_shown=show_picker,
        )
        return HandleResult(
            system_turns=(system_turn,),
            phase_after=new_phase,
            session_ended=session_ended,
            user_turn=staged_user,
            picker=picker_payload,
            prompt_digest=bundle.digest(),
            usage=completion.usage,
            trace=trace,
        )

    def _respond_help(
        self,
        session: Session,
        staged_user: Turn,
        history: list[Turn],
        flag,
    ) -> HandleResult:
        """Safety override: no analyzer, no transition test, phase = Help."""
        phase_before = session.phase
        draft = replace(session, turns=history, phase=Phase.HELP)
        bundle = self.composer.compose(Phase.HELP, draft, None)
        completion = self.gateway.complete(
            Tier.GENERATOR,
            CompletionRequest(
                messages=bundle.to_messages(),
                temperature=bundle.generation_params.temperature,
                max_output_tokens=bundle.generation_params.max_output_tokens,
            ),
        )
        system_turn = Turn(
            index=staged_user.index + 1,
            role=Role.SYSTEM,
            content=completion.content,
            phase=Phase.HELP,
            timestamp=self._clock(),
        )
        session.turns.append(staged_user)
        session.turns.append(system_turn)
        if session.phase is not Phase.HELP:
            session.previous_phase = phase_before
        session.phase = Phase.HELP
        session.check_alternation()

        trace = TurnTrace(
            phase_before=phase_before,
            phase_after=Phase.HELP,
            safety_flagged=True,
            safety_category=flag.category,
            analyzer_invoked=False,
            transition_evaluated=False,
            transition_reason="safety override: user turn flagged",
            picker_shown=False,
        )
        return HandleResult(
            system_turns=(system_turn,),
            phase_after=Phase.HELP,
            session_ended=False,
            user_turn=staged_user,
            picker=None,
            prompt_digest=bundle.digest(),
            usage=completion.usage,
            trace=trace,
        )

    # -- helpers -----------------------------------------------------------

    def _validate_picks(
        self, session: Session, picked_emotion_ids: Optional[list[str]]
    ) -> tuple[str, ...]:
        if not picked_emotion_ids:
            return ()
        if session.phase is not Phase.LABEL:
            raise ValidationError(
                "emotion picks are only accepted while labeling emotions"
            )
        picks: list[str] = []
        for emotion_id in picked_emotion_ids:
            if emotion_id not in self.catalog:
                raise ValidationError(f"unknown emotion id: {emotion_id!r}")
            if emotion_id not in picks:
                picks.append(emotion_id)
        return tuple(picks)

    def _picker_state(
        self,
        session: Session,
        entering_label: bool,
        staged_user: Turn,
        compose_summary: Optional[PhaseSummary],
    ) -> tuple[bool, bool]:
        """Next (armed, shown_in_visit) under the picker discipline.

        Armed on Label entry; a submission keeps it disarmed; a no-pick turn
        that re-declares struggle after a showing re-arms it.
        """
        if entering_label:
            return True, False
        armed = session.picker_armed
        shown = session.picker_shown_in_visit
        if session.phase is not Phase.LABEL:
            return armed, shown
        if staged_user.picked_emotion_ids:
            return False, shown
        if (
            shown
            and not armed
            and isinstance(compose_summary, LabelSummary)
            and compose_summary.user_struggling_to_describe
        ):
            return True, shown
        return armed, shown
