"""Prompt composition: instruction assets plus per-turn status directives.

A generation prompt is always four text blocks in fixed order (persona
header, phase static instruction, dynamic conversation status, general
speaking rules) followed by the dialogue history. The static blocks come
from locale-keyed asset files validated at startup; the dynamic status is
templated deterministically from the phase summary, so composing the same
inputs twice yields byte-identical output.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .emotions import EmotionCatalog
from .errors import ConfigurationError, ContractError, ParseError, ValidationError
from .gateway import Message
from .model import Phase, Role, Session, Turn
from .summaries import (
    ExploreSummary,
    FindSummary,
    LabelSummary,
    PhaseSummary,
    RecordSummary,
    ShareSummary,
    empty_summary,
    render_summary_brief,
)
from .tokens import MESSAGE_OVERHEAD_TOKENS, estimate_tokens

ALLOWED_PLACEHOLDERS = frozenset(
    {"user_name", "user_age", "emotion_list", "previous_summary", "current_status"}
)

STATUS_HEADING = "[Current conversation status]"
CONTEXT_HEADING = "[Context from the previous phase]"
RECAP_HEADING = "[Recap of earlier conversation]"

# The one speaking rule the whole system leans on; its presence in every
# composed bundle is asserted at startup and in tests, per locale.
ONE_QUESTION_MARKER = {
    "en": "You MUST ask only one question",
    "ko": "반드시 질문을 하나만",
}

# User turns in Explore before the status block starts steering toward the
# memorable-episode question.
EXPLORE_NUDGE_AFTER_USER_TURNS = 5

_DIRECTIVES = {
    "en": {
        "explore_keep": (
            "The user has not shared a key episode yet. Keep the conversation "
            "friendly and keep looking for one."
        ),
        "explore_nudge": (
            "At least 5 conversations are done. Move on to the <Ask Task> and "
            "ask the user about an episode or moment that is the most "
            "memorable to them."
        ),
        "explore_done": "The user has shared a key episode: {description}",
        "label_none": (
            "No emotions have been identified yet. Help the user find words "
            "for how they felt about the episode."
        ),
        "label_unacknowledged": (
            "The emotion '{name}' has not been empathized yet. Empathize with "
            "it first before anything else."
        ),
        "label_covered": "Emotions already empathized: {names}.",
        "label_struggling": "The user is struggling to describe their emotions.",
        "label_picker_now": (
            "The app is now showing the user the emotion list. Invite them to "
            "pick the emotions that match how they felt."
        ),
        "find_others": (
            "The episode involves other people. Explicitly ask the user how "
            "those people would feel."
        ),
        "find_unsolved": (
            "An actionable solution has not been settled yet. Keep helping the "
            "user find one without pushing a specific answer."
        ),
        "find_solutions": "Solutions discussed so far: {solutions}.",
        "record_ask_diary": (
            "You have not asked yet whether the user keeps a diary or journal "
            "regularly. Start with that."
        ),
        "record_benefits": (
            "The benefits of recording positive moments have not been "
            "explained yet."
        ),
        "record_sample": (
            "No example diary entry has been offered yet. Provide one "
            "summarizing the positive emotions and their reasons."
        ),
        "record_wrap": (
            "Diary keeping is fully introduced. Wrap up warmly and check the "
            "user got the idea."
        ),
        "share_ask": (
            "You have not asked yet whether the user already shared this "
            "episode with their parents. Ask that first."
        ),
        "share_encourage": (
            "The user has not shared the episode with their parents yet. "
            "Explain why sharing with them matters and encourage it."
        ),
        "share_praise": (
            "The user already shared with their parents. Praise them for it "
            "and ask what happened after."
        ),
        "share_next": (
            "Ask whether the user has another episode or moment they would "
            "like to share."
        ),
        "share_goodbye": (
            "The user has nothing more to share and said goodbye. Say a warm "
            "goodbye back and close the conversation."
        ),
        "help_focus": (
            "A safety concern was detected in the user's latest message. "
            "Follow the safety steps above and keep the focus on reaching a "
            "trusted adult."
        ),
    },
    "ko": {
        "explore_keep": (
            "사용자가 아직 중요한 일을 이야기하지 않았어. 다정하게 대화를 "
            "이어 가면서 계속 찾아봐."
        ),
        "explore_nudge": (
            "대화를 5번 이상 나눴어. <질문 임무>로 넘어가서 사용자에게 가장 "
            "기억에 남는 일이나 순간을 물어봐."
        ),
        "explore_done": "사용자가 중요한 일을 이야기했어: {description}",
        "label_none": (
            "아직 확인된 감정이 없어. 사용자가 그 일에 대해 어떻게 느꼈는지 "
            "말로 표현하도록 도와줘."
        ),
        "label_unacknowledged": (
            "'{name}' 감정에는 아직 공감해 주지 않았어. 다른 무엇보다 먼저 "
            "이 감정에 공감해 줘."
        ),
        "label_covered": "이미 공감한 감정: {names}.",
        "label_struggling": "사용자가 감정을 표현하는 것을 어려워하고 있어.",
        "label_picker_now": (
            "앱이 지금 사용자에게 감정 목록을 보여 주고 있어. 느낀 감정을 "
            "골라 보라고 권해 줘."
        ),
        "find_others": (
            "그 일에는 다른 사람들이 관련되어 있어. 그 사람들이 어떻게 느낄지 "
            "사용자에게 분명하게 물어봐."
        ),
        "find_unsolved": (
            "실천할 수 있는 해결책이 아직 정해지지 않았어. 특정한 답을 밀어붙이지 "
            "말고 사용자가 하나를 찾도록 계속 도와줘."
        ),
        "find_solutions": "지금까지 이야기한 해결책: {solutions}.",
        "record_ask_diary": (
            "사용자가 평소에 일기나 저널을 꾸준히 쓰는지 아직 묻지 않았어. "
            "그것부터 물어봐."
        ),
        "record_benefits": "긍정적인 순간을 기록하면 좋은 점을 아직 설명하지 않았어.",
        "record_sample": (
            "예시 일기를 아직 보여 주지 않았어. 긍정적인 감정과 그 이유를 요약한 "
            "예시를 하나 보여 줘."
        ),
        "record_wrap": (
            "일기 쓰기 이야기는 충분히 했어. 따뜻하게 마무리하면서 사용자가 잘 "
            "이해했는지 확인해."
        ),
        "share_ask": (
            "사용자가 이 일을 부모님께 이미 이야기했는지 아직 묻지 않았어. "
            "그것부터 물어봐."
        ),
        "share_encourage": (
            "사용자가 아직 부모님께 이야기하지 않았어. 부모님과 나누는 것이 왜 "
            "중요한지 설명하고 격려해 줘."
        ),
        "share_praise": (
            "사용자가 이미 부모님께 이야기했어. 칭찬해 주고 이야기한 뒤에 어떤 "
            "일이 있었는지 물어봐."
        ),
        "share_next": "사용자에게 나누고 싶은 다른 일이 있는지 물어봐.",
        "share_goodbye": (
            "사용자가 더 나눌 이야기가 없다고 하면서 작별 인사를 했어. 따뜻하게 "
            "작별 인사를 하고 대화를 마무리해."
        ),
        "help_focus": (
            "사용자의 마지막 메시지에서 안전과 관련된 걱정이 감지됐어. 위의 "
            "안전 지침을 따르고, 믿을 수 있는 어른에게 닿는 것에 집중해."
        ),
    },
}


@dataclass(frozen=True)
class InstructionAsset:
    """One parsed asset file: front matter plus template body."""

    kind: str  # "persona", "phase", "speaking_rules"
    phase: Optional[Phase]
    locale: str
    template: str
    placeholders: tuple[str, ...]


_FRONT_MATTER_RE = re.compile(r"\A---\n(.*?)\n---\n", re.DOTALL)
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


def parse_asset(text: str, origin: str = "<asset>") -> InstructionAsset:
    match = _FRONT_MATTER_RE.match(text)
    if match is None:
        raise ParseError(f"{origin}: missing front-matter header")
    header: dict[str, str] = {}
    for line in match.group(1).splitlines():
        if not line.strip():
            continue
        if ":" not in line:
            raise ParseError(f"{origin}: bad front-matter line {line!r}")
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()
    kind = header.get("kind", "")
    if kind not in ("persona", "phase", "speaking_rules"):
        raise ParseError(f"{origin}: unknown asset kind {kind!r}")
    locale = header.get("locale", "")
    if not locale:
        raise ParseError(f"{origin}: missing locale")
    phase: Optional[Phase] = None
    if kind == "phase":
        try:
            phase = Phase(header.get("phase", ""))
        except ValueError:
            raise ParseError(f"{origin}: bad or missing phase") from None
    declared = tuple(
        p.strip() for p in header.get("placeholders", "").split(",") if p.strip()
    )
    bad = set(declared) - ALLOWED_PLACEHOLDERS
    if bad:
        raise ParseError(f"{origin}: placeholders not allowed: {sorted(bad)}")
    body = text[match.end() :].strip("\n")
    used = set(_PLACEHOLDER_RE.findall(body)) & ALLOWED_PLACEHOLDERS
    undeclared = used - set(declared)
    if undeclared:
        raise ParseError(
            f"{origin}: placeholders used but not declared: {sorted(undeclared)}"
        )
    return InstructionAsset(
        kind=kind, phase=phase, locale=locale, template=body, placeholders=declared
    )


def _fill(template: str, values: dict[str, str]) -> str:
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    return out


class AssetStore:
    """All instruction assets for the configured locales, loaded once.

    Missing or malformed files surface at construction so a bad deployment
    fails at startup, never in the middle of a child's conversation.
    """

    _PHASE_FILES = {phase: f"{phase.value}.txt" for phase in Phase}

    def __init__(self, assets: dict[tuple[str, str], InstructionAsset], locales: tuple[str, ...]):
        self._assets = assets
        self.locales = locales
        self._validate()

    @classmethod
    def from_directory(cls, root: Union[str, Path], locales: tuple[str, ...] = ("en", "ko")) -> "AssetStore":
        root = Path(root)
        assets: dict[tuple[str, str], InstructionAsset] = {}
        for locale in locales:
            base = root / locale
            names = ["persona.txt", "speaking_rules.txt"] + [
                f"{phase.value}.txt" for phase in Phase
            ]
            for name in names:
                path = base / name
                if not path.is_file():
                    raise ConfigurationError(f"missing instruction asset: {path}")
                asset = parse_asset(path.read_text(encoding="utf-8"), str(path))
                assets[(locale, name[: -len(".txt")])] = asset
        return cls(assets, tuple(locales))

    @classmethod
    def default(cls, locales: tuple[str, ...] = ("en", "ko")) -> "AssetStore":
        root = resources.files("chacha.assets") / "prompts"
        return cls.from_directory(Path(str(root)), locales)

    def _validate(self) -> None:
        for locale in self.locales:
            for phase in Phase:
                key = (locale, phase.value)
                if key not in self._assets:
                    raise ConfigurationError(
                        f"no instruction asset for phase {phase.value!r}, "
                        f"locale {locale!r}"
                    )
                if self._assets[key].locale != locale:
                    raise ConfigurationError(
                        f"asset {key} declares locale {self._assets[key].locale!r}"
                    )
            for kind in ("persona", "speaking_rules"):
                if (locale, kind) not in self._assets:
                    raise ConfigurationError(
                        f"no {kind} asset for locale {locale!r}"
                    )
            marker = ONE_QUESTION_MARKER.get(locale)
            if marker and marker not in self._assets[(locale, "speaking_rules")].template:
                raise ConfigurationError(
                    f"speaking rules for locale {locale!r} lost the "
                    f"one-question rule ({marker!r})"
                )
            if locale not in _DIRECTIVES:
                raise ConfigurationError(
                    f"no status directives defined for locale {locale!r}"
                )

    def persona(self, locale: str) -> InstructionAsset:
        return self._get(locale, "persona")

    def speaking_rules(self, locale: str) -> InstructionAsset:
        return self._get(locale, "speaking_rules")

    def phase(self, phase: Phase, locale: str) -> InstructionAsset:
        return self._get(locale, phase.value)

    def _get(self, locale: str, key: str) -> InstructionAsset:
        try:
            return self._assets[(locale, key)]
        except KeyError:
            raise ConfigurationError(
                f"no asset {key!r} for locale {locale!r}"
            ) from None


@dataclass(frozen=True)
class GenerationParams:
    temperature: float
    max_output_tokens: int


@dataclass(frozen=True)
class PromptBundle:
    """Fully composed generation input for one system turn."""

    persona_header: str
    phase_static: str
    dynamic_status: str
    speaking_rules: str
    history: tuple[Turn, ...]
    generation_params: GenerationParams
    history_recap: str = ""

    def system_text(self) -> str:
        return "\n\n".join(
            (
                self.persona_header,
                self.phase_static,
                self.dynamic_status,
                self.speaking_rules,
            )
        )

    def to_messages(self) -> tuple[Message, ...]:
        messages = [Message("system", self.system_text())]
        if self.history_recap:
            messages.append(Message("system", self.history_recap))
        for turn in self.history:
            role = "user" if turn.role == Role.USER else "assistant"
            messages.append(Message(role, render_turn_content(turn)))
        return tuple(messages)

    def digest(self) -> str:
        hasher = hashlib.sha256()
        for message in self.to_messages():
            hasher.update(message.role.encode("utf-8"))
            hasher.update(b"\x00")
            hasher.update(message.content.encode("utf-8"))
            hasher.update(b"\x00")
        return hasher.hexdigest()


def render_turn_content(turn: Turn) -> str:
    """Turn content as the model sees it, picker selections made explicit."""
    parts = []
    if turn.content:
        parts.append(turn.content)
    if turn.picked_emotion_ids:
        parts.append("[Selected emotions: " + ", ".join(turn.picked_emotion_ids) + "]")
    return "\n".join(parts)


def render_emotion_list(catalog: EmotionCatalog, locale: str) -> str:
    return "\n".join(f"- {e.label(locale)} {e.emoji}" for e in catalog.entries)


def render_picker_directive(catalog: EmotionCatalog, locale: str) -> dict:
    """Attachment payload telling the client to show the emotion picker.

    Carries every catalog entry in catalog order; the client renders them
    as a multi-select grid.
    """
    if len(catalog) == 0:
        raise ValidationError("cannot offer an emotion picker with zero options")
    return {
        "picker_shown": True,
        "emotions": [
            {"id": e.id, "label": e.label(locale), "emoji": e.emoji}
            for e in catalog.entries
        ],
    }


class PromptComposer:
    """Stateless bundle builder; safe for concurrent use after startup."""

    # Tokens held back from the history budget for the recap paragraph and
    # estimation slack.
    _RECAP_ALLOWANCE = 160
    _SAFETY_MARGIN = 64
    # Newest turns always kept, budget or not; the gateway's budget gate is
    # the final arbiter.
    _MIN_KEPT_TURNS = 2

    def __init__(
        self,
        assets: AssetStore,
        catalog: EmotionCatalog,
        generation_params: GenerationParams = GenerationParams(0.7, 1024),
        context_limit_tokens: int = 8192,
        model_id: str = "",
    ) -> None:
        self.assets = assets
        self.catalog = catalog
        self.generation_params = generation_params
        self.context_limit_tokens = context_limit_tokens
        self.model_id = model_id

    def compose(
        self,
        phase: Phase,
        session: Session,
        current_summary: Optional[PhaseSummary],
        previous_summary: Optional[PhaseSummary] = None,
        *,
        picker_shown: bool = False,
    ) -> PromptBundle:
        locale = session.locale
        if current_summary is None and phase is not Phase.HELP:
            current_summary = empty_summary(phase)
        persona = _fill(
            self.assets.persona(locale).template,
            {"user_name": session.user_name, "user_age": str(session.user_age)},
        )
        static = _fill(
            self.assets.phase(phase, locale).template,
            {"emotion_list": render_emotion_list(self.catalog, locale)},
        )
        status = self._dynamic_status(
            phase, session, current_summary, previous_summary, picker_shown
        )
        rules = self.assets.speaking_rules(locale).template
        history, recap = self._fit_history(
            session, persona, static, status, rules, locale
        )
        return PromptBundle(
            persona_header=persona,
            phase_static=static,
            dynamic_status=status,
            speaking_rules=rules,
            history=history,
            generation_params=self.generation_params,
            history_recap=recap,
        )

    def _directive(self, locale: str, key: str, **kwargs: str) -> str:
        return _DIRECTIVES[locale][key].format(**kwargs)

    def _emotion_name(self, id_or_free_text: str, locale: str) -> str:
        if id_or_free_text in self.catalog:
            return self.catalog.get(id_or_free_text).label(locale)
        return id_or_free_text

    def _dynamic_status(
        self,
        phase: Phase,
        session: Session,
        summary: Optional[PhaseSummary],
        previous_summary: Optional[PhaseSummary],
        picker_shown: bool,
    ) -> str:
        locale = session.locale
        lines = self._status_lines(phase, session, summary, picker_shown)
        parts = []
        if previous_summary is not None:
            parts.append(
                CONTEXT_HEADING + "\n" + render_summary_brief(previous_summary, locale)
            )
        parts.append(
            STATUS_HEADING + "\n" + "\n".join(f"- {line}" for line in lines)
        )
        return "\n\n".join(parts)

    def _status_lines(
        self,
        phase: Phase,
        session: Session,
        summary: Optional[PhaseSummary],
        picker_shown: bool,
    ) -> list[str]:
        locale = session.locale
        d = self._directive
        if phase == Phase.HELP:
            return [d(locale, "help_focus")]

        expected = {
            Phase.EXPLORE: ExploreSummary,
            Phase.LABEL: LabelSummary,
            Phase.FIND: FindSummary,
            Phase.RECORD: RecordSummary,
            Phase.SHARE: ShareSummary,
        }[phase]
        if not isinstance(summary, expected):
            raise ContractError(
                f"composing {phase.value} needs a {expected.__name__}, "
                f"got {type(summary).__name__}"
            )

        lines: list[str] = []
        if phase == Phase.EXPLORE:
            if summary.key_event_shared:
                lines.append(
                    d(
                        locale,
                        "explore_done",
                        description=summary.key_event_description or "",
                    ).rstrip()
                )
            elif session.user_turn_count() >= EXPLORE_NUDGE_AFTER_USER_TURNS:
                lines.append(d(locale, "explore_nudge"))
            else:
                lines.append(d(locale, "explore_keep"))
        elif phase == Phase.LABEL:
            if not summary.emotions:
                lines.append(d(locale, "label_none"))
            else:
                covered = [
                    self._emotion_name(e.id_or_free_text, locale)
                    for e in summary.emotions
                    if e.acknowledged
                ]
                if covered:
                    lines.append(d(locale, "label_covered", names=", ".join(covered)))
                for emotion in summary.unacknowledged():
                    lines.append(
                        d(
                            locale,
                            "label_unacknowledged",
                            name=self._emotion_name(emotion.id_or_free_text, locale),
                        )
                    )
            if picker_shown:
                lines.append(d(locale, "label_struggling"))
                lines.append(d(locale, "label_picker_now"))
            elif summary.user_struggling_to_describe:
                lines.append(d(locale, "label_struggling"))
        elif phase == Phase.FIND:
            if summary.others_involved and not summary.others_feelings_discussed:
                lines.append(d(locale, "find_others"))
            if summary.solutions:
                lines.append(
                    d(locale, "find_solutions", solutions="; ".join(summary.solutions))
                )
            if not summary.solutions_explored:
                lines.append(d(locale, "find_unsolved"))
        elif phase == Phase.RECORD:
            if not summary.keeps_diary_asked:
                lines.append(d(locale, "record_ask_diary"))
            if not summary.benefits_explained:
                lines.append(d(locale, "record_benefits"))
            if not summary.sample_diary_offered:
                lines.append(d(locale, "record_sample"))
            if not lines:
                lines.append(d(locale, "record_wrap"))
        elif phase == Phase.SHARE:
            if summary.user_done:
                return [d(locale, "share_goodbye")]
            if summary.already_shared_with_parents is None:
                lines.append(d(locale, "share_ask"))
            elif summary.already_shared_with_parents is False:
                lines.append(d(locale, "share_encourage"))
            elif not summary.sharing_encouraged_or_praised:
                lines.append(d(locale, "share_praise"))
            if (
                summary.already_shared_with_parents is not None
                and summary.sharing_encouraged_or_praised
                and not summary.new_event_requested
            ):
                lines.append(d(locale, "share_next"))
        return lines

    def _fit_history(
        self,
        session: Session,
        persona: str,
        static: str,
        status: str,
        rules: str,
        locale: str,
    ) -> tuple[tuple[Turn, ...], str]:
        turns = list(session.turns)
        if not turns:
            return (), ""
        system_text = "\n\n".join((persona, static, status, rules))
        budget = (
            self.context_limit_tokens
            - self.generation_params.max_output_tokens
            - estimate_tokens(system_text, self.model_id)
            - MESSAGE_OVERHEAD_TOKENS
            - self._SAFETY_MARGIN
        )
        costs = [
            estimate_tokens(render_turn_content(t), self.model_id)
            + MESSAGE_OVERHEAD_TOKENS
            for t in turns
        ]
        if sum(costs) <= budget:
            return tuple(turns), ""

        # Keep the greeting and the newest suffix; recap the dropped middle.
        greeting_cost = costs[0]
        remaining = budget - greeting_cost - self._RECAP_ALLOWANCE
        kept_reversed: list[Turn] = []
        for turn, cost in zip(reversed(turns[1:]), reversed(costs[1:])):
            if remaining - cost < 0 and len(kept_reversed) >= self._MIN_KEPT_TURNS:
                break
            remaining -= cost
            kept_reversed.append(turn)
        kept_suffix = list(reversed(kept_reversed))
        dropped = len(turns) - 1 - len(kept_suffix)
        if dropped <= 0:
            return tuple(turns), ""
        recap = self._render_recap(session, dropped, locale)
        return tuple([turns[0]] + kept_suffix), recap

    def _render_recap(self, session: Session, dropped: int, locale: str) -> str:
        briefs = [
            render_summary_brief(session.summaries[phase], locale)
            for phase in Phase
            if phase in session.summaries and session.summaries[phase] is not None
        ]
        if locale == "ko":
            head = (
                f"앞선 메시지 {dropped}개는 대화 기록에서 생략됐어. "
                "지금까지의 대화 요약: "
            )
        else:
            head = (
                f"{dropped} earlier messages are omitted from the transcript. "
                "Summary of the conversation so far: "
            )
        return RECAP_HEADING + "\n" + head + " ".join(briefs)
