"""Conversation analyzers: phase summaries, safety screen, valence calls.

All three operations run on the analyzer model tier. Summary extraction
uses chain-of-thought prompting with bundled few-shot examples and takes
only the final JSON line of the model's reply; everything above it is
scratch reasoning and is discarded. Picker submissions bypass the model
entirely: a picked emotion lands in the summary no matter what the model
said.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Union

from .composer import render_turn_content
from .emotions import EmotionCatalog, Valence
from .errors import (
    AnalyzerError,
    ChaChaError,
    ConfigurationError,
    ContractError,
    ParseError,
)
from .gateway import CompletionRequest, LLMGateway, Message, Tier
from .model import Phase, Role, Turn
from .summaries import (
    EmotionItem,
    ExploreSummary,
    FindSummary,
    LabelSummary,
    PhaseSummary,
    RecordSummary,
    ShareSummary,
    merge_picked_emotions,
)

logger = logging.getLogger("chacha.safety")


class SafetyCategory(str, Enum):
    SELF_HARM = "self_harm"
    SUICIDE = "suicide"
    NONE = "none"


@dataclass(frozen=True)
class SafetyFlag:
    """Outcome of screening one user turn."""

    flagged: bool
    category: SafetyCategory = SafetyCategory.NONE
    evidence: str = ""

    def __post_init__(self) -> None:
        # flagged and category must agree; normalize rather than trust input.
        if self.flagged and self.category is SafetyCategory.NONE:
            object.__setattr__(self, "category", SafetyCategory.SELF_HARM)
        if not self.flagged:
            object.__setattr__(self, "category", SafetyCategory.NONE)
            object.__setattr__(self, "evidence", "")


_DECODER = json.JSONDecoder()


def extract_final_json(text: str) -> Optional[dict]:
    """Parse the trailing JSON object of a model reply, or None.

    Scans candidate '{' positions from the right; the object must be the
    last thing in the reply (trailing whitespace aside).
    """
    stripped = text.rstrip()
    pos = len(stripped)
    for _ in range(64):
        start = stripped.rfind("{", 0, pos)
        if start < 0:
            return None
        try:
            obj, end = _DECODER.raw_decode(stripped, start)
        except ValueError:
            pos = start
            continue
        if isinstance(obj, dict) and not stripped[end:].strip():
            return obj
        pos = start
    return None


def render_history(history: list[Turn]) -> str:
    lines = []
    for turn in history:
        speaker = "Child" if turn.role is Role.USER else "ChaCha"
        lines.append(f"{speaker}: {render_turn_content(turn)}")
    return "\n".join(lines)


def _as_bool(value: object, default: bool = False) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)) and value in (0, 1):
        return bool(value)
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("true", "yes"):
            return True
        if lowered in ("false", "no"):
            return False
    return default


def _as_optional_bool(value: object) -> Optional[bool]:
    if value is None:
        return None
    if isinstance(value, str) and value.strip().lower() in ("null", "unknown", ""):
        return None
    return _as_bool(value)


def _as_str_list(value: object) -> tuple[str, ...]:
    if not isinstance(value, list):
        return ()
    return tuple(str(item).strip() for item in value if str(item).strip())


_SCHEMA_LINES = {
    Phase.EXPLORE: (
        '{"key_event_shared": true|false, '
        '"key_event_description": "one sentence" or null}'
    ),
    Phase.LABEL: (
        '{"emotions": [{"name": "...", "acknowledged": true|false, '
        '"is_negative": true|false|null}], '
        '"user_struggling_to_describe": true|false}'
    ),
    Phase.FIND: (
        '{"others_involved": true|false, "others_feelings_discussed": true|false, '
        '"solutions": ["..."], "solutions_explored": true|false}'
    ),
    Phase.RECORD: (
        '{"keeps_diary_asked": true|false, "benefits_explained": true|false, '
        '"sample_diary_offered": true|false, "diary_discussed": true|false}'
    ),
    Phase.SHARE: (
        '{"already_shared_with_parents": true|false|null, '
        '"sharing_encouraged_or_praised": true|false, '
        '"new_event_requested": true|false, "user_done": true|false}'
    ),
}

_PHASE_GUIDANCE = {
    Phase.EXPLORE: (
        "Decide whether the child has recounted a key episode: a specific "
        "event or moment that happened to them. Statements about hobbies, "
        "general likes, or facts about themselves are not events. If a key "
        "episode was shared, describe it in one sentence."
    ),
    Phase.LABEL: (
        "List every emotion the child has expressed about the key episode. "
        "For each one, record whether ChaCha has already empathized with it "
        "(restated the feeling or shared a similar experience of its own), "
        "and whether the emotion is felt as negative in this context (null "
        "when unsure). Also record whether the child is struggling to "
        "describe their emotions: they explicitly say they do not know how, "
        "or only manage vague words like good or bad."
    ),
    Phase.FIND: (
        "Record whether other people are involved in the episode and whether "
        "their feelings have been discussed. List every solution the child "
        "has considered, and whether the child has settled on an actionable "
        "solution. If the child explicitly declines to look for solutions "
        "and accepts the feeling as it is, record the single solution entry "
        '"user declined; accepts the emotion" and mark solutions_explored '
        "true."
    ),
    Phase.RECORD: (
        "Record whether ChaCha asked if the child keeps a diary or journal, "
        "whether the benefits of recording positive moments were explained, "
        "whether an example diary entry was offered, and whether the diary "
        "conversation is complete."
    ),
    Phase.SHARE: (
        "Record whether the child already shared the episode with their "
        "parents (null if it has not come up yet), whether ChaCha encouraged "
        "sharing or praised the child for it, whether the child wants to "
        "share another episode, and whether the child said they are done and "
        "want to finish the conversation."
    ),
}

_FINAL_LINE_INSTRUCTION = (
    "Think step by step about the dialogue first. Then end your reply with a "
    "single line containing only one JSON object of this exact shape:\n"
)

_REFORMAT_INSTRUCTION = (
    "Your previous reply did not end with a valid JSON object. Reply again "
    "with only the JSON object of the required shape, nothing else."
)

_EXTRACT_DIRECTIVE = (
    "Think step by step about the dialogue above, then write the final JSON "
    "object on the last line."
)


@dataclass(frozen=True)
class FewShotExample:
    history_excerpt: str
    expected_summary: dict


def load_fewshot_examples(source: Union[str, Path]) -> tuple[FewShotExample, ...]:
    text = Path(source).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"few-shot file {source} is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"few-shot file {source} must be a JSON array")
    examples = []
    for i, item in enumerate(raw):
        if (
            not isinstance(item, dict)
            or not isinstance(item.get("history_excerpt"), str)
            or not isinstance(item.get("expected_summary"), dict)
        ):
            raise ParseError(
                f"few-shot file {source}, example {i + 1}: expected "
                "{history_excerpt, expected_summary}"
            )
        examples.append(FewShotExample(item["history_excerpt"], item["expected_summary"]))
    return tuple(examples)


def load_safety_lexicon(source: Union[str, Path]) -> tuple[str, ...]:
    text = Path(source).read_text(encoding="utf-8")
    phrases = tuple(line.strip() for line in text.splitlines() if line.strip())
    if not phrases:
        raise ConfigurationError(f"safety lexicon {source} is empty")
    return phrases


def _default_asset_path(*parts: str) -> Path:
    return Path(str(resources.files("chacha.assets").joinpath(*parts)))


# Turns of trailing context given to the safety confirmation model.
_SAFETY_CONTEXT_TURNS = 6


class ConversationAnalyzer:
    """Stateless analyzer front-end over the analyzer model tier."""

    def __init__(
        self,
        gateway: LLMGateway,
        fewshot_dir: Optional[Union[str, Path]] = None,
        lexicon_path: Optional[Union[str, Path]] = None,
        alert: Optional[Callable[[str], None]] = None,
    ) -> None:
        self._gateway = gateway
        base = Path(fewshot_dir) if fewshot_dir else _default_asset_path("fewshot")
        self._fewshots = {
            phase: load_fewshot_examples(base / f"{phase.value}.json")
            for phase in Phase
            if phase is not Phase.HELP
        }
        lex = Path(lexicon_path) if lexicon_path else _default_asset_path("safety_lexicon.txt")
        self._lexicon = load_safety_lexicon(lex)
        self._alert = alert or (lambda message: logger.error("%s", message))

    # -- summary extraction ------------------------------------------------

    def analyze(
        self, phase: Phase, history: list[Turn], catalog: EmotionCatalog
    ) -> PhaseSummary:
        """Extract the phase summary for ``phase`` from the full history."""
        if phase is Phase.HELP:
            raise ContractError("the help phase has no analyzer")
        if phase not in self._fewshots:
            raise ContractError(f"unknown phase: {phase!r}")
        if not history:
            raise ContractError("analyze requires a non-empty history")

        messages = (
            Message("system", self._system_prompt(phase, catalog)),
            Message(
                "user",
                "Dialogue so far:\n"
                + render_history(history)
                + "\n\n"
                + _EXTRACT_DIRECTIVE,
            ),
        )
        payload = self._complete_json(messages)
        return self._coerce_summary(phase, payload, history, catalog)

    def _system_prompt(self, phase: Phase, catalog: EmotionCatalog) -> str:
        guidance = _PHASE_GUIDANCE[phase]
        if phase is Phase.LABEL:
            guidance += (
                " Use the app's emotion vocabulary where it fits: "
                + ", ".join(catalog.ids())
                + "."
            )
        blocks = [
            "You are the conversation analyzer for CHACHA, a chatbot that "
            "talks with children. Read the dialogue between ChaCha and the "
            "child and extract the conversation status.",
            guidance,
            _FINAL_LINE_INSTRUCTION + _SCHEMA_LINES[phase],
        ]
        for i, example in enumerate(self._fewshots[phase], start=1):
            blocks.append(
                f"[Example {i}]\nDialogue:\n{example.history_excerpt}\n"
                "Analysis:\n"
                + json.dumps(example.expected_summary, ensure_ascii=False)
            )
        return "\n\n".join(blocks)

    def _complete_json(self, messages: tuple[Message, ...]) -> dict:
        """One analyzer call with a single reformat retry on parse failure."""
        result = self._gateway.complete(
            Tier.ANALYZER, CompletionRequest(messages=messages)
        )
        payload = extract_final_json(result.content)
        if payload is not None:
            return payload
        retry_messages = messages + (
            Message("assistant", result.content),
            Message("user", _REFORMAT_INSTRUCTION),
        )
        retry = self._gateway.complete(
            Tier.ANALYZER, CompletionRequest(messages=retry_messages)
        )
        payload = extract_final_json(retry.content)
        if payload is not None:
            return payload
        raise AnalyzerError(
            "analyzer output stayed unparseable after the reformat retry",
            raw_output=retry.content,
        )

    def _coerce_summary(
        self,
        phase: Phase,
        payload: dict,
        history: list[Turn],
        catalog: EmotionCatalog,
    ) -> PhaseSummary:
        if phase is Phase.EXPLORE:
            description = payload.get("key_event_description")
            return ExploreSummary(
                key_event_shared=_as_bool(payload.get("key_event_shared")),
                key_event_description=(
                    str(description) if isinstance(description, str) and description else None
                ),
            )
        if phase is Phase.LABEL:
            return self._coerce_label(payload, history, catalog)
        if phase is Phase.FIND:
            return FindSummary(
                others_involved=_as_bool(payload.get("others_involved")),
                others_feelings_discussed=_as_bool(
                    payload.get("others_feelings_discussed")
                ),
                solutions=_as_str_list(payload.get("solutions")),
                solutions_explored=_as_bool(payload.get("solutions_explored")),
            )
        if phase is Phase.RECORD:
            return RecordSummary(
                keeps_diary_asked=_as_bool(payload.get("keeps_diary_asked")),
                benefits_explained=_as_bool(payload.get("benefits_explained")),
                sample_diary_offered=_as_bool(payload.get("sample_diary_offered")),
                diary_discussed=_as_bool(payload.get("diary_discussed")),
            )
        return ShareSummary(
            already_shared_with_parents=_as_optional_bool(
                payload.get("already_shared_with_parents")
            ),
            sharing_encouraged_or_praised=_as_bool(
                payload.get("sharing_encouraged_or_praised")
            ),
            new_event_requested=_as_bool(payload.get("new_event_requested")),
            user_done=_as_bool(payload.get("user_done")),
        )

    def _coerce_label(
        self, payload: dict, history: list[Turn], catalog: EmotionCatalog
    ) -> LabelSummary:
        items: list[EmotionItem] = []
        seen: set[str] = set()
        raw_emotions = payload.get("emotions")
        if isinstance(raw_emotions, list):
            for raw in raw_emotions:
                if not isinstance(raw, dict):
                    continue
                name = str(raw.get("name") or raw.get("id_or_free_text") or "").strip()
                if not name:
                    continue
                key = resolve_emotion_key(name, catalog)
                if key in seen:
                    continue
                seen.add(key)
                contextual = _as_optional_bool(raw.get("is_negative"))
                items.append(
                    EmotionItem(
                        id_or_free_text=key,
                        from_picker=False,
                        acknowledged=_as_bool(raw.get("acknowledged")),
                        is_negative=self.classify_valence(
                            key, catalog, history, contextual=contextual
                        ),
                    )
                )
        summary = LabelSummary(
            emotions=tuple(items),
            user_struggling_to_describe=_as_bool(
                payload.get("user_struggling_to_describe")
            ),
        )
        picked = self._collect_picked(history, catalog)
        if picked:
            summary = merge_picked_emotions(summary, picked)
        return summary

    def _collect_picked(
        self, history: list[Turn], catalog: EmotionCatalog
    ) -> dict[str, bool]:
        """Picker submissions of the current Label visit, in pick order.

        Only the contiguous Label-phase tail counts: earlier visits (before
        a Share loop) already consumed their picks.
        """
        tail: list[Turn] = []
        for turn in reversed(history):
            if turn.phase is not Phase.LABEL:
                break
            tail.append(turn)
        picked: dict[str, bool] = {}
        for turn in reversed(tail):
            if turn.role is not Role.USER:
                continue
            for emotion_id in turn.picked_emotion_ids:
                if emotion_id in picked or emotion_id not in catalog:
                    continue
                picked[emotion_id] = self.classify_valence(
                    emotion_id, catalog, history, contextual=None
                )
        return picked

    # -- valence -----------------------------------------------------------

    def classify_valence(
        self,
        id_or_free_text: str,
        catalog: EmotionCatalog,
        context: list[Turn],
        contextual: Optional[bool] = None,
    ) -> bool:
        """Is this emotion negative here? Contextual judgment wins, then the
        catalog default, then a binary model query; unresolvable cases count
        as negative so the conversation probes further rather than less."""
        if contextual is not None:
            return contextual
        if id_or_free_text in catalog:
            valence = catalog.get(id_or_free_text).default_valence
            if valence is not Valence.AMBIGUOUS:
                return valence is Valence.NEGATIVE
        try:
            messages = (
                Message(
                    "system",
                    "You judge whether an emotion is felt as negative in a "
                    "dialogue. End your reply with a single line containing "
                    'only {"is_negative": true} or {"is_negative": false}.',
                ),
                Message(
                    "user",
                    "Dialogue:\n"
                    + render_history(context)
                    + f"\n\nIn this dialogue, is the emotion "
                    f"'{id_or_free_text}' felt as a negative emotion? Write "
                    "the final JSON object on the last line.",
                ),
            )
            result = self._gateway.complete(
                Tier.ANALYZER, CompletionRequest(messages=messages)
            )
            payload = extract_final_json(result.content)
            if payload is not None and isinstance(payload.get("is_negative"), bool):
                return payload["is_negative"]
        except ChaChaError:
            pass
        return True

    # -- safety ------------------------------------------------------------

    def safety_screen(self, user_turn: Turn, history: list[Turn]) -> SafetyFlag:
        """Screen one user turn for self-harm or suicide indications.

        Cheap lexicon prefilter first; only a hit invokes the model for
        confirmation. A backend failure never blocks the turn: the outcome
        is unflagged plus an operational alert for a human to review.
        """
        if user_turn.role is not Role.USER:
            raise ContractError("safety_screen takes a user turn")
        content = user_turn.content
        if not content:
            return SafetyFlag(flagged=False)
        hit = self._lexicon_hit(content)
        if hit is None:
            return SafetyFlag(flagged=False)

        context = history[-_SAFETY_CONTEXT_TURNS:]
        messages = (
            Message(
                "system",
                "You are the safety monitor for CHACHA, a chatbot that talks "
                "with children. Decide whether the child's message indicates "
                "self-harm or suicide risk. Categories: self_harm, suicide, "
                "none. The evidence must be copied verbatim from the child's "
                "message. End your reply with a single line containing only "
                'a JSON object of this shape: {"flagged": true|false, '
                '"category": "self_harm"|"suicide"|"none", "evidence": "..."}',
            ),
            Message(
                "user",
                "Child's message:\n"
                + content
                + "\n\nRecent dialogue for context:\n"
                + render_history(list(context))
                + "\n\nWrite the final JSON object on the last line.",
            ),
        )
        try:
            payload = self._complete_json(messages)
        except ChaChaError as exc:
            self._alert(
                "safety screen backend failure; turn passed unflagged for "
                f"operator review: {exc}"
            )
            return SafetyFlag(flagged=False)

        flagged = _as_bool(payload.get("flagged"))
        if not flagged:
            return SafetyFlag(flagged=False)
        try:
            category = SafetyCategory(str(payload.get("category")))
        except ValueError:
            category = SafetyCategory.SELF_HARM
        evidence = payload.get("evidence")
        if not isinstance(evidence, str) or evidence not in content:
            evidence = hit
        return SafetyFlag(flagged=True, category=category, evidence=evidence)

    def _lexicon_hit(self, content: str) -> Optional[str]:
        """Verbatim span of the first lexicon phrase found, or None."""
        lowered = content.lower()
        for phrase in self._lexicon:
            index = lowered.find(phrase.lower())
            if index >= 0:
                return content[index : index + len(phrase)]
        return None


def resolve_emotion_key(name: str, catalog: EmotionCatalog) -> str:
    """Map a model-reported emotion name to a catalog id when possible.

    Matches ids and any locale's label, case-insensitively; unmatched names
    stay as free text.
    """
    trimmed = name.strip()
    lowered = trimmed.lower()
    for entry in catalog.entries:
        if entry.id == lowered:
            return entry.id
        for label in entry.labels.values():
            if label.lower() == lowered:
                return entry.id
    return trimmed
