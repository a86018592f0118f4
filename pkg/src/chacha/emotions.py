"""Curated emotion catalog backing the Label-phase picker and valence defaults.

The catalog is a plain JSON data file so deployments can substitute their own
emotion list without code changes. The bundled default ships twenty entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import regex

from .errors import NotFoundError, ParseError, ValidationError

DEFAULT_CATALOG_SIZE = 20

# Grapheme clusters that render as emoji: pictographic symbols, optionally
# joined (ZWJ sequences, modifiers, variation selectors) into one cluster.
_EMOJI_GRAPHEME = regex.compile(r"\p{Extended_Pictographic}\X*|\p{Regional_Indicator}{2}")


class Valence(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    AMBIGUOUS = "ambiguous"


def _is_single_emoji(text: str) -> bool:
    """True if ``text`` is exactly one emoji grapheme cluster."""
    clusters = regex.findall(r"\X", text)
    return len(clusters) == 1 and _EMOJI_GRAPHEME.fullmatch(text) is not None


@dataclass(frozen=True)
class EmotionEntry:
    """One catalog row: stable id, per-locale labels, emoji, default valence."""

    id: str
    emoji: str
    default_valence: Valence
    labels: dict[str, str]

    def label(self, locale: str) -> str:
        try:
            return self.labels[locale]
        except KeyError:
            raise NotFoundError(f"emotion '{self.id}' has no label for locale '{locale}'")


@dataclass(frozen=True)
class EmotionCatalog:
    """Ordered, immutable emotion list; safe to share across threads."""

    entries: tuple[EmotionEntry, ...]
    locales: tuple[str, ...]
    is_default: bool = field(default=False, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, emotion_id: str) -> bool:
        return any(e.id == emotion_id for e in self.entries)

    def get(self, emotion_id: str) -> EmotionEntry:
        for entry in self.entries:
            if entry.id == emotion_id:
                return entry
        raise NotFoundError(f"unknown emotion id: '{emotion_id}'")

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def serialize(self) -> str:
        """Canonical JSON rendering; load/serialize round-trips byte-equal."""
        doc = {
            "locales": list(self.locales),
            "entries": [
                {
                    "id": e.id,
                    "emoji": e.emoji,
                    "default_valence": e.default_valence.value,
                    "labels": {loc: e.labels[loc] for loc in self.locales},
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def _validate_entry(raw: object, position: int, locales: tuple[str, ...]) -> EmotionEntry:
    if not isinstance(raw, dict):
        raise ParseError(f"catalog entry #{position} is not an object")
    ident = raw.get("id")
    label_for_error = ident if isinstance(ident, str) and ident else f"#{position}"
    if not isinstance(ident, str) or not ident.strip():
        raise ValidationError(f"catalog entry {label_for_error}: id must be a non-empty string")
    emoji = raw.get("emoji")
    if not isinstance(emoji, str) or not _is_single_emoji(emoji):
        raise ValidationError(
            f"catalog entry '{ident}': emoji must be exactly one emoji grapheme"
        )
    try:
        valence = Valence(raw.get("default_valence"))
    except ValueError:
        raise ValidationError(
            f"catalog entry '{ident}': default_valence must be one of "
            f"{[v.value for v in Valence]}, got {raw.get('default_valence')!r}"
        )
    labels = raw.get("labels")
    if not isinstance(labels, dict):
        raise ParseError(f"catalog entry '{ident}': labels must be an object")
    for locale in locales:
        if not isinstance(labels.get(locale), str) or not labels[locale]:
            raise ValidationError(
                f"catalog entry '{ident}': missing label for declared locale '{locale}'"
            )
    return EmotionEntry(id=ident, emoji=emoji, default_valence=valence, labels=dict(labels))


def load_catalog(source: str | Path, *, is_default: bool = False) -> EmotionCatalog:
    """Parse and validate a catalog document (JSON text or a file path).

    Raises ParseError for malformed documents (naming the offending entry)
    and ValidationError for duplicate ids or invariant violations.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("catalog document must be a JSON object")
    raw_locales = doc.get("locales")
    if not isinstance(raw_locales, list) or not all(isinstance(x, str) for x in raw_locales):
        raise ParseError("catalog 'locales' must be an array of locale tags")
    locales = tuple(raw_locales)
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        raise ParseError("catalog 'entries' must be an array")

    entries: list[EmotionEntry] = []
    seen: set[str] = set()
    for position, raw in enumerate(raw_entries):
        entry = _validate_entry(raw, position, locales)
        if entry.id in seen:
            raise ValidationError(f"duplicate emotion id: '{entry.id}'")
        seen.add(entry.id)
        entries.append(entry)

    if is_default and len(entries) != DEFAULT_CATALOG_SIZE:
        raise ValidationError(
            f"default catalog must contain exactly {DEFAULT_CATALOG_SIZE} entries, "
            f"got {len(entries)}"
        )
    return EmotionCatalog(entries=tuple(entries), locales=locales, is_default=is_default)


def load_default_catalog() -> EmotionCatalog:
    """Load the bundled twenty-emotion catalog."""
    text = resources.files("chacha.assets").joinpath("emotions.json").read_text("utf-8")
    return load_catalog(text, is_default=True)


def default_valence(catalog: EmotionCatalog, emotion_id: str) -> Valence:
    """Fallback polarity for an emotion when the analyzer supplies none."""
    return catalog.get(emotion_id).default_valence
