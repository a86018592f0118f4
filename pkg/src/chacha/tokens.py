"""Token-count estimation for context-window budgeting.

The default estimator is a character-class heuristic tuned as a safe upper
bound: CJK syllables cost far more tokens than English words on common BPE
vocabularies, which is exactly the asymmetry that makes budget gating
necessary for Korean dialogue. Deployments can register an exact tokenizer
per model id; the heuristic is the fallback.
"""

from __future__ import annotations

import math
import re
from typing import Callable

# Precomposed Hangul syllables, CJK ideographs, kana: heavy tokenization.
_CJK_RE = re.compile(
    "[가-힣ᄀ-ᇿ㄰-㆏一-鿿぀-ヿ]"
)
_ASCII_WORD_RE = re.compile(r"[A-Za-z0-9]+(?:'[A-Za-z0-9]+)*")

CJK_TOKENS_PER_CHAR = 2.5
TOKENS_PER_ASCII_WORD = 1.3
TOKENS_PER_OTHER_CHAR = 1.0


def heuristic_estimate(text: str) -> int:
    """Deterministic upper-bound token estimate, monotone in text length."""
    if not text:
        return 0
    cjk = len(_CJK_RE.findall(text))
    words = len(_ASCII_WORD_RE.findall(text))
    covered = cjk + sum(len(m) for m in _ASCII_WORD_RE.findall(text))
    other = sum(1 for ch in text if not ch.isspace()) - covered
    estimate = (
        CJK_TOKENS_PER_CHAR * cjk
        + TOKENS_PER_ASCII_WORD * words
        + TOKENS_PER_OTHER_CHAR * max(other, 0)
    )
    return math.ceil(estimate)


_registry: dict[str, Callable[[str], int]] = {}


def register_tokenizer(model_id: str, fn: Callable[[str], int]) -> None:
    """Plug in an exact tokenizer for a model id."""
    _registry[model_id] = fn


def unregister_tokenizer(model_id: str) -> None:
    _registry.pop(model_id, None)


def estimate_tokens(text: str, model_id: str = "") -> int:
    """Estimate the token count of ``text`` for ``model_id``.

    Uses a registered exact tokenizer when one exists, the heuristic
    otherwise. Always deterministic; empty text is 0 tokens.
    """
    fn = _registry.get(model_id)
    if fn is not None:
        return fn(text)
    return heuristic_estimate(text)


# Flat per-message overhead for chat-format framing tokens.
MESSAGE_OVERHEAD_TOKENS = 4


def estimate_request_tokens(contents: list[str], model_id: str = "") -> int:
    """Estimate tokens for a whole chat request (messages plus framing)."""
    return sum(estimate_tokens(c, model_id) for c in contents) + MESSAGE_OVERHEAD_TOKENS * len(
        contents
    )
