"""Shared fixtures: scripted engines, canned backends, corpus builder."""

from __future__ import annotations

import json
import threading
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import pytest

from chacha.analyzers import ConversationAnalyzer
from chacha.composer import AssetStore, PromptComposer
from chacha.emotions import EmotionCatalog, load_default_catalog
from chacha.engine import DialogueEngine
from chacha.gateway import (
    BackendConfig,
    CompletionRequest,
    CompletionResult,
    LLMGateway,
    ScriptedBackend,
    Tier,
    Usage,
    load_scenario,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "src/chacha/assets/scenarios"
DATA_DIR = Path(__file__).resolve().parent / "data"

# Child-side inputs that walk the bundled scenarios; the scenario files hold
# only the backend steps, so the driving lines live here beside the tests.
POSITIVE_CHILD_MESSAGES = [
    ("어제 가족이랑 놀이공원에 가서 롤러코스터를 탔어!", None),
    ("정말 신나고 기분이 좋았어!", None),
    ("맞아! 타고 나니까 정말 뿌듯했어", None),
    ("응, 내가 용감해진 것 같아서 기분이 최고였어", None),
    ("아니, 일기는 안 써", None),
    ("오, 좋아! 오늘 밤에 써 볼게", None),
    ("아직 안 했는데 저녁에 말할래", None),
    ("아니, 오늘은 이만 할래. 고마워!", None),
]
POSITIVE_EXPECTED_PHASES = [
    "label", "label", "label", "record", "record", "share", "share", "share",
]

NEGATIVE_CHILD_MESSAGES = [
    ("오늘 체육 시간에 달리기하다가 넘어져서 친구들이 웃었어", None),
    ("너무 창피하고 속상했어", None),
    ("응 그게 다야. 그냥 속상했어", None),
    ("다음엔 운동화 끈을 잘 묶고 천천히 달릴 거야", None),
    ("아마 장난이었을 거야. 다음엔 그 방법대로 해 볼래", None),
    ("응 엄마한테 벌써 말했어", None),
    ("괜찮다고 안아 주셨어. 아 맞다, 다른 얘기도 하고 싶어!", None),
    ("지난 주말에 할머니 댁에서 강아지랑 놀았어", None),
    ("음... 잘 모르겠어. 그냥 좋았어?", None),
    ("", ["joy", "comfort"]),
    ("공 던지기! 강아지가 물어 오는 게 제일 재밌었어", None),
    ("가끔 써! 오늘 거 쓸래. 어떻게 쓰면 돼?", None),
    ("완전 좋아, 그렇게 쓸게!", None),
    ("응! 이제 가 볼게, 안녕!", None),
]
NEGATIVE_EXPECTED_PHASES = [
    "label", "label", "find", "find", "share", "share", "explore",
    "label", "label", "label", "record", "record", "share", "share",
]


@pytest.fixture(scope="session")
def catalog() -> EmotionCatalog:
    return load_default_catalog()


@pytest.fixture(scope="session")
def assets() -> AssetStore:
    return AssetStore.default()


class CannedBackend:
    """Always-on backend: one fixed reply per tier, plus test hooks.

    `gate` (when set) blocks the first call of a round until released,
    which lets concurrency tests hold a session busy deterministically.
    """

    def __init__(
        self,
        analyzer_reply: str = (
            "No key episode yet.\n"
            '{"key_event_shared": false, "key_event_description": null}'
        ),
        generator_reply: str = "그렇구나! 더 이야기해 줄래?",
    ) -> None:
        self.analyzer_reply = analyzer_reply
        self.generator_reply = generator_reply
        self.gate: Optional[threading.Event] = None
        self.calls: list[tuple[Tier, str]] = []
        self._lock = threading.Lock()

    def complete(self, config, request: CompletionRequest) -> CompletionResult:
        gate = self.gate
        if gate is not None and not gate.wait(timeout=10):
            raise TimeoutError("gate never released")
        with self._lock:
            self.calls.append((config.tier, request.last_content))
        content = (
            self.analyzer_reply
            if config.tier is Tier.ANALYZER
            else self.generator_reply
        )
        return CompletionResult(
            content=content,
            finish_reason="normal",
            usage=Usage(input_tokens=10, output_tokens=5),
        )


class TierQueueBackend:
    """Per-tier reply queues; raises queued exceptions; records calls."""

    def __init__(self):
        self.queues = {Tier.GENERATOR: [], Tier.ANALYZER: []}
        self.calls = []

    def push(self, tier, *replies):
        self.queues[tier].extend(replies)
        return self

    def generator(self, *replies):
        return self.push(Tier.GENERATOR, *replies)

    def analyzer(self, *payloads):
        for payload in payloads:
            if isinstance(payload, (dict, list)):
                payload = "Thinking it through.\n" + json.dumps(
                    payload, ensure_ascii=False
                )
            self.queues[Tier.ANALYZER].append(payload)
        return self

    def complete(self, config, request: CompletionRequest) -> CompletionResult:
        self.calls.append((config.tier, request))
        queue = self.queues[config.tier]
        if not queue:
            raise AssertionError(f"unexpected {config.tier.value} call")
        reply = queue.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return CompletionResult(reply, "normal", Usage(10, 5))

    def calls_for(self, tier):
        return [request for t, request in self.calls if t is tier]


def make_engine(backend, locale_default: str = "ko", **gateway_kwargs):
    """Engine wired to one backend instance serving both tiers."""
    configs = {
        Tier.GENERATOR: BackendConfig(tier=Tier.GENERATOR, model_id="test-generator"),
        Tier.ANALYZER: BackendConfig(tier=Tier.ANALYZER, model_id="test-analyzer"),
    }
    gateway = LLMGateway(
        configs,
        {Tier.GENERATOR: backend, Tier.ANALYZER: backend},
        **gateway_kwargs,
    )
    catalog = load_default_catalog()
    composer = PromptComposer(AssetStore.default(), catalog)
    analyzer = ConversationAnalyzer(gateway)
    return DialogueEngine(gateway, catalog, composer, analyzer)


def scripted_engine(scenario_name: str):
    """Engine plus the scripted backend for one bundled scenario file."""
    steps = load_scenario(SCENARIO_DIR / f"{scenario_name}.json")
    backend = ScriptedBackend(steps)
    return make_engine(backend), backend


def drive(engine: DialogueEngine, session, messages):
    """Feed child messages through the engine, returning every result."""
    results = []
    for text, picks in messages:
        results.append(engine.handle_user_message(session, text, picks))
    return results


# -- synthetic analytics corpus -------------------------------------------

CORPUS_SESSION_LENGTHS = [27, 87] + [43] * 8 + [42] * 10
CORPUS_TOTAL_TURNS = 878
CORPUS_USER_TURNS = 434
CORPUS_SYSTEM_TURNS = 444

_PHASE_CYCLE = ["explore", "label", "find", "record", "share"]


def build_corpus(directory: Path) -> list[Path]:
    """Write the 20-session synthetic corpus as one JSONL file per session.

    Construction: sessions of 27, 87, 8x43, and 10x42 turns. Odd-length
    sessions are greeting + exchanges; the even ones end on an unanswered
    user turn. Totals: 878 turns, 434 user + 444 system, mean 43.9.
    """
    directory.mkdir(parents=True, exist_ok=True)
    base = datetime(2024, 3, 1, 10, 0, 0, tzinfo=timezone.utc)
    paths = []
    for i, length in enumerate(CORPUS_SESSION_LENGTHS, start=1):
        session_id = f"C{i:02d}"
        path = directory / f"{session_id}.jsonl"
        records = []
        timestamp = base + timedelta(days=i)
        for index in range(length):
            role = "system" if index % 2 == 0 else "user"
            content = (
                f"차차의 {index}번째 대답이야" if role == "system" else f"내 {index}번째 말이야"
            )
            records.append(
                {
                    "session_id": session_id,
                    "turn_index": index,
                    "role": role,
                    "content": content,
                    "phase": _PHASE_CYCLE[(index // 6) % len(_PHASE_CYCLE)],
                    "attachments": None,
                    "timestamp": timestamp.isoformat(),
                    "prompt_digest": "" if role == "user" else "d" * 8,
                    "usage": None,
                }
            )
            # System->user gaps of 30 s become the latency measure.
            timestamp += timedelta(seconds=30 if role == "system" else 15)
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        paths.append(path)
    return paths


# Labels registered by the @criterion decorator in test_acceptance.py,
# in declaration order.
ACCEPTANCE_LABELS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per release gate, immune to output capture."""
    if not ACCEPTANCE_LABELS:
        return
    verdicts: dict[str, bool] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, ()):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1]
            ok = status == "passed"
            verdicts[name] = verdicts.get(name, True) and ok
    if not verdicts:
        return
    terminalreporter.section("acceptance gates")
    for name, label in ACCEPTANCE_LABELS.items():
        if name in verdicts:
            word = "PASS" if verdicts[name] else "FAIL"
            terminalreporter.write_line(f"[{word}] {label}")
