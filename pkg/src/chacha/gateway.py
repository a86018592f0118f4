"""Two-tier LLM gateway: generation and analysis behind one chokepoint.

Every model call in the system flows through :class:`LLMGateway`, which
enforces the token budget before any network traffic, retries transient
failures with exponential backoff, and records a trace entry per call so
tests can assert tier isolation (analyzer traffic never touches the
generator model and vice versa).

Backends are pluggable. ``HttpChatBackend`` speaks an OpenAI-style chat
API over httpx; ``ScriptedBackend`` replays a deterministic scenario for
tests and offline development; ``RecordingBackend`` wraps a live backend
and captures its traffic as a replayable scenario.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

import httpx

from .errors import (
    BudgetError,
    ConfigurationError,
    ContentPolicyError,
    ParseError,
    ScriptedMissError,
    UpstreamError,
    ValidationError,
)
from .tokens import estimate_request_tokens, estimate_tokens


class Tier(str, Enum):
    """Which class of model a call is routed to."""

    GENERATOR = "generator"
    ANALYZER = "analyzer"


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    _ROLES = ("system", "user", "assistant")

    def __post_init__(self) -> None:
        if self.role not in self._ROLES:
            raise ValidationError(f"unknown message role: {self.role!r}")


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[Message, ...]
    temperature: Optional[float] = None
    max_output_tokens: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValidationError("completion request needs at least one message")

    @property
    def last_content(self) -> str:
        return self.messages[-1].content


@dataclass(frozen=True)
class CompletionResult:
    content: str
    finish_reason: str
    usage: Usage


@dataclass(frozen=True)
class BackendConfig:
    """Static configuration for one tier's backend."""

    tier: Tier
    model_id: str
    endpoint: str = ""
    api_key_ref: str = "CHACHA_API_KEY"
    provider_profile: str = "openai_chat"
    temperature: float = 0.7
    max_output_tokens: int = 1024
    context_limit_tokens: int = 8192
    request_timeout_seconds: float = 30.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ConfigurationError("model_id must be set")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigurationError(
                f"temperature {self.temperature} outside [0, 2]"
            )
        if self.max_output_tokens <= 0:
            raise ConfigurationError("max_output_tokens must be positive")
        if self.context_limit_tokens <= self.max_output_tokens:
            raise ConfigurationError(
                "context_limit_tokens must exceed max_output_tokens "
                f"({self.context_limit_tokens} <= {self.max_output_tokens})"
            )
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")


class TransientBackendError(Exception):
    """Internal marker: the attempt failed in a way retry might fix."""


class Backend(Protocol):
    def complete(
        self, config: BackendConfig, request: CompletionRequest
    ) -> CompletionResult: ...


def resolve_secret(ref: str) -> str:
    """Resolve a secret by environment-variable name.

    Secrets never live in config files; the config carries only the name.
    """
    value = os.environ.get(ref, "")
    if not value:
        raise ConfigurationError(f"secret {ref!r} is not set in the environment")
    return value


# Markers upstream providers use for refused-content responses. A refusal
# must never be retried, so classification errs toward content_policy.
_CONTENT_POLICY_MARKERS = ("content_policy", "content policy", "content_filter")


class HttpChatBackend:
    """OpenAI-style chat-completions backend over HTTP."""

    def __init__(self, client: Optional[httpx.Client] = None) -> None:
        self._client = client or httpx.Client()

    def complete(
        self, config: BackendConfig, request: CompletionRequest
    ) -> CompletionResult:
        if config.provider_profile != "openai_chat":
            raise ConfigurationError(
                f"unknown provider profile: {config.provider_profile!r}"
            )
        if not config.endpoint:
            raise ConfigurationError("endpoint must be set for HTTP backends")
        key = resolve_secret(config.api_key_ref)
        body = {
            "model": config.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": (
                request.temperature
                if request.temperature is not None
                else config.temperature
            ),
            "max_tokens": (
                request.max_output_tokens
                if request.max_output_tokens is not None
                else config.max_output_tokens
            ),
        }
        try:
            response = self._client.post(
                config.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {key}"},
                timeout=config.request_timeout_seconds,
            )
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc

        if response.status_code in (401, 403):
            raise ConfigurationError(
                f"authentication rejected by upstream ({response.status_code})"
            )
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(
                f"upstream returned {response.status_code}"
            )
        if response.status_code >= 400:
            text = response.text[:500]
            lowered = text.lower()
            if any(marker in lowered for marker in _CONTENT_POLICY_MARKERS):
                raise ContentPolicyError(f"upstream refused the request: {text}")
            raise TransientBackendError(
                f"upstream returned {response.status_code}: {text}"
            )

        try:
            payload = response.json()
            choice = payload["choices"][0]
            content = choice["message"]["content"]
            finish = choice.get("finish_reason", "stop")
            usage_raw = payload.get("usage", {})
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientBackendError(
                f"malformed upstream response: {exc}"
            ) from exc
        if finish == "content_filter":
            raise ContentPolicyError("upstream filtered the completion")
        usage = Usage(
            input_tokens=int(usage_raw.get("prompt_tokens", 0)),
            output_tokens=int(usage_raw.get("completion_tokens", 0)),
        )
        finish_reason = "length" if finish == "length" else "normal"
        return CompletionResult(content=content, finish_reason=finish_reason, usage=usage)


@dataclass
class ScenarioStep:
    """One scripted exchange: match the incoming call, return the response."""

    tier: Tier
    match_kind: str  # "substring" or "regex"
    pattern: str
    response: str
    usage: Optional[Usage] = None
    consumed: bool = field(default=False, compare=False)

    def matches(self, tier: Tier, last_content: str) -> bool:
        if self.tier != tier:
            return False
        if self.match_kind == "substring":
            return self.pattern in last_content
        return re.search(self.pattern, last_content, re.DOTALL) is not None


def _parse_step(raw: dict, index: int) -> ScenarioStep:
    try:
        tier = Tier(raw["tier"])
        match = raw["match"]
        kind = match.get("kind", "substring")
        if kind not in ("substring", "regex"):
            raise ParseError(f"step {index + 1}: unknown match kind {kind!r}")
        pattern = match["pattern"]
        response = raw["response"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"scenario step {index + 1} is malformed: {exc}") from exc
    if kind == "regex":
        try:
            re.compile(pattern)
        except re.error as exc:
            raise ParseError(
                f"step {index + 1}: bad regex {pattern!r}: {exc}"
            ) from exc
    usage = None
    if "usage" in raw and raw["usage"] is not None:
        u = raw["usage"]
        try:
            usage = Usage(int(u["input_tokens"]), int(u["output_tokens"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"step {index + 1}: bad usage block: {exc}") from exc
    return ScenarioStep(
        tier=tier, match_kind=kind, pattern=pattern, response=response, usage=usage
    )


def load_scenario(source: Union[str, Path]) -> list[ScenarioStep]:
    """Load an ordered scenario from a JSON file or a JSON string."""
    text: str
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif source.lstrip().startswith(("[", "{")):
        text = source
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    if isinstance(raw, dict):
        raw = raw.get("steps", None)
    if not isinstance(raw, list):
        raise ParseError("scenario must be a JSON array of steps")
    return [_parse_step(item, i) for i, item in enumerate(raw)]


class ScriptedBackend:
    """Deterministic backend replaying an ordered, single-use scenario.

    Each incoming call is matched against the earliest unconsumed step of
    the same tier whose pattern matches the last message. A matched step
    is consumed and never reused. A miss raises an error naming the
    closest remaining step so scenario drift is easy to diagnose.
    """

    def __init__(self, steps: list[ScenarioStep]) -> None:
        self._steps = steps
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        with self._lock:
            return sum(1 for s in self._steps if not s.consumed)

    def complete(
        self, config: BackendConfig, request: CompletionRequest
    ) -> CompletionResult:
        last = request.last_content
        with self._lock:
            for step in self._steps:
                if step.consumed:
                    continue
                if step.matches(config.tier, last):
                    step.consumed = True
                    usage = step.usage or Usage(
                        input_tokens=sum(
                            estimate_tokens(m.content) for m in request.messages
                        ),
                        output_tokens=estimate_tokens(step.response),
                    )
                    return CompletionResult(
                        content=step.response, finish_reason="normal", usage=usage
                    )
            raise ScriptedMissError(self._miss_message(config.tier, last))

    def _miss_message(self, tier: Tier, last: str) -> str:
        preview = last if len(last) <= 200 else last[:200] + "..."
        closest = None
        for i, step in enumerate(self._steps):
            if not step.consumed and step.tier == tier:
                closest = (i, step)
                break
        if closest is None:
            for i, step in enumerate(self._steps):
                if not step.consumed:
                    closest = (i, step)
                    break
        if closest is None:
            return (
                f"scenario exhausted: no steps remain for {tier.value} call "
                f"with last message {preview!r}"
            )
        i, step = closest
        return (
            f"no scenario step matched {tier.value} call with last message "
            f"{preview!r}; closest remaining is step {i + 1} "
            f"({step.tier.value}, {step.match_kind} {step.pattern!r})"
        )


def scripted_backend(scenario: Union[str, Path, list[ScenarioStep]]) -> ScriptedBackend:
    """Build a scripted backend from a scenario file, JSON string, or steps."""
    if isinstance(scenario, list):
        return ScriptedBackend(scenario)
    return ScriptedBackend(load_scenario(scenario))


# Captured patterns keep the tail of the message: prompts share long static
# headers, so the tail is what distinguishes one call from the next.
_CAPTURE_PATTERN_CHARS = 400


class RecordingBackend:
    """Wrap a backend and capture its traffic as a replayable scenario."""

    def __init__(self, inner: Backend) -> None:
        self._inner = inner
        self._captured: list[dict] = []
        self._lock = threading.Lock()

    def complete(
        self, config: BackendConfig, request: CompletionRequest
    ) -> CompletionResult:
        result = self._inner.complete(config, request)
        pattern = request.last_content[-_CAPTURE_PATTERN_CHARS:]
        with self._lock:
            self._captured.append(
                {
                    "tier": config.tier.value,
                    "match": {"kind": "substring", "pattern": pattern},
                    "response": result.content,
                    "usage": {
                        "input_tokens": result.usage.input_tokens,
                        "output_tokens": result.usage.output_tokens,
                    },
                }
            )
        return result

    def captured_steps(self) -> list[dict]:
        with self._lock:
            return [dict(step) for step in self._captured]

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps({"steps": self.captured_steps()}, ensure_ascii=False, indent=2)
            + "\n",
            encoding="utf-8",
        )


@dataclass(frozen=True)
class TraceEntry:
    """One completed (or failed) gateway call, for audits and tests."""

    tier: Tier
    model_id: str
    attempts: int
    outcome: str  # "ok", "budget", "content_policy", "exhausted", "config"
    usage: Optional[Usage] = None


BACKOFF_BASE_SECONDS = 0.5
BACKOFF_CAP_SECONDS = 8.0


class LLMGateway:
    """Single chokepoint for all model traffic, one backend per tier."""

    def __init__(
        self,
        configs: dict[Tier, BackendConfig],
        backends: dict[Tier, Backend],
        max_concurrent: int = 8,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        for tier in Tier:
            if tier not in configs:
                raise ConfigurationError(f"missing config for tier {tier.value}")
            if tier not in backends:
                raise ConfigurationError(f"missing backend for tier {tier.value}")
            if configs[tier].tier != tier:
                raise ConfigurationError(
                    f"config registered under {tier.value} is for "
                    f"{configs[tier].tier.value}"
                )
        if max_concurrent < 1:
            raise ConfigurationError("max_concurrent must be >= 1")
        self._configs = configs
        self._backends = backends
        self._semaphore = threading.BoundedSemaphore(max_concurrent)
        self._sleeper = sleeper
        self._traces: list[TraceEntry] = []
        self._trace_lock = threading.Lock()

    def config_for(self, tier: Tier) -> BackendConfig:
        return self._configs[tier]

    def backend_for(self, tier: Tier) -> Backend:
        return self._backends[tier]

    @property
    def traces(self) -> list[TraceEntry]:
        with self._trace_lock:
            return list(self._traces)

    def _record(self, entry: TraceEntry) -> None:
        with self._trace_lock:
            self._traces.append(entry)

    def complete(self, tier: Tier, request: CompletionRequest) -> CompletionResult:
        config = self._configs[tier]
        max_output = (
            request.max_output_tokens
            if request.max_output_tokens is not None
            else config.max_output_tokens
        )
        estimated = estimate_request_tokens(
            [m.content for m in request.messages], config.model_id
        )
        budget = config.context_limit_tokens - max_output
        if estimated > budget:
            self._record(TraceEntry(tier, config.model_id, 0, "budget"))
            raise BudgetError(
                f"estimated {estimated} input tokens exceeds budget {budget} "
                f"({config.context_limit_tokens} limit - {max_output} reserved "
                f"for output)"
            )

        backend = self._backends[tier]
        failures: list[str] = []
        with self._semaphore:
            for attempt in range(config.max_retries + 1):
                if attempt > 0:
                    delay = min(
                        BACKOFF_BASE_SECONDS * (2 ** (attempt - 1)),
                        BACKOFF_CAP_SECONDS,
                    )
                    self._sleeper(delay)
                try:
                    result = backend.complete(config, request)
                except TransientBackendError as exc:
                    failures.append(f"attempt {attempt + 1}: {exc}")
                    continue
                except ContentPolicyError:
                    self._record(
                        TraceEntry(tier, config.model_id, attempt + 1, "content_policy")
                    )
                    raise
                except ConfigurationError:
                    self._record(
                        TraceEntry(tier, config.model_id, attempt + 1, "config")
                    )
                    raise
                self._record(
                    TraceEntry(tier, config.model_id, attempt + 1, "ok", result.usage)
                )
                return result
        self._record(
            TraceEntry(tier, config.model_id, config.max_retries + 1, "exhausted")
        )
        raise UpstreamError(
            f"{tier.value} backend failed after {config.max_retries + 1} attempts",
            attempts=failures,
        )
