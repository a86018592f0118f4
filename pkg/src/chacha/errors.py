"""Exception hierarchy shared across the engine, gateway, and service."""

from __future__ import annotations

from typing import Any


class ChaChaError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ChaChaError):
    """Input or data failed validation (bad name/age, duplicate catalog id, ...)."""


class ParseError(ChaChaError):
    """A document (catalog, scenario, config) could not be parsed."""


class NotFoundError(ChaChaError):
    """A referenced entity (emotion id, session id) does not exist."""


class InvalidStateError(ChaChaError):
    """Operation not valid in the session's current lifecycle state."""


class BusyError(ChaChaError):
    """A message for this session is already being processed."""


class ContractError(ChaChaError):
    """An internal API contract was violated by the caller."""


class ConfigurationError(ChaChaError):
    """Startup-time configuration problem (missing asset, bad credentials)."""


class AnalyzerError(ChaChaError):
    """Analyzer backend output stayed unparseable after the reformat retry."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class BudgetError(ChaChaError):
    """Request would exceed the configured context token limit."""


class UpstreamError(ChaChaError):
    """Backend call failed after exhausting the retry policy."""

    def __init__(self, message: str, attempts: list[Any] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


class ContentPolicyError(UpstreamError):
    """Backend rejected the request on content-policy grounds; never retried."""


class ScriptedMissError(UpstreamError):
    """No scenario step matched the request sent to the scripted backend."""
