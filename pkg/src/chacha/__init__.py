"""Phase-driven dialogue engine and chat service for guided
child-emotion conversations."""

from .emotions import EmotionCatalog, EmotionEntry, Valence, load_default_catalog
from .engine import DialogueEngine
from .errors import (
    AnalyzerError,
    BudgetError,
    BusyError,
    ChaChaError,
    ConfigurationError,
    ContentPolicyError,
    ContractError,
    InvalidStateError,
    NotFoundError,
    ParseError,
    UpstreamError,
    ValidationError,
)
from .model import ALLOWED_EDGES, Phase, Role, Session, SessionStatus, Turn
from .summaries import (
    ExploreSummary,
    FindSummary,
    LabelSummary,
    PhaseSummary,
    RecordSummary,
    ShareSummary,
    empty_summary,
)
from .transitions import evaluate_transition

__version__ = "0.1.0"

__all__ = [
    "ALLOWED_EDGES",
    "AnalyzerError",
    "BudgetError",
    "BusyError",
    "ChaChaError",
    "ConfigurationError",
    "ContentPolicyError",
    "ContractError",
    "DialogueEngine",
    "EmotionCatalog",
    "EmotionEntry",
    "ExploreSummary",
    "FindSummary",
    "InvalidStateError",
    "LabelSummary",
    "NotFoundError",
    "ParseError",
    "Phase",
    "PhaseSummary",
    "RecordSummary",
    "Role",
    "Session",
    "SessionStatus",
    "ShareSummary",
    "Turn",
    "UpstreamError",
    "ValidationError",
    "Valence",
    "empty_summary",
    "evaluate_transition",
    "load_default_catalog",
    "__version__",
]
