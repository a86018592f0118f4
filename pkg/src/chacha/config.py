"""Service configuration: file parsing, env overrides, object wiring.

Config files are TOML or JSON, chosen by extension. Model ids can be
overridden per deployment through CHACHA_GENERATOR_MODEL and
CHACHA_ANALYZER_MODEL; the API key itself is never stored in config,
only the name of the env var that holds it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import tomli

from .analyzers import ConversationAnalyzer
from .composer import AssetStore, GenerationParams, PromptComposer
from .emotions import EmotionCatalog, load_catalog, load_default_catalog
from .engine import DialogueEngine
from .errors import ConfigurationError
from .gateway import (
    Backend,
    BackendConfig,
    HttpChatBackend,
    LLMGateway,
    ScriptedBackend,
    Tier,
    load_scenario,
)

GENERATOR_MODEL_ENV = "CHACHA_GENERATOR_MODEL"
ANALYZER_MODEL_ENV = "CHACHA_ANALYZER_MODEL"

_TIER_SECTIONS = {Tier.GENERATOR: "generator", Tier.ANALYZER: "analyzer"}


@dataclass
class AppConfig:
    generator: BackendConfig
    analyzer: BackendConfig
    max_concurrent: int = 8
    locale: str = "ko"
    data_dir: Path = Path("./data")
    prompts_dir: Optional[Path] = None
    fewshot_dir: Optional[Path] = None
    lexicon_path: Optional[Path] = None
    catalog_path: Optional[Path] = None
    scenario_path: Optional[Path] = None
    max_session_minutes: Optional[float] = None
    source_path: Optional[Path] = field(default=None, compare=False)


def _read_document(path: Path) -> dict:
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".toml":
        try:
            with open(path, "rb") as handle:
                doc = tomli.load(handle)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc
    elif suffix == ".json":
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    else:
        raise ConfigurationError(
            f"{path}: unsupported config format {suffix!r} (use .toml or .json)"
        )
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config root must be a table/object")
    return doc


def _tier_config(doc: dict, tier: Tier, origin: Path) -> BackendConfig:
    section_name = _TIER_SECTIONS[tier]
    gateway_doc = doc.get("gateway", {})
    if not isinstance(gateway_doc, dict):
        raise ConfigurationError(f"{origin}: [gateway] must be a table")
    section = gateway_doc.get(section_name)
    if section is None:
        raise ConfigurationError(f"{origin}: missing [gateway.{section_name}] section")
    if not isinstance(section, dict):
        raise ConfigurationError(f"{origin}: [gateway.{section_name}] must be a table")
    allowed = {
        "model_id",
        "endpoint",
        "api_key_ref",
        "provider_profile",
        "temperature",
        "max_output_tokens",
        "context_limit_tokens",
        "request_timeout_seconds",
        "max_retries",
    }
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(
            f"{origin}: unknown key(s) in [gateway.{section_name}]: "
            + ", ".join(sorted(unknown))
        )
    kwargs = dict(section)
    kwargs.setdefault("model_id", "")
    try:
        return BackendConfig(tier=tier, **kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{origin}: [gateway.{section_name}]: {exc}") from exc


def _optional_path(doc: dict, key: str, base: Path) -> Optional[Path]:
    value = doc.get(key)
    if value is None:
        return None
    if not isinstance(value, str) or not value:
        raise ConfigurationError(f"config key {key!r} must be a non-empty path string")
    path = Path(value)
    # Relative paths resolve against the config file, not the cwd.
    return path if path.is_absolute() else (base / path)


def load_config(path: Union[str, Path]) -> AppConfig:
    """Parse a config file and apply model-id env overrides."""
    path = Path(path)
    doc = _read_document(path)
    base = path.resolve().parent

    generator = _tier_config(doc, Tier.GENERATOR, path)
    analyzer = _tier_config(doc, Tier.ANALYZER, path)

    env_generator = os.environ.get(GENERATOR_MODEL_ENV)
    if env_generator:
        generator = BackendConfig(**{**generator.__dict__, "model_id": env_generator})
    env_analyzer = os.environ.get(ANALYZER_MODEL_ENV)
    if env_analyzer:
        analyzer = BackendConfig(**{**analyzer.__dict__, "model_id": env_analyzer})

    gateway_doc = doc.get("gateway", {})
    max_concurrent = gateway_doc.get("max_concurrent", 8)
    if not isinstance(max_concurrent, int) or max_concurrent < 1:
        raise ConfigurationError("gateway.max_concurrent must be a positive integer")

    service_doc = doc.get("service", {})
    if not isinstance(service_doc, dict):
        raise ConfigurationError(f"{path}: [service] must be a table")
    locale = service_doc.get("locale", "ko")
    if not isinstance(locale, str) or not locale:
        raise ConfigurationError("service.locale must be a non-empty string")
    data_dir = _optional_path(service_doc, "data_dir", base) or Path("./data")
    max_minutes = service_doc.get("max_session_minutes")
    if max_minutes is not None and (
        not isinstance(max_minutes, (int, float)) or max_minutes <= 0
    ):
        raise ConfigurationError("service.max_session_minutes must be positive")

    assets_doc = doc.get("assets", {})
    if not isinstance(assets_doc, dict):
        raise ConfigurationError(f"{path}: [assets] must be a table")

    return AppConfig(
        generator=generator,
        analyzer=analyzer,
        max_concurrent=max_concurrent,
        locale=locale,
        data_dir=data_dir,
        prompts_dir=_optional_path(assets_doc, "prompts_dir", base),
        fewshot_dir=_optional_path(assets_doc, "fewshot_dir", base),
        lexicon_path=_optional_path(assets_doc, "lexicon_path", base),
        catalog_path=_optional_path(assets_doc, "catalog_path", base),
        scenario_path=_optional_path(doc.get("scripted", {}), "scenario_path", base)
        if isinstance(doc.get("scripted", {}), dict)
        else None,
        max_session_minutes=float(max_minutes) if max_minutes is not None else None,
        source_path=path,
    )


def build_gateway(
    config: AppConfig, backends: Optional[dict[Tier, Backend]] = None
) -> LLMGateway:
    """Wire the gateway: explicit backends win, then scripted, then HTTP."""
    configs = {Tier.GENERATOR: config.generator, Tier.ANALYZER: config.analyzer}
    if backends is None:
        if config.scenario_path is not None:
            steps = load_scenario(config.scenario_path)
            shared = ScriptedBackend(steps)
            backends = {Tier.GENERATOR: shared, Tier.ANALYZER: shared}
        else:
            backends = {tier: HttpChatBackend() for tier in configs}
    return LLMGateway(configs, backends, max_concurrent=config.max_concurrent)


def build_catalog(config: AppConfig) -> EmotionCatalog:
    if config.catalog_path is not None:
        return load_catalog(config.catalog_path)
    return load_default_catalog()


def build_engine(
    config: AppConfig, backends: Optional[dict[Tier, Backend]] = None
) -> DialogueEngine:
    """Assemble a ready engine from config. The seam for tests is `backends`."""
    gateway = build_gateway(config, backends)
    catalog = build_catalog(config)
    assets = (
        AssetStore.from_directory(config.prompts_dir)
        if config.prompts_dir is not None
        else AssetStore.default()
    )
    composer = PromptComposer(
        assets,
        catalog,
        generation_params=GenerationParams(
            temperature=config.generator.temperature,
            max_output_tokens=config.generator.max_output_tokens,
        ),
        context_limit_tokens=config.generator.context_limit_tokens,
        model_id=config.generator.model_id,
    )
    analyzer = ConversationAnalyzer(
        gateway,
        fewshot_dir=config.fewshot_dir,
        lexicon_path=config.lexicon_path,
    )
    return DialogueEngine(gateway, catalog, composer, analyzer)
