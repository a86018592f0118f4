"""Prompt assembly: assets, bundles, dynamic status, history fitting."""

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from chacha.composer import (
    CONTEXT_HEADING,
    ONE_QUESTION_MARKER,
    RECAP_HEADING,
    STATUS_HEADING,
    AssetStore,
    GenerationParams,
    PromptComposer,
    parse_asset,
    render_emotion_list,
    render_picker_directive,
    render_turn_content,
)
from chacha.emotions import EmotionCatalog, EmotionEntry
from chacha.errors import ConfigurationError, ContractError, ParseError, ValidationError
from chacha.model import Attachments, Phase, Role, Session, Turn
from chacha.summaries import (
    EmotionItem,
    ExploreSummary,
    FindSummary,
    LabelSummary,
    RecordSummary,
    ShareSummary,
)

GOLDEN_DIR = Path(__file__).resolve().parent / "data"


def make_session(locale="en", turns=(), **overrides):
    kwargs = dict(
        session_id="s-test",
        user_name="James",
        user_age=9,
        locale=locale,
        turns=list(turns),
    )
    kwargs.update(overrides)
    return Session(**kwargs)


def make_history(pairs, phase=Phase.EXPLORE):
    """Alternating system/user turns from (system_text, user_text) pairs."""
    base = datetime(2026, 3, 1, 9, 0, tzinfo=timezone.utc)
    turns = []
    for system_text, user_text in pairs:
        for role, text in ((Role.SYSTEM, system_text), (Role.USER, user_text)):
            turns.append(
                Turn(
                    index=len(turns),
                    role=role,
                    content=text,
                    phase=phase,
                    timestamp=base + timedelta(seconds=30 * len(turns)),
                )
            )
    return turns


@pytest.fixture
def composer(assets, catalog):
    return PromptComposer(assets, catalog)


# -- asset parsing ----------------------------------------------------------

GOOD_ASSET = """---
kind: phase
phase: explore
locale: en
placeholders: user_name
---
Talk with {user_name} about the day.
"""


def test_parse_asset_reads_front_matter():
    asset = parse_asset(GOOD_ASSET, "explore.txt")
    assert asset.kind == "phase"
    assert asset.phase is Phase.EXPLORE
    assert asset.locale == "en"
    assert asset.placeholders == ("user_name",)
    assert asset.template == "Talk with {user_name} about the day."


def test_parse_asset_requires_front_matter():
    with pytest.raises(ParseError, match="front-matter"):
        parse_asset("just a body", "x.txt")


def test_parse_asset_rejects_unknown_kind():
    text = "---\nkind: sidebar\nlocale: en\n---\nbody\n"
    with pytest.raises(ParseError, match="kind"):
        parse_asset(text, "x.txt")


def test_parse_asset_rejects_bad_phase():
    text = "---\nkind: phase\nphase: wander\nlocale: en\n---\nbody\n"
    with pytest.raises(ParseError, match="phase"):
        parse_asset(text, "x.txt")


def test_parse_asset_rejects_disallowed_placeholder():
    text = "---\nkind: persona\nlocale: en\nplaceholders: api_key\n---\nbody\n"
    with pytest.raises(ParseError, match="not allowed"):
        parse_asset(text, "x.txt")


def test_parse_asset_rejects_undeclared_placeholder():
    text = "---\nkind: persona\nlocale: en\n---\nHello {user_name}.\n"
    with pytest.raises(ParseError, match="not declared"):
        parse_asset(text, "x.txt")


def test_bundled_assets_load_for_both_locales(assets):
    for locale in ("en", "ko"):
        assert assets.persona(locale).kind == "persona"
        assert assets.speaking_rules(locale).kind == "speaking_rules"
        for phase in Phase:
            assert assets.phase(phase, locale).phase is phase


def test_missing_asset_file_fails_at_startup(tmp_path):
    with pytest.raises(ConfigurationError, match="missing instruction asset"):
        AssetStore.from_directory(tmp_path)


def test_speaking_rules_must_keep_one_question_marker(tmp_path, assets):
    from importlib import resources

    src = Path(str(resources.files("chacha.assets") / "prompts"))
    for path in src.rglob("*.txt"):
        target = tmp_path / path.relative_to(src)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(path.read_text(encoding="utf-8"), encoding="utf-8")
    rules = tmp_path / "en" / "speaking_rules.txt"
    text = rules.read_text(encoding="utf-8")
    rules.write_text(
        text.replace(ONE_QUESTION_MARKER["en"], "Ask plenty of questions"),
        encoding="utf-8",
    )
    with pytest.raises(ConfigurationError, match="one-question"):
        AssetStore.from_directory(tmp_path)


# -- bundle composition -----------------------------------------------------


def test_bundle_system_text_joins_four_sections(composer):
    session = make_session()
    bundle = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    parts = (
        bundle.persona_header,
        bundle.phase_static,
        bundle.dynamic_status,
        bundle.speaking_rules,
    )
    assert bundle.system_text() == "\n\n".join(parts)
    messages = bundle.to_messages()
    assert messages[0].role == "system"
    assert messages[0].content == bundle.system_text()
    # No recap for an empty history, so the single system message stands alone.
    assert all(m.role != "system" for m in messages[1:])


def test_persona_is_filled_with_name_and_age(composer):
    bundle = composer.compose(Phase.EXPLORE, make_session(), ExploreSummary())
    assert "James" in bundle.persona_header
    assert "9" in bundle.persona_header
    assert "{user_name}" not in bundle.persona_header


def test_history_roles_map_to_chat_roles(composer):
    turns = make_history([("Hi!", "Hello ChaCha")])
    session = make_session(turns=turns)
    bundle = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    roles = [m.role for m in bundle.to_messages()]
    assert roles == ["system", "assistant", "user"]


def test_digest_is_stable_and_content_sensitive(composer):
    session = make_session(turns=make_history([("Hi!", "Hello")]))
    first = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    second = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    assert first.digest() == second.digest()
    other = composer.compose(
        Phase.EXPLORE,
        session,
        ExploreSummary(key_event_shared=True, key_event_description="a fall"),
    )
    assert other.digest() != first.digest()


def test_one_question_marker_present_per_locale(assets, catalog):
    composer = PromptComposer(assets, catalog)
    for locale in ("en", "ko"):
        bundle = composer.compose(
            Phase.EXPLORE, make_session(locale=locale), ExploreSummary()
        )
        assert ONE_QUESTION_MARKER[locale] in bundle.speaking_rules
        assert ONE_QUESTION_MARKER[locale] in bundle.system_text()


def test_mismatched_summary_type_is_a_contract_error(composer):
    with pytest.raises(ContractError):
        composer.compose(Phase.LABEL, make_session(), ExploreSummary())
    with pytest.raises(ContractError):
        composer.compose(Phase.SHARE, make_session(), RecordSummary())


# -- dynamic status ---------------------------------------------------------


def test_dynamic_status_matches_published_example(composer):
    """Label-phase status with one unhandled emotion, byte for byte."""
    session = make_session(locale="en")
    summary = LabelSummary(
        emotions=(EmotionItem("regret", is_negative=True),)
    )
    previous = ExploreSummary(
        key_event_shared=True,
        key_event_description="James missed the school trip because he was sick.",
    )
    bundle = composer.compose(Phase.LABEL, session, summary, previous)
    golden = (GOLDEN_DIR / "label_status_example.golden.txt").read_text(
        encoding="utf-8"
    )
    assert bundle.dynamic_status == golden


def test_status_without_previous_summary_has_no_context_block(composer):
    bundle = composer.compose(Phase.EXPLORE, make_session(), ExploreSummary())
    assert CONTEXT_HEADING not in bundle.dynamic_status
    assert bundle.dynamic_status.startswith(STATUS_HEADING)


def test_share_goodbye_replaces_all_other_directives(composer):
    summary = ShareSummary(
        already_shared_with_parents=True,
        sharing_encouraged_or_praised=True,
        user_done=True,
    )
    bundle = composer.compose(Phase.SHARE, make_session(), summary)
    lines = [
        line
        for line in bundle.dynamic_status.splitlines()
        if line.startswith("- ")
    ]
    assert len(lines) == 1
    assert "goodbye" in lines[0].lower()


def test_label_status_lists_every_unacknowledged_emotion(composer):
    summary = LabelSummary(
        emotions=(
            EmotionItem("joy", acknowledged=True),
            EmotionItem("regret"),
            EmotionItem("disappointment"),
        )
    )
    bundle = composer.compose(Phase.LABEL, make_session(), summary)
    status = bundle.dynamic_status
    assert "'Regret'" in status
    assert "'Disappointment'" in status
    assert status.index("Joy") < status.index("'Regret'")


def test_free_text_emotion_keeps_its_own_wording(composer):
    summary = LabelSummary(emotions=(EmotionItem("butterflies in my tummy"),))
    bundle = composer.compose(Phase.LABEL, make_session(), summary)
    assert "'butterflies in my tummy'" in bundle.dynamic_status


def test_picker_shown_adds_picker_directive_line(composer):
    summary = LabelSummary(user_struggling_to_describe=True)
    plain = composer.compose(Phase.LABEL, make_session(), summary)
    shown = composer.compose(
        Phase.LABEL, make_session(), summary, picker_shown=True
    )
    plain_lines = plain.dynamic_status.count("\n- ")
    shown_lines = shown.dynamic_status.count("\n- ")
    assert shown_lines == plain_lines + 1


def test_help_phase_composes_without_summary(composer):
    bundle = composer.compose(Phase.HELP, make_session(), None)
    assert STATUS_HEADING in bundle.dynamic_status


# -- pickers and emotion rendering ------------------------------------------


def test_emotion_list_renders_label_and_emoji(catalog):
    text = render_emotion_list(catalog, "en")
    lines = text.splitlines()
    assert len(lines) == len(catalog)
    first = catalog.entries[0]
    assert lines[0] == f"- {first.label('en')} {first.emoji}"


def test_picker_directive_carries_catalog_in_order(catalog):
    directive = render_picker_directive(catalog, "ko")
    assert directive["picker_shown"] is True
    assert [e["id"] for e in directive["emotions"]] == catalog.ids()
    assert len(directive["emotions"]) == 20
    sample = directive["emotions"][0]
    assert set(sample) == {"id", "label", "emoji"}


def test_picker_directive_needs_a_nonempty_catalog():
    empty = EmotionCatalog(entries=(), locales=("en",), is_default=False)
    with pytest.raises(ValidationError):
        render_picker_directive(empty, "en")


def test_turn_content_renders_picked_emotions():
    turn = Turn(
        index=1,
        role=Role.USER,
        content="",
        phase=Phase.LABEL,
        timestamp=datetime.now(timezone.utc),
        attachments=Attachments(picked_emotion_ids=("joy", "comfort")),
    )
    assert render_turn_content(turn) == "[Selected emotions: joy, comfort]"
    spoken = Turn(
        index=1,
        role=Role.USER,
        content="like this",
        phase=Phase.LABEL,
        timestamp=datetime.now(timezone.utc),
        attachments=Attachments(picked_emotion_ids=("joy",)),
    )
    assert render_turn_content(spoken) == "like this\n[Selected emotions: joy]"


# -- history fitting --------------------------------------------------------


def test_short_history_is_passed_through_whole(composer):
    turns = make_history([("Hi!", "Hello"), ("How was today?", "Fine")])
    session = make_session(turns=turns)
    bundle = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    assert bundle.history == tuple(turns)
    assert bundle.history_recap == ""


def test_long_history_keeps_greeting_and_newest_turns(assets, catalog):
    composer = PromptComposer(
        assets,
        catalog,
        generation_params=GenerationParams(0.7, 256),
        context_limit_tokens=2600,
    )
    pairs = [
        (f"That sounds big, tell me more about part {i}!", "word " * 120)
        for i in range(12)
    ]
    turns = make_history(pairs)
    session = make_session(turns=turns)
    bundle = composer.compose(Phase.EXPLORE, session, ExploreSummary())
    assert len(bundle.history) < len(turns)
    assert bundle.history[0] == turns[0]
    kept = len(bundle.history) - 1
    assert list(bundle.history[1:]) == turns[-kept:]
    dropped = len(turns) - len(bundle.history)
    assert bundle.history_recap.startswith(RECAP_HEADING)
    assert str(dropped) in bundle.history_recap
    messages = bundle.to_messages()
    assert messages[1].role == "system"
    assert messages[1].content == bundle.history_recap
