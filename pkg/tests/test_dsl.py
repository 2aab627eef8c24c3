import json
import random
import string
from pathlib import Path

import pytest

from videotutor.dsl import (
    ActionTemplate,
    DslDocument,
    DslEntry,
    Interaction,
    ResolvedAction,
    build_queue,
    compile_document,
    get_dsl,
    parse_document,
    placeholders,
    segment_key,
    select_template,
    serialize_document,
    serialize_entries,
)
from videotutor.errors import CoverageError, ValidationError
from videotutor.knowledge import Domain, Kind, KnowledgeItem
from videotutor.planner import MentorMove, PlannerHistory, plan
from videotutor.ingestion import Thresholds
from videotutor.segmentation import VideoSegment

FIXTURE = Path(__file__).parent / "fixtures" / "dsl_expected.json"

from dsl_fixture import (
    EXPLAIN_PROMPT,
    SCAFFOLD_ACTION_BARE,
    compile_fixture_document,
    fixture_action_set,
    fixture_knowledge,
    fixture_segment,
    random_document as _random_document_impl,
)


# -- byte equality -----------------------------------------------------------


def test_compile_reproduces_worked_example_byte_for_byte():
    document = compile_fixture_document()
    assert list(document.entries) == ["Visualize the data - 509"]
    produced = serialize_entries(document.entries["Visualize the data - 509"])
    expected = FIXTURE.read_text(encoding="utf-8")
    assert produced == expected


def test_fixture_has_six_actions_across_four_entries():
    document = compile_fixture_document()
    entries = document.entries["Visualize the data - 509"]
    assert len(entries) == 4
    assert document.action_count() == 6


# -- get_dsl -----------------------------------------------------------------


def test_get_dsl_coaching_fill_in_blanks():
    result = get_dsl(MentorMove.COACHING, Interaction.FILL_IN_BLANKS, Domain.PROGRAMMING,
                     fixture_action_set())
    assert result["need_response"] is True
    assert result["parameters"] == ("code-line-with-blanks",)
    assert "{code-line-with-blanks}" in result["prompt"]


def test_get_dsl_scaffolding_no_response():
    result = get_dsl(MentorMove.SCAFFOLDING, Interaction.PLAIN_TEXT, Domain.PROGRAMMING,
                     fixture_action_set(), kind=Kind.PROCEDURAL)
    assert result["need_response"] is False


def test_get_dsl_synthesizes_prompt_when_template_omits_one():
    templates = (ActionTemplate(
        move=MentorMove.ARTICULATION, domain=Domain.CONCEPT,
        action="ask the student to talk through their reasoning",
        interaction=Interaction.PLAIN_TEXT, prompt="", need_response=True,
    ),)
    result = get_dsl(MentorMove.ARTICULATION, Interaction.PLAIN_TEXT, Domain.CONCEPT,
                     templates)
    assert result["prompt"].startswith("[Use plain-text to ")
    assert result["parameters"] == ()


def test_get_dsl_zero_placeholders_means_no_parameters():
    templates = (ActionTemplate(
        move=MentorMove.SCAFFOLDING, domain=Domain.CONCEPT, action="a",
        interaction=Interaction.PLAIN_TEXT, prompt="[Say something kind]",
        need_response=False,
    ),)
    result = get_dsl(MentorMove.SCAFFOLDING, Interaction.PLAIN_TEXT, Domain.CONCEPT,
                     templates)
    assert result["parameters"] == ()


def test_get_dsl_missing_pair_is_coverage_error():
    with pytest.raises(CoverageError) as err:
        get_dsl(MentorMove.MODELING, Interaction.PLAIN_TEXT, Domain.CONCEPT,
                fixture_action_set())
    assert "Modeling" in str(err.value)


def test_select_template_prefers_kind_match():
    chosen = select_template(MentorMove.SCAFFOLDING, Domain.PROGRAMMING,
                             fixture_action_set(), kind=Kind.DECLARATIVE)
    assert chosen.action == SCAFFOLD_ACTION_BARE


def test_template_placeholder_closure_enforced():
    with pytest.raises(ValidationError):
        ActionTemplate(
            move=MentorMove.COACHING, domain=Domain.CONCEPT, action="a",
            interaction=Interaction.PLAIN_TEXT,
            prompt="do {missing-thing}", parameters=("other",), need_response=True,
        )


def test_placeholders_order_and_dedup():
    assert placeholders("{b} then {a} then {b}") == ["b", "a"]


# -- compile odds and ends ----------------------------------------------------


def test_compile_empty_plans_gives_empty_document():
    document = compile_document([], [], [fixture_segment()], fixture_action_set())
    assert document.entries == {}


def test_same_goal_different_starts_get_distinct_keys():
    seg_a = fixture_segment()
    seg_b = VideoSegment(goal_name="Visualize the data", start_s=731.4, end_s=760.0,
                         summary="later", sentence_range=(40, 44), text="later talk")
    knowledge = fixture_knowledge()[:1]
    later = KnowledgeItem(
        id=f"{seg_b.key}#k0", segment_ref=seg_b.key, kind=Kind.DECLARATIVE,
        domain=Domain.PROGRAMMING, text=knowledge[0].text, anchor_span="x", order_index=0,
    )
    items = knowledge + [later]
    mastery = {i.id: 0.5 for i in items}
    plans = plan(items[:1], mastery, PlannerHistory(), Thresholds())
    plans += plan(items[1:], mastery, PlannerHistory(), Thresholds())
    document = compile_document(plans, items, [seg_a, seg_b], fixture_action_set())
    assert list(document.entries) == ["Visualize the data - 509", "Visualize the data - 731"]


def test_placeholder_closure_on_compiled_entries():
    document = compile_fixture_document()
    for entries in document.entries.values():
        for entry in entries:
            for action in entry.actions:
                assert set(placeholders(action.prompt)) <= set(action.parameters)


def test_segment_key_floors_fractional_seconds():
    assert segment_key("Visualize the data", 509.97) == "Visualize the data - 509"


# -- round trip ----------------------------------------------------------------


_random_document = _random_document_impl


def test_round_trip_on_randomized_documents():
    rng = random.Random(20240917)
    for _ in range(100):
        document = _random_document(rng)
        again = parse_document(serialize_document(document))
        assert again == document


def test_parse_rejects_non_object():
    with pytest.raises(ValidationError):
        parse_document("[1, 2, 3]")


# -- queue ---------------------------------------------------------------------


def test_build_queue_flattens_in_order():
    document = compile_fixture_document()
    queue = build_queue(document)
    assert len(queue) == 6
    moves = []
    while True:
        message = queue.dequeue()
        if message is None:
            break
        moves.append((message.knowledge_id, message.move))
    key = "Visualize the data - 509"
    assert moves == [
        (f"{key}#k0", MentorMove.SCAFFOLDING),
        (f"{key}#k1", MentorMove.SCAFFOLDING),
        (f"{key}#k1", MentorMove.COACHING),
        (f"{key}#k2", MentorMove.SCAFFOLDING),
        (f"{key}#k3", MentorMove.SCAFFOLDING),
        (f"{key}#k3", MentorMove.REFLECTION),
    ]


def test_queue_messages_partition_blocking():
    queue = build_queue(compile_fixture_document())
    flags = []
    while (message := queue.dequeue()) is not None:
        flags.append(message.need_response)
        assert isinstance(message.need_response, bool)
    assert flags == [False, False, True, False, False, True]


def test_knowledge_parameter_bound_at_compile():
    queue = build_queue(compile_fixture_document())
    first = queue.dequeue()
    assert first.parameters["knowledge"].startswith("Declarative knowledge: The task is")


def test_empty_document_empty_queue():
    queue = build_queue(DslDocument(entries={}))
    assert len(queue) == 0
    assert queue.dequeue() is None
    assert queue.dequeue() is None  # drained queue is a signal, not an error
