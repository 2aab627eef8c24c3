import json

import pytest

from videotutor.dsl import DslDocument, Interaction, MessageQueue, QueueMessage
from videotutor.errors import PhaseError, SessionError
from videotutor.gateway import Gateway
from videotutor.knowledge import Domain, Kind, KnowledgeItem
from videotutor.orchestrator import (
    EventType,
    InboundEvent,
    Phase,
    Session,
    blank_out,
    grade,
)
from videotutor.planner import MentorMove
from videotutor.segmentation import VideoSegment
from videotutor.student_model import ObservationOutcome, StudentStore


SEG_KEY = "Visualize the data - 435"

HISTOGRAM_ITEM = KnowledgeItem(
    id=f"{SEG_KEY}#k0", segment_ref=SEG_KEY, kind=Kind.PROCEDURAL,
    domain=Domain.PROGRAMMING,
    text=("To achieve a view of the overall salary spread, one must use `geom_histogram` "
          "on `Median` because it reveals where most majors cluster."),
    anchor_span="use `geom_histogram`", order_index=0,
)

CHART_ITEM = KnowledgeItem(
    id=f"{SEG_KEY}#k1", segment_ref=SEG_KEY, kind=Kind.DECLARATIVE, domain=Domain.CONCEPT,
    text="The histogram shows that most majors earn a median income near thirty thousand.",
    anchor_span="most majors earn a median income near thirty thousand", order_index=1,
)

SEGMENT = VideoSegment(goal_name="Visualize the data", start_s=435.23, end_s=461.93,
                       summary="s", sentence_range=(6, 10), text="histogram talk")


def message(move=MentorMove.SCAFFOLDING, interaction=Interaction.PLAIN_TEXT,
            prompt="[Use one sentence to explain the knowledge]", parameters=None,
            need_response=False, knowledge_id=HISTOGRAM_ITEM.id):
    return QueueMessage(
        move=move, action="act", interaction=interaction, prompt=prompt,
        parameters=parameters if parameters is not None else {},
        need_response=need_response, knowledge_id=knowledge_id,
    )


def make_session(tmp_path, eda_config, eda_code, messages, script=()):
    store = StudentStore(tmp_path / "data")
    session = Session(
        session_id="sess-test", student_id="stu", config=eda_config,
        document=DslDocument(entries={}), queue=MessageQueue(messages),
        knowledge_map={HISTOGRAM_ITEM.id: HISTOGRAM_ITEM, CHART_ITEM.id: CHART_ITEM},
        segments={SEG_KEY: SEGMENT}, code_artifact=eda_code,
        gateway=Gateway.mock(list(script)), store=store,
    )
    return session


# -- grade ---------------------------------------------------------------------


def test_grade_mcq_exact_match():
    assert grade(Interaction.MULTIPLE_CHOICE, "D", "D") is ObservationOutcome.CORRECT
    assert grade(Interaction.MULTIPLE_CHOICE, "D", "A") is ObservationOutcome.INCORRECT


def test_grade_blanks_case_sensitive_identifiers():
    expected = ["fct_reorder", "Median"]
    assert grade(Interaction.FILL_IN_BLANKS, expected,
                 ["fct_reorder", "Median"]) is ObservationOutcome.CORRECT
    # identifiers are case-sensitive: 'median' is a different name
    assert grade(Interaction.FILL_IN_BLANKS, expected,
                 ["fct_reorder", "median"]) is ObservationOutcome.INCORRECT


def test_grade_blanks_whitespace_normalized():
    assert grade(Interaction.FILL_IN_BLANKS, ["geom_histogram"],
                 ["  geom_histogram "]) is ObservationOutcome.CORRECT


def test_grade_annotation_ungradable():
    assert grade(Interaction.ANNOTATION, None, "my marks") is None


def test_grade_plain_text_uses_rubric():
    judged = grade(Interaction.PLAIN_TEXT, "knowledge ctx", "because the tail is long",
                   rubric_judge=lambda k, a: True)
    assert judged is ObservationOutcome.CORRECT


# -- blank_out -------------------------------------------------------------------


def test_blank_out_anchor_token(eda_code):
    item = KnowledgeItem(
        id="x#k0", segment_ref="x", kind=Kind.PROCEDURAL, domain=Domain.PROGRAMMING,
        text="To achieve order, one must use `fct_reorder` on `Major_category` because x.",
        anchor_span="use `fct_reorder`", order_index=0,
    )
    spec = blank_out("fct_reorder(Major_category, Median)", item, eda_code, seed="s")
    assert spec.blanks == ["fct_reorder"]
    assert spec.display_line == "___1___(Major_category, Median)"
    assert "fct_reorder" in spec.options[0]
    assert len(spec.options[0]) == 4


def test_blank_out_deterministic_per_seed(eda_code):
    item = HISTOGRAM_ITEM
    a = blank_out("geom_histogram()", item, eda_code, seed="same")
    b = blank_out("geom_histogram()", item, eda_code, seed="same")
    assert a.options == b.options
    c = blank_out("geom_histogram()", item, eda_code, seed="different")
    assert c.blanks == a.blanks  # expected tokens stable, order of options may differ


def test_blank_out_falls_back_to_first_call(eda_code):
    spec = blank_out("coord_flip()", CHART_ITEM, eda_code, seed="s")
    assert spec.blanks == ["coord_flip"]


def test_blank_out_no_identifiers_errors(eda_code):
    with pytest.raises(SessionError):
        blank_out("42 + 17", CHART_ITEM, eda_code, seed="s")


# -- step ------------------------------------------------------------------------


def test_step_nonblocking_message_keeps_sending(tmp_path, eda_config, eda_code):
    session = make_session(tmp_path, eda_config, eda_code,
                           [message(), message()],
                           script=[{"match": "any", "reply": "first"},
                                   {"match": "any", "reply": "second"}])
    first = session.step()
    assert first.status == "message"
    assert first.envelope.body == "first"
    assert first.envelope.need_response is False
    assert session.phase is Phase.SENDING
    second = session.step()
    assert second.envelope.body == "second"


def test_step_blocking_fill_in_blanks(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.COACHING, interaction=Interaction.FILL_IN_BLANKS,
                  prompt="[fill in the {code-line-with-blanks}]",
                  parameters={"code-line-with-blanks": None}, need_response=True)
    session = make_session(tmp_path, eda_config, eda_code, [msg],
                           script=[{"match": "fill in", "reply": "go fill"}])
    result = session.step()
    assert result.envelope.type == "fill_in_blanks"
    assert result.envelope.blanks["display_line"] == "___1___()"
    assert session.phase is Phase.AWAITING_RESPONSE
    assert session.pending_knowledge_id == HISTOGRAM_ITEM.id
    assert session.step().status == "blocked"


def test_step_empty_queue_farewell_then_done(tmp_path, eda_config, eda_code):
    session = make_session(tmp_path, eda_config, eda_code, [])
    result = session.step()
    assert result.status == "message"
    assert result.envelope.need_response is False
    assert session.phase is Phase.DONE
    assert session.step().status == "done"


def test_step_play_clip_directive(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.MODELING, prompt="[video-clip]",
                  parameters={"video-clip": None}, need_response=True,
                  knowledge_id=HISTOGRAM_ITEM.id)
    session = make_session(tmp_path, eda_config, eda_code, [msg])
    result = session.step()
    assert result.envelope.type == "play_clip"
    assert result.envelope.clip == {"start_s": 435.23, "end_s": 461.93}
    assert session.phase is Phase.AWAITING_VIDEO
    # no text generation for clip directives
    assert session.gateway.generate_calls == 0


def test_step_unresolved_parameter_names_it(tmp_path, eda_config, eda_code):
    msg = message(prompt="[use the {mystery-param}]", parameters={"mystery-param": None})
    session = make_session(tmp_path, eda_config, eda_code, [msg])
    with pytest.raises(SessionError) as err:
        session.step()
    assert "mystery-param" in str(err.value)


def test_step_show_code_resolves_code_block(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.REFLECTION, interaction=Interaction.SHOW_CODE,
                  prompt="[compare with {code-block}]",
                  parameters={"code-block": None}, need_response=True)
    session = make_session(tmp_path, eda_config, eda_code, [msg],
                           script=[{"match": "compare", "reply": "compare now"}])
    result = session.step()
    assert result.envelope.type == "show_code"
    assert "geom_histogram()" in result.envelope.code


# -- handle_event -----------------------------------------------------------------


def mcq_flow_session(tmp_path, eda_config, eda_code):
    mcq = message(move=MentorMove.COACHING, interaction=Interaction.MULTIPLE_CHOICE,
                  prompt="Propose a multiple-choice question",
                  parameters={}, need_response=True, knowledge_id=CHART_ITEM.id)
    follow = message(prompt="[next message]")
    reply = json.dumps({"question": "Why the tail?", "options": ["A) a", "B) b"],
                        "answer": "A"})
    return make_session(
        tmp_path, eda_config, eda_code, [mcq, follow],
        script=[
            {"match": "multiple-choice", "reply": reply},
            {"match": "give feedback", "reply": "nice work"},
            {"match": "next message", "reply": "moving on"},
        ],
    )


def test_correct_mcq_feedback_update_and_advance(tmp_path, eda_config, eda_code):
    session = mcq_flow_session(tmp_path, eda_config, eda_code)
    sent = session.step()
    assert sent.envelope.type == "multiple_choice"
    assert sent.envelope.options == ["A) a", "B) b"]

    outcome = session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                                choice="A"))
    assert outcome.reply.body == "nice work"
    assert session.store.update_count == 1
    model = session.store.get("stu")
    assert model.components[0].anchor_text == CHART_ITEM.anchor_span
    assert model.components[0].p_mastery > eda_config.bkt_defaults.p_mastery

    nxt = session.step()
    assert nxt.envelope.body == "moving on"


def test_model_updates_only_inside_handle_event(tmp_path, eda_config, eda_code):
    session = mcq_flow_session(tmp_path, eda_config, eda_code)
    session.step()
    assert session.store.update_count == 0  # sending never touches the model
    session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                      choice="B"))
    assert session.store.update_count == 1
    session.step()
    assert session.store.update_count == 1


def test_incorrect_mcq_still_updates(tmp_path, eda_config, eda_code):
    session = mcq_flow_session(tmp_path, eda_config, eda_code)
    session.step()
    session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                      choice="B"))
    comp = session.store.get("stu").components[0]
    assert comp.p_mastery < eda_config.bkt_defaults.p_mastery + 0.1 * (1 - 0.0)


def test_code_failure_corrective_without_queue_advance(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.REFLECTION, interaction=Interaction.SHOW_CODE,
                  prompt="[compare with {code-block}]", parameters={"code-block": None},
                  need_response=True)
    session = make_session(
        tmp_path, eda_config, eda_code, [msg],
        script=[
            {"match": "compare", "reply": "run it"},
            {"match": "code execution failed", "reply": "check the column name"},
            {"match": "give feedback", "reply": "well done"},
        ],
    )
    session.step()
    queue_before = len(session.queue)
    outcome = session.handle_event(InboundEvent(
        event_id="1", type=EventType.CODE_EXECUTION, success=False,
        stderr="object 'Median' not found"))
    assert "column name" in outcome.reply.body
    assert len(session.queue) == queue_before
    assert session.phase is Phase.AWAITING_RESPONSE  # still blocked, retry allowed
    # failing run answers the pending show-code message: incorrect observation
    assert session.store.update_count == 1

    session.handle_event(InboundEvent(event_id="2", type=EventType.CODE_EXECUTION,
                                      success=True))
    assert session.phase is Phase.SENDING
    assert session.store.update_count == 2


def test_stray_code_failure_gives_corrective_without_observation(tmp_path, eda_config,
                                                                 eda_code):
    session = make_session(
        tmp_path, eda_config, eda_code, [message()],
        script=[
            {"match": "any", "reply": "scaffold text"},
            {"match": "code execution failed", "reply": "try library(tidyverse) first"},
        ],
    )
    session.step()
    outcome = session.handle_event(InboundEvent(
        event_id="1", type=EventType.CODE_EXECUTION, success=False, stderr="boom"))
    assert outcome.reply is not None
    assert session.store.update_count == 0


def test_question_gets_help_reply_without_advance(tmp_path, eda_config, eda_code):
    session = make_session(
        tmp_path, eda_config, eda_code, [message(need_response=True)],
        script=[
            {"match": "any", "reply": "here is the task"},
            {"match": "The student asks", "reply": "a median is the middle value"},
        ],
    )
    session.step()
    outcome = session.handle_event(InboundEvent(event_id="1", type=EventType.QUESTION,
                                                text="what is a median?"))
    assert "middle value" in outcome.reply.body
    assert session.phase is Phase.AWAITING_RESPONSE
    assert session.store.update_count == 0


def test_go_on_advances_awaiting_video(tmp_path, eda_config, eda_code):
    clip = message(move=MentorMove.MODELING, prompt="[video-clip]",
                   parameters={"video-clip": None}, need_response=True)
    session = make_session(tmp_path, eda_config, eda_code,
                           [clip, message()],
                           script=[{"match": "any", "reply": "next text"}])
    session.step()
    assert session.phase is Phase.AWAITING_VIDEO
    session.handle_event(InboundEvent(event_id="1", type=EventType.GO_ON))
    assert session.phase is Phase.SENDING
    assert session.step().envelope.body == "next text"


def test_response_in_wrong_phase_rejected_with_diagnostic(tmp_path, eda_config, eda_code):
    session = make_session(tmp_path, eda_config, eda_code, [message()],
                           script=[{"match": "any", "reply": "text"}])
    with pytest.raises(PhaseError) as err:
        session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                          text="hello"))
    assert "sending" in str(err.value)


def test_go_on_rejected_while_awaiting_response(tmp_path, eda_config, eda_code):
    session = make_session(tmp_path, eda_config, eda_code,
                           [message(need_response=True)],
                           script=[{"match": "any", "reply": "answer me"}])
    session.step()
    with pytest.raises(PhaseError):
        session.handle_event(InboundEvent(event_id="1", type=EventType.GO_ON))


def test_blocking_correctness_no_send_until_response(tmp_path, eda_config, eda_code):
    session = make_session(
        tmp_path, eda_config, eda_code,
        [message(need_response=True), message()],
        script=[
            {"match": "any", "reply": "blocking question"},
            {"match": "any", "reply": "after response"},
        ],
    )
    session.step()
    for _ in range(3):
        assert session.step().status == "blocked"
    session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                      text="my answer"))
    assert session.step().envelope.body == "after response"


def test_queue_never_grows(tmp_path, eda_config, eda_code):
    session = make_session(
        tmp_path, eda_config, eda_code,
        [message(), message(need_response=True), message()],
        script=[{"match": "any", "reply": f"m{i}"} for i in range(3)],
    )
    sizes = [len(session.queue)]
    session.step()
    sizes.append(len(session.queue))
    session.step()
    sizes.append(len(session.queue))
    session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                      text="x"))
    sizes.append(len(session.queue))
    session.step()
    sizes.append(len(session.queue))
    assert sizes == sorted(sizes, reverse=True)


def test_articulation_plain_text_rubric_grades(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.ARTICULATION, interaction=Interaction.PLAIN_TEXT,
                  prompt="[ask the student to explain]", need_response=True,
                  knowledge_id=CHART_ITEM.id)
    session = make_session(
        tmp_path, eda_config, eda_code, [msg],
        script=[
            {"match": "explain", "reply": "why is the tail long?"},
            {"match": "CORRECT or INCORRECT", "reply": "CORRECT"},
            {"match": "give feedback", "reply": "good reasoning"},
        ],
    )
    session.step()
    outcome = session.handle_event(InboundEvent(
        event_id="1", type=EventType.STUDENT_RESPONSE,
        text="because engineering majors earn more"))
    assert outcome.reply.body == "good reasoning"
    comp = session.store.get("stu").components[0]
    assert comp.p_mastery > eda_config.bkt_defaults.p_mastery


def test_annotation_response_ungraded_advances(tmp_path, eda_config, eda_code):
    msg = message(move=MentorMove.ARTICULATION, interaction=Interaction.ANNOTATION,
                  prompt="[mark the area]", need_response=True,
                  knowledge_id=CHART_ITEM.id)
    session = make_session(tmp_path, eda_config, eda_code, [msg],
                           script=[{"match": "mark", "reply": "please mark the chart"}])
    session.step()
    outcome = session.handle_event(InboundEvent(event_id="1",
                                                type=EventType.STUDENT_RESPONSE,
                                                text="marked the left region"))
    assert outcome.reply is None
    assert session.store.update_count == 0
    assert session.phase is Phase.SENDING


def test_question_still_answered_after_done(tmp_path, eda_config, eda_code):
    session = make_session(
        tmp_path, eda_config, eda_code, [],
        script=[{"match": "The student asks", "reply": "free chat answer"}],
    )
    session.step()  # farewell
    assert session.phase is Phase.DONE
    outcome = session.handle_event(InboundEvent(event_id="1", type=EventType.QUESTION,
                                                text="can we go deeper?"))
    assert outcome.reply.body == "free chat answer"
    assert session.store.update_count == 0


def test_worked_example_document_session_liveness(tmp_path, eda_config, eda_code):
    # replay the worked-example DSL document end to end: 6 queue messages,
    # two of them blocking (fill-in-blanks, show-code)
    from dsl_fixture import compile_fixture_document, fixture_knowledge, fixture_segment
    from videotutor.dsl import build_queue

    document = compile_fixture_document()
    knowledge = fixture_knowledge()
    segment = fixture_segment()
    store = StudentStore(tmp_path / "data")
    session = Session(
        session_id="appendix", student_id="stu", config=eda_config,
        document=document, queue=build_queue(document),
        knowledge_map={k.id: k for k in knowledge},
        segments={segment.key: segment}, code_artifact=eda_code,
        gateway=Gateway.mock([
            {"match": "explain", "reply": "overview"},
            {"match": "explain", "reply": "boxplot step"},
            {"match": "fill in", "reply": "fill the blank"},
            {"match": "give feedback", "reply": "correct"},
            {"match": "explain", "reply": "reorder step"},
            {"match": "explain", "reply": "axis step"},
            {"match": "compare his answer", "reply": "run the block"},
            {"match": "give feedback", "reply": "nice run"},
        ]),
        store=store,
    )
    events = [
        InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                     blanks=("geom_boxplot",)),
        InboundEvent(event_id="2", type=EventType.CODE_EXECUTION, success=True),
    ]
    cursor = 0
    for _ in range(50):
        result = session.step()
        if result.status == "done":
            break
        if result.status == "blocked":
            session.handle_event(events[cursor])
            cursor += 1
    assert session.phase is Phase.DONE
    assert cursor == 2
    mentor = [h for h in session.history if h["role"] == "mentor"]
    student = [h for h in session.history if h["role"] == "student"]
    # queue length (6) + farewell + per-response feedback extras
    assert len(mentor) == 6 + 1 + 2
    assert len(student) == 2
    assert len(session.history) == len(mentor) + len(student)
    assert session.stats.model_updates == 2


def test_mcq_unparseable_reply_degrades_to_text(tmp_path, eda_config, eda_code):
    mcq = message(move=MentorMove.COACHING, interaction=Interaction.MULTIPLE_CHOICE,
                  prompt="Propose a multiple-choice question", need_response=True,
                  knowledge_id=CHART_ITEM.id)
    session = make_session(tmp_path, eda_config, eda_code, [mcq],
                           script=[{"match": "multiple-choice", "reply": "not json"}])
    result = session.step()
    assert result.envelope.type == "multiple_choice"
    assert result.envelope.options is None
    session.handle_event(InboundEvent(event_id="1", type=EventType.STUDENT_RESPONSE,
                                      choice="A"))
    assert session.store.update_count == 0  # no expected answer, so ungraded
