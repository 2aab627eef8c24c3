"""Live tutoring loop: dequeue, resolve, send, block on responses, route signals.

A session owns one message queue compiled from the DSL document. ``step``
produces the next mentor message; ``handle_event`` ingests learner events
(responses, code results, questions, go-on clicks), grades them, and updates
the student model — the model changes nowhere else. Blocking messages
(``need_response`` true) stop the queue until the matching response arrives.
"""

from __future__ import annotations

import json
import random
import re
import time
from dataclasses import dataclass, field
from enum import Enum

from .dsl import Interaction, MessageQueue, QueueMessage
from .errors import PhaseError, ReplyParseError, SessionError
from .gateway import Gateway, GenerationRequest
from .planner import MentorMove
from .student_model import (
    Observation,
    ObservationOutcome,
    Signal,
    SignalKind,
    StudentStore,
)
from . import prompts


class Phase(str, Enum):
    AWAITING_VIDEO = "awaiting_video"
    SENDING = "sending"
    AWAITING_RESPONSE = "awaiting_response"
    IDLE = "idle"
    DONE = "done"


class EventType(str, Enum):
    VIDEO_FINISHED = "video_finished"
    STUDENT_RESPONSE = "student_response"
    CODE_EXECUTION = "code_execution"
    QUESTION = "question"
    GO_ON = "go_on"


EVENT_SIGNALS = {
    EventType.VIDEO_FINISHED: SignalKind.VIDEO,
    EventType.GO_ON: SignalKind.VIDEO,
    EventType.STUDENT_RESPONSE: SignalKind.RESPONSE,
    EventType.CODE_EXECUTION: SignalKind.ERROR,  # refined to RESPONSE on success
    EventType.QUESTION: SignalKind.HELP,
}


@dataclass(frozen=True)
class InboundEvent:
    event_id: str
    type: EventType
    segment_id: str | None = None
    text: str | None = None
    choice: str | None = None
    blanks: tuple | None = None
    success: bool | None = None
    stderr: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "InboundEvent":
        try:
            etype = EventType(data["type"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad inbound event: {exc}") from exc
        return cls(
            event_id=str(data.get("event_id", "")),
            type=etype,
            segment_id=data.get("segment_id"),
            text=data.get("text"),
            choice=data.get("choice"),
            blanks=tuple(data["blanks"]) if data.get("blanks") is not None else None,
            success=data.get("success"),
            stderr=data.get("stderr"),
        )


@dataclass
class Envelope:
    """Outbound message as delivered to the chat client."""

    type: str  # text | multiple_choice | fill_in_blanks | show_code | play_clip
    body: str
    need_response: bool
    move: str = ""
    interaction: str = ""
    knowledge_id: str = ""
    options: list | None = None
    blanks: dict | None = None
    clip: dict | None = None
    code: str | None = None

    def to_dict(self) -> dict:
        data = {
            "type": self.type,
            "body": self.body,
            "need_response": self.need_response,
            "move": self.move,
            "interaction": self.interaction,
            "knowledge_id": self.knowledge_id,
        }
        for key in ("options", "blanks", "clip", "code"):
            value = getattr(self, key)
            if value is not None:
                data[key] = value
        return data


@dataclass
class PendingResponse:
    interaction: Interaction
    move: MentorMove
    knowledge_id: str
    expected: object = None        # MCQ answer letter / blank token list / rubric context
    blanks_payload: dict | None = None
    code_block: str = ""


@dataclass
class SessionStats:
    dequeued: int = 0
    sent: int = 0
    responses: int = 0
    extras: int = 0          # corrective / help / feedback messages
    model_updates: int = 0


@dataclass
class BlanksSpec:
    display_line: str
    blanks: list
    options: list  # one candidate list per blank

    def to_dict(self) -> dict:
        return {"display_line": self.display_line, "options": self.options,
                "count": len(self.blanks)}


_IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_QUOTED_RE = re.compile(r"[`'\"]([A-Za-z_][A-Za-z0-9_.]*)[`'\"]")
_CALL_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_.]*)\s*\(")

PLAY_CLIP_BODY = "Watch this clip from the video, then click Go On when you are ready."


def anchor_identifier_tokens(anchor: str) -> list[str]:
    """Identifier tokens named by an anchor span; quoted ones take priority."""
    quoted = _QUOTED_RE.findall(anchor)
    if quoted:
        return list(dict.fromkeys(quoted))
    return list(dict.fromkeys(_IDENTIFIER_RE.findall(anchor)))


def blank_out(code_line: str, knowledge, code_artifact, seed: str = "") -> BlanksSpec:
    """Blank the anchor-named tokens out of a code line.

    Falls back to blanking the first function call when the anchor names
    nothing in the line. Option order is deterministic per session seed.
    """
    if not code_line.strip():
        raise SessionError("blank_out: empty code line")
    line_tokens = set(_IDENTIFIER_RE.findall(code_line))
    targets = [t for t in anchor_identifier_tokens(knowledge.anchor_span) if t in line_tokens]
    if not targets:
        call = _CALL_RE.search(code_line)
        if not call:
            raise SessionError(
                f"blank_out: no anchor token or function call in line {code_line!r}"
            )
        targets = [call.group(1)]

    display = code_line
    for i, token in enumerate(targets, start=1):
        display = re.sub(rf"(?<![A-Za-z0-9_.]){re.escape(token)}(?![A-Za-z0-9_.])",
                         f"___{i}___", display, count=1)

    pool = [t for t in code_artifact.identifiers() if t not in targets] if code_artifact else []
    options = []
    for i, token in enumerate(targets):
        rng = random.Random(f"{seed}:{i}:{token}")
        distractors = pool.copy()
        rng.shuffle(distractors)
        choices = [token] + distractors[:3]
        rng.shuffle(choices)
        options.append(choices)
    return BlanksSpec(display_line=display, blanks=targets, options=options)


def grade(interaction: Interaction, expected, actual, rubric_judge=None):
    """Grade a response; returns an ObservationOutcome or None when ungradable."""
    if interaction is Interaction.MULTIPLE_CHOICE:
        if expected is None or actual is None:
            return None
        want = str(expected).strip()
        got = str(actual).strip()
        if got == want:
            return ObservationOutcome.CORRECT
        if len(want) == 1 and got and got[0].upper() == want.upper():
            return ObservationOutcome.CORRECT
        return ObservationOutcome.INCORRECT
    if interaction is Interaction.FILL_IN_BLANKS:
        if expected is None or actual is None:
            return None
        want = [" ".join(str(t).split()) for t in expected]
        got = [" ".join(str(t).split()) for t in actual]
        ok = len(want) == len(got) and all(w == g for w, g in zip(want, got))
        return ObservationOutcome.CORRECT if ok else ObservationOutcome.INCORRECT
    if interaction is Interaction.PLAIN_TEXT and rubric_judge is not None:
        if actual is None:
            return None
        verdict = rubric_judge(expected, actual)
        return ObservationOutcome.CORRECT if verdict else ObservationOutcome.INCORRECT
    # annotation is observational-only; show-code grades via code_execution
    return None


@dataclass
class StepResult:
    status: str  # "message" | "blocked" | "done"
    envelope: Envelope | None = None


@dataclass
class HandleResult:
    ok: bool
    reply: Envelope | None = None


class Session:
    """One learner's live run over a compiled DSL document."""

    def __init__(self, session_id: str, student_id: str, config, document, queue: MessageQueue,
                 knowledge_map: dict, segments: dict, code_artifact, gateway: Gateway,
                 store: StudentStore, seed: str | None = None):
        self.session_id = session_id
        self.student_id = student_id
        self.config = config
        self.document = document
        self.queue = queue
        self.knowledge_map = knowledge_map
        self.segments = segments
        self.code_artifact = code_artifact
        self.gateway = gateway
        self.store = store
        self.seed = seed if seed is not None else session_id
        self.phase = Phase.SENDING
        self.pending: PendingResponse | None = None
        self.history: list = []
        self.stats = SessionStats()
        self.event_acks: dict[str, dict] = {}
        self.created_at = time.time()
        self._farewell_sent = False
        self._system_prompt = prompts.conversation_system_prompt(
            config.topic, config.kernel_language
        )
        self._in_handle_event = False

    # -- helpers -----------------------------------------------------------

    @property
    def pending_knowledge_id(self) -> str | None:
        return self.pending.knowledge_id if self.pending else None

    def _chat_history(self) -> tuple:
        return tuple(
            {"role": entry["role"], "text": entry["text"]}
            for entry in self.history
            if entry.get("text")
        )

    def _append(self, role: str, text: str, envelope: Envelope | None = None) -> None:
        self.history.append({"role": role, "text": text,
                             "envelope": envelope.to_dict() if envelope else None})

    def _generate(self, user_prompt: str) -> str:
        request = GenerationRequest(
            user_prompt=user_prompt,
            system_prompt=self._system_prompt,
            history=self._chat_history(),
            stage="conversation",
        )
        return self.gateway.generate(request)

    def _knowledge_for(self, knowledge_id: str):
        item = self.knowledge_map.get(knowledge_id)
        if item is None:
            raise SessionError(f"unknown knowledge id {knowledge_id!r}")
        return item

    def _segment_for(self, knowledge_id: str):
        key = knowledge_id.split("#", 1)[0]
        segment = self.segments.get(key)
        if segment is None:
            raise SessionError(f"unknown segment key {key!r}")
        return segment

    def _code_block_for(self, knowledge) -> str:
        tokens = anchor_identifier_tokens(knowledge.anchor_span)
        for cell in self.code_artifact.cells if self.code_artifact else ():
            cell_tokens = set(_IDENTIFIER_RE.findall(cell.text))
            if any(t in cell_tokens for t in tokens):
                return cell.text
        if self.code_artifact and self.code_artifact.cells:
            return self.code_artifact.cells[0].text
        raise SessionError("cannot resolve parameter 'code-block': no code artifact")

    def _code_line_for(self, knowledge) -> str:
        tokens = anchor_identifier_tokens(knowledge.anchor_span)
        for cell in self.code_artifact.cells if self.code_artifact else ():
            for line in cell.text.splitlines():
                line_tokens = set(_IDENTIFIER_RE.findall(line))
                if any(t in line_tokens for t in tokens):
                    return line.strip()
        for cell in self.code_artifact.cells if self.code_artifact else ():
            for line in cell.text.splitlines():
                if _CALL_RE.search(line):
                    return line.strip()
        raise SessionError("cannot resolve parameter 'code-line-with-blanks': no matching code line")

    def _last_student_answer(self) -> str:
        for entry in reversed(self.history):
            if entry["role"] == "student":
                return entry["text"]
        raise SessionError("cannot resolve parameter 'student-answer': no response yet")

    # -- outbound ----------------------------------------------------------

    def step(self) -> StepResult:
        """Send the next queue message, or report blocked/done."""
        if self.phase is Phase.DONE:
            return StepResult(status="done")
        if self.phase in (Phase.AWAITING_RESPONSE, Phase.AWAITING_VIDEO):
            return StepResult(status="blocked")

        message = self.queue.dequeue()
        if message is None:
            self.phase = Phase.DONE
            if not self._farewell_sent:
                self._farewell_sent = True
                envelope = Envelope(type="text", body=prompts.FAREWELL_MESSAGE,
                                    need_response=False)
                self._append("mentor", envelope.body, envelope)
                self.stats.sent += 1
                return StepResult(status="message", envelope=envelope)
            return StepResult(status="done")

        self.stats.dequeued += 1
        envelope = self._send(message)
        self.stats.sent += 1
        return StepResult(status="message", envelope=envelope)

    def _send(self, message: QueueMessage) -> Envelope:
        knowledge = self._knowledge_for(message.knowledge_id)

        if "video-clip" in message.parameters:
            segment = self._segment_for(message.knowledge_id)
            envelope = Envelope(
                type="play_clip",
                body=PLAY_CLIP_BODY,
                need_response=message.need_response,
                move=message.move.value,
                interaction=message.interaction.value,
                knowledge_id=message.knowledge_id,
                clip={"start_s": segment.start_s, "end_s": segment.end_s},
            )
            self._append("mentor", envelope.body, envelope)
            if message.need_response:
                self.phase = Phase.AWAITING_VIDEO
                self.pending = PendingResponse(
                    interaction=message.interaction, move=message.move,
                    knowledge_id=message.knowledge_id,
                )
            return envelope

        prompt = message.prompt
        blanks_spec: BlanksSpec | None = None
        code_block = ""
        for name, value in message.parameters.items():
            if value is not None:
                continue
            if name == "code-line-with-blanks":
                line = self._code_line_for(knowledge)
                blanks_spec = blank_out(line, knowledge, self.code_artifact, seed=self.seed)
                prompt = prompt.replace("{code-line-with-blanks}", blanks_spec.display_line)
            elif name == "code-block":
                code_block = self._code_block_for(knowledge)
                prompt = prompt.replace("{code-block}", code_block)
            elif name == "student-answer":
                prompt = prompt.replace("{student-answer}", self._last_student_answer())
            else:
                raise SessionError(f"unresolved parameter {name!r} in message "
                                   f"for {message.knowledge_id}")

        interaction = message.interaction
        if interaction is Interaction.MULTIPLE_CHOICE:
            prompt += prompts.MCQ_FORMAT_INSTRUCTION
        reply = self._generate(prompt)

        expected = None
        options = None
        body = reply
        if interaction is Interaction.MULTIPLE_CHOICE:
            try:
                data = json.loads(reply)
                body = data["question"]
                options = list(data["options"])
                expected = str(data["answer"])
            except (json.JSONDecodeError, KeyError, TypeError):
                # Degrade to an ungraded text question rather than failing the session.
                body = reply
                options = None
                expected = None
        elif interaction is Interaction.FILL_IN_BLANKS and blanks_spec is not None:
            expected = list(blanks_spec.blanks)
        elif interaction is Interaction.PLAIN_TEXT and message.move is MentorMove.ARTICULATION:
            expected = knowledge.text

        envelope = Envelope(
            type=self._envelope_type(interaction),
            body=body,
            need_response=message.need_response,
            move=message.move.value,
            interaction=interaction.value,
            knowledge_id=message.knowledge_id,
            options=options,
            blanks=blanks_spec.to_dict() if blanks_spec else None,
            code=code_block or None,
        )
        self._append("mentor", body, envelope)
        if message.need_response:
            self.phase = Phase.AWAITING_RESPONSE
            self.pending = PendingResponse(
                interaction=interaction,
                move=message.move,
                knowledge_id=message.knowledge_id,
                expected=expected,
                blanks_payload=blanks_spec.to_dict() if blanks_spec else None,
                code_block=code_block,
            )
        return envelope

    @staticmethod
    def _envelope_type(interaction: Interaction) -> str:
        if interaction is Interaction.MULTIPLE_CHOICE:
            return "multiple_choice"
        if interaction is Interaction.FILL_IN_BLANKS:
            return "fill_in_blanks"
        if interaction is Interaction.SHOW_CODE:
            return "show_code"
        return "text"  # plain-text and the textual annotation stand-in

    # -- inbound -----------------------------------------------------------

    def handle_event(self, event: InboundEvent) -> HandleResult:
        self._in_handle_event = True
        try:
            if event.type is EventType.STUDENT_RESPONSE:
                return self._on_student_response(event)
            if event.type is EventType.CODE_EXECUTION:
                return self._on_code_execution(event)
            if event.type is EventType.QUESTION:
                return self._on_question(event)
            return self._on_advance(event)
        finally:
            self._in_handle_event = False

    def _observe(self, knowledge_id: str, outcome: ObservationOutcome,
                 signal_kind: SignalKind, detail: str = "") -> None:
        knowledge = self._knowledge_for(knowledge_id)
        signal = Signal(kind=signal_kind, timestamp=time.time(), detail=detail)
        obs = Observation(outcome=outcome, source_signal=signal, knowledge_id=knowledge_id)
        self.store.observe(self.student_id, knowledge.anchor_span, obs, self.gateway,
                           self.config.bkt_defaults)
        self.stats.model_updates += 1

    def _feedback(self, answer_text: str, correct: bool) -> Envelope:
        reply = self._generate(prompts.feedback_prompt(answer_text, correct))
        envelope = Envelope(type="text", body=reply, need_response=False)
        self._append("mentor", reply, envelope)
        self.stats.extras += 1
        return envelope

    def _on_student_response(self, event: InboundEvent) -> HandleResult:
        if self.phase is not Phase.AWAITING_RESPONSE or self.pending is None:
            raise PhaseError(
                f"student_response not valid in phase {self.phase.value} "
                "(no blocking message pending)"
            )
        pending = self.pending
        actual = event.choice if event.choice is not None else (
            list(event.blanks) if event.blanks is not None else (event.text or "")
        )
        answer_text = actual if isinstance(actual, str) else ", ".join(map(str, actual))
        self._append("student", answer_text)
        self.stats.responses += 1

        rubric = None
        if pending.interaction is Interaction.PLAIN_TEXT and pending.move is MentorMove.ARTICULATION:
            rubric = self._rubric_judge
        outcome = grade(pending.interaction, pending.expected, actual, rubric_judge=rubric)

        reply = None
        if outcome is not None:
            self._observe(pending.knowledge_id, outcome, SignalKind.RESPONSE)
            reply = self._feedback(answer_text, outcome is ObservationOutcome.CORRECT)
        self.phase = Phase.SENDING
        self.pending = None
        return HandleResult(ok=True, reply=reply)

    def _rubric_judge(self, knowledge_text, answer) -> bool:
        reply = self._generate(prompts.rubric_prompt(str(knowledge_text), str(answer)))
        word = reply.strip().split()[0].upper() if reply.strip() else ""
        if word not in ("CORRECT", "INCORRECT"):
            raise ReplyParseError("rubric reply must be CORRECT or INCORRECT", raw_reply=reply)
        return word == "CORRECT"

    def _on_code_execution(self, event: InboundEvent) -> HandleResult:
        pending_show_code = (
            self.phase is Phase.AWAITING_RESPONSE
            and self.pending is not None
            and self.pending.interaction is Interaction.SHOW_CODE
        )
        if event.success:
            self._append("student", "I ran the code; it executed successfully.")
            if pending_show_code:
                knowledge_id = self.pending.knowledge_id
                self._observe(knowledge_id, ObservationOutcome.CORRECT, SignalKind.RESPONSE)
                self.stats.responses += 1
                reply = self._feedback("the code ran successfully", True)
                self.phase = Phase.SENDING
                self.pending = None
                return HandleResult(ok=True, reply=reply)
            return HandleResult(ok=True)

        stderr = event.stderr or ""
        self._append("student", f"My code failed: {stderr}")
        code_context = self.pending.code_block if pending_show_code and self.pending else ""
        reply_text = self._generate(prompts.corrective_prompt(stderr, code_context))
        envelope = Envelope(type="text", body=reply_text, need_response=False)
        self._append("mentor", reply_text, envelope)
        self.stats.extras += 1
        if pending_show_code:
            # The failed run answers the pending show-code message (incorrectly);
            # the learner can retry, so the queue does not advance.
            self._observe(self.pending.knowledge_id, ObservationOutcome.INCORRECT,
                          SignalKind.ERROR, detail=stderr)
        return HandleResult(ok=True, reply=envelope)

    def _on_question(self, event: InboundEvent) -> HandleResult:
        question = event.text or ""
        self._append("student", question)
        knowledge_text = ""
        if self.pending is not None:
            knowledge_text = self._knowledge_for(self.pending.knowledge_id).text
        reply_text = self._generate(prompts.help_prompt(question, knowledge_text))
        envelope = Envelope(type="text", body=reply_text, need_response=False)
        self._append("mentor", reply_text, envelope)
        self.stats.extras += 1
        return HandleResult(ok=True, reply=envelope)

    def _on_advance(self, event: InboundEvent) -> HandleResult:
        if self.phase is Phase.AWAITING_VIDEO:
            self.phase = Phase.SENDING
            self.pending = None
            return HandleResult(ok=True)
        if self.phase in (Phase.SENDING, Phase.IDLE, Phase.DONE):
            return HandleResult(ok=True)
        raise PhaseError(
            f"{event.type.value} not valid in phase {self.phase.value}: "
            "answer the pending message first"
        )
