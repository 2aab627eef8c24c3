"""Conversation DSL: compile move plans into the document the session executes.

A DSL document maps ``"<goal> - <floor(start seconds)>"`` keys to entries; an
entry pairs one knowledge sentence with the ordered actions that teach it.
Compilation is pure and deterministic, and the document fully materializes
before a session starts — the message queue is just its flattened form.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum

from .errors import CoverageError, ValidationError
from .knowledge import KIND_LABELS, Kind
from .planner import MentorMove
from . import prompts


class Interaction(str, Enum):
    PLAIN_TEXT = "plain-text"
    MULTIPLE_CHOICE = "multiple-choice"
    FILL_IN_BLANKS = "fill-in-blanks"
    SHOW_CODE = "show-code"
    ANNOTATION = "annotation"


_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z0-9_-]+)\}")

# Parameters whose values only exist at send time.
DEFERRED_PARAMETERS = frozenset(
    {"code-line-with-blanks", "code-block", "student-answer", "video-clip"}
)


def placeholders(prompt: str) -> list[str]:
    """Placeholder names in order of first appearance, deduplicated."""
    seen: dict[str, None] = {}
    for name in _PLACEHOLDER_RE.findall(prompt):
        seen.setdefault(name, None)
    return list(seen)


@dataclass(frozen=True)
class ActionTemplate:
    """Expert-authored behavior for one (move, domain) pair.

    ``kind`` optionally narrows a template to declarative or procedural
    knowledge; kind-agnostic templates serve both. An empty ``prompt`` is
    synthesized from the interaction and the move definition.
    """

    move: MentorMove
    domain: object  # knowledge.Domain; typed loosely to avoid import noise in configs
    action: str
    interaction: Interaction
    prompt: str = ""
    parameters: tuple = ()
    need_response: bool = False
    kind: Kind | None = None

    def __post_init__(self):
        missing = [p for p in placeholders(self.prompt) if p not in self.parameters]
        if self.parameters and missing:
            raise ValidationError(
                f"template ({self.move.value}, {self.interaction.value}): placeholders "
                f"{missing} missing from parameters"
            )
        if not self.parameters and self.prompt:
            object.__setattr__(self, "parameters", tuple(placeholders(self.prompt)))

    def to_dict(self) -> dict:
        data = {
            "move": self.move.value,
            "domain": self.domain.value,
            "action": self.action,
            "interaction": self.interaction.value,
            "prompt": self.prompt,
            "parameters": list(self.parameters),
            "need_response": self.need_response,
        }
        if self.kind is not None:
            data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ActionTemplate":
        from .knowledge import Domain  # local import to avoid a cycle

        try:
            move = MentorMove(data["move"])
            domain = Domain(data["domain"])
            interaction = Interaction(data["interaction"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad action template: {exc}") from exc
        kind = Kind(data["kind"]) if data.get("kind") else None
        return cls(
            move=move,
            domain=domain,
            action=data.get("action", ""),
            interaction=interaction,
            prompt=data.get("prompt", ""),
            parameters=tuple(data.get("parameters", ())),
            need_response=bool(data.get("need_response", False)),
            kind=kind,
        )


@dataclass(frozen=True)
class ResolvedAction:
    method: MentorMove
    action: str
    prompt: str
    interaction: Interaction
    parameters: tuple
    need_response: bool

    def to_jsonable(self) -> dict:
        return {
            "method": self.method.value,
            "action": self.action,
            "prompt": self.prompt,
            "interaction": self.interaction.value,
            "parameters": list(self.parameters),
            "need-response": self.need_response,
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "ResolvedAction":
        return cls(
            method=MentorMove(data["method"]),
            action=data["action"],
            prompt=data["prompt"],
            interaction=Interaction(data["interaction"]),
            parameters=tuple(data["parameters"]),
            need_response=bool(data["need-response"]),
        )


@dataclass(frozen=True)
class DslEntry:
    knowledge: str
    actions: tuple

    def to_jsonable(self) -> dict:
        return {
            "knowledge": self.knowledge,
            "actions": [a.to_jsonable() for a in self.actions],
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "DslEntry":
        return cls(
            knowledge=data["knowledge"],
            actions=tuple(ResolvedAction.from_jsonable(a) for a in data["actions"]),
        )


@dataclass
class DslDocument:
    entries: dict  # key -> list[DslEntry], insertion-ordered by segment time

    def __eq__(self, other):
        if not isinstance(other, DslDocument):
            return NotImplemented
        return list(self.entries.items()) == list(other.entries.items())

    def action_count(self) -> int:
        return sum(len(e.actions) for es in self.entries.values() for e in es)


def segment_key(goal_name: str, start_s: float) -> str:
    return f"{goal_name} - {int(math.floor(start_s))}"


# ---------------------------------------------------------------------------
# Template selection and resolution


def _candidates(move: MentorMove, domain, action_set) -> list[ActionTemplate]:
    return [t for t in action_set if t.move is move and t.domain == domain]


def select_template(move: MentorMove, domain, action_set, kind: Kind | None = None,
                    interaction: Interaction | None = None) -> ActionTemplate:
    """Pick the expert template for a planned move.

    Kind-specific templates beat kind-agnostic ones; an interaction
    preference narrows further; first-authored wins remaining ties.
    """
    found = _candidates(move, domain, action_set)
    if not found:
        raise CoverageError(
            f"action_set has no template for ({move.value}, {domain.value})"
        )

    def rank(pair):
        idx, t = pair
        kind_rank = 0 if (kind is not None and t.kind is kind) else (1 if t.kind is None else 2)
        inter_rank = 0 if (interaction is not None and t.interaction is interaction) else 1
        if interaction is None:
            inter_rank = 0
        return (kind_rank, inter_rank, idx)

    return min(enumerate(found), key=rank)[1]


def get_dsl(move: MentorMove, interaction: Interaction, domain, action_set,
            kind: Kind | None = None) -> dict:
    """Resolve the DSL components (prompt, need-response, parameters) for a move."""
    template = select_template(move, domain, action_set, kind=kind, interaction=interaction)
    prompt = template.prompt or prompts.synthesized_prompt(interaction.value, move.value)
    parameters = tuple(template.parameters) if template.prompt else tuple(placeholders(prompt))
    return {
        "prompt": prompt,
        "need_response": template.need_response,
        "parameters": parameters,
        "action": template.action,
        "interaction": template.interaction,
        "template": template,
    }


def _bind_compile_time(prompt: str, knowledge_text: str) -> str:
    # Only {knowledge} is known at compile time; send-time parameters stay.
    return prompt.replace("{knowledge}", knowledge_text)


def compile_document(plans, knowledge, segments, action_set) -> DslDocument:
    """Compile plans + knowledge into the DSL document, keyed per segment.

    Entries are ordered by knowledge ``order_index``; each planned move
    resolves to exactly one (action, interaction) via the expert templates.
    """
    plan_map = {p.knowledge_id: p for p in plans}
    by_segment: dict[str, list] = {}
    for item in knowledge:
        by_segment.setdefault(item.segment_ref, []).append(item)

    entries: dict[str, list] = {}
    for segment in segments:
        key = segment.key
        items = sorted(by_segment.get(key, []), key=lambda k: k.order_index)
        if not items:
            continue
        if key in entries:
            raise ValidationError(f"duplicate DSL key {key!r}")
        entry_list = []
        for item in items:
            plan = plan_map.get(item.id)
            if plan is None:
                raise ValidationError(f"no plan for knowledge {item.id!r}")
            knowledge_text = f"{KIND_LABELS[item.kind]}: {item.text}"
            actions = []
            for move in plan.moves:
                template = select_template(move, item.domain, action_set, kind=item.kind)
                resolved = get_dsl(move, template.interaction, item.domain, action_set,
                                   kind=item.kind)
                actions.append(ResolvedAction(
                    method=move,
                    action=resolved["action"],
                    prompt=_bind_compile_time(resolved["prompt"], knowledge_text),
                    interaction=resolved["interaction"],
                    parameters=resolved["parameters"],
                    need_response=resolved["need_response"],
                ))
            entry_list.append(DslEntry(knowledge=knowledge_text, actions=tuple(actions)))
        entries[key] = entry_list
    return DslDocument(entries=entries)


# ---------------------------------------------------------------------------
# Canonical serialization: insertion-ordered keys, 4-space indent, scalar-only
# arrays rendered inline.


def _serialize_value(value, indent: int) -> str:
    pad = " " * indent
    inner = " " * (indent + 4)
    if isinstance(value, dict):
        if not value:
            return "{}"
        parts = [f"{inner}{json.dumps(str(k), ensure_ascii=False)}: "
                 f"{_serialize_value(v, indent + 4)}" for k, v in value.items()]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in value):
            return "[" + ", ".join(_serialize_value(v, indent) for v in value) + "]"
        parts = [f"{inner}{_serialize_value(v, indent + 4)}" for v in value]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    return json.dumps(value, ensure_ascii=False)


def serialize_entries(entries) -> str:
    """Canonical JSON for one key's entry list (the on-disk array shape)."""
    return _serialize_value([e.to_jsonable() for e in entries], 0)


def serialize_document(document: DslDocument) -> str:
    jsonable = {key: [e.to_jsonable() for e in es] for key, es in document.entries.items()}
    return _serialize_value(jsonable, 0)


def parse_document(text: str) -> DslDocument:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"DSL document is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("DSL document must be an object keyed by segment")
    entries = {
        key: [DslEntry.from_jsonable(e) for e in value]
        for key, value in data.items()
    }
    return DslDocument(entries=entries)


# ---------------------------------------------------------------------------
# Message queue


@dataclass
class QueueMessage:
    move: MentorMove
    action: str
    interaction: Interaction
    prompt: str
    parameters: dict  # name -> bound value or None (deferred until send)
    need_response: bool
    knowledge_id: str


class MessageQueue:
    """FIFO over the document's actions; dequeue is destructive."""

    def __init__(self, messages):
        self._messages = list(messages)

    def __len__(self) -> int:
        return len(self._messages)

    def dequeue(self) -> QueueMessage | None:
        """Head message, or None once drained (an empty queue is a signal, not an error)."""
        if not self._messages:
            return None
        return self._messages.pop(0)

    def peek(self) -> QueueMessage | None:
        return self._messages[0] if self._messages else None


def build_queue(document: DslDocument) -> MessageQueue:
    """Flatten the document into send order: entry order × action order.

    Knowledge ids are positional (``<segment key>#k<index>``), mirroring how
    the compiler assigned them, so the document alone fully determines the
    queue.
    """
    messages = []
    for key, entry_list in document.entries.items():
        for entry_idx, entry in enumerate(entry_list):
            knowledge_id = f"{key}#k{entry_idx}"
            for action in entry.actions:
                parameters = {}
                for name in action.parameters:
                    parameters[name] = entry.knowledge if name == "knowledge" else None
                messages.append(QueueMessage(
                    move=action.method,
                    action=action.action,
                    interaction=action.interaction,
                    prompt=action.prompt,
                    parameters=parameters,
                    need_response=action.need_response,
                    knowledge_id=knowledge_id,
                ))
    return MessageQueue(messages)
