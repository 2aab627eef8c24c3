"""Knowledge extraction: templated declarative/procedural sentences per segment.

Each knowledge sentence must match one of four fixed templates (kind × domain).
Template matching is connective-keyword driven ("one must", "shows that",
"The task is", "To achieve/understand") with free slot content: generated
sentences vary in wording but are reliable on the connectives. The anchor
span carved out of each sentence keys the student model.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ReplyParseError, TemplateRejection
from .gateway import Gateway, GenerationRequest
from . import prompts


class Kind(str, Enum):
    DECLARATIVE = "declarative"
    PROCEDURAL = "procedural"


class Domain(str, Enum):
    CONCEPT = "concept_related"
    PROGRAMMING = "programming_related"


@dataclass(frozen=True)
class KnowledgeTemplate:
    kind: Kind
    domain: Domain
    pattern: tuple
    anchored_slots: tuple


TEMPLATES = {
    (Kind.DECLARATIVE, Domain.CONCEPT): KnowledgeTemplate(
        kind=Kind.DECLARATIVE,
        domain=Domain.CONCEPT,
        pattern=("[subject]", "[verb phrase]", "that", "[independent clause]"),
        anchored_slots=("independent clause",),
    ),
    (Kind.PROCEDURAL, Domain.CONCEPT): KnowledgeTemplate(
        kind=Kind.PROCEDURAL,
        domain=Domain.CONCEPT,
        pattern=("To achieve/understand", "[goal]", "one must", "[actions]",
                 "considering/using", "[factors]"),
        anchored_slots=("actions",),
    ),
    (Kind.DECLARATIVE, Domain.PROGRAMMING): KnowledgeTemplate(
        kind=Kind.DECLARATIVE,
        domain=Domain.PROGRAMMING,
        pattern=("The task is", "[final goal]", "using", "[method]", "and", "[enhancement]"),
        anchored_slots=("final goal",),  # no bolded slot in the source table; goal is the fallback
    ),
    (Kind.PROCEDURAL, Domain.PROGRAMMING): KnowledgeTemplate(
        kind=Kind.PROCEDURAL,
        domain=Domain.PROGRAMMING,
        pattern=("To achieve", "[specific goal]", "one must", "[action + tool]",
                 "on", "[object]", "because", "[reason]"),
        anchored_slots=("action + tool",),
    ),
}


@dataclass(frozen=True)
class KnowledgeParse:
    kind: Kind
    domain: Domain
    text: str
    anchor_span: str
    slots: dict


@dataclass(frozen=True)
class KnowledgeItem:
    id: str
    segment_ref: str
    kind: Kind
    domain: Domain
    text: str
    anchor_span: str
    order_index: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "segment_ref": self.segment_ref,
            "kind": self.kind.value,
            "domain": self.domain.value,
            "text": self.text,
            "anchor_span": self.anchor_span,
            "order_index": self.order_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KnowledgeItem":
        return cls(
            id=data["id"],
            segment_ref=data["segment_ref"],
            kind=Kind(data["kind"]),
            domain=Domain(data["domain"]),
            text=data["text"],
            anchor_span=data["anchor_span"],
            order_index=int(data["order_index"]),
        )


@dataclass
class ExtractionResult:
    items: list
    rejections: list  # (raw_text, reason) pairs


KIND_LABELS = {Kind.DECLARATIVE: "Declarative knowledge", Kind.PROCEDURAL: "Procedural knowledge"}

_PREFIX_RE = re.compile(r"^(Declarative|Procedural)\s+knowledge:\s*", re.IGNORECASE)
_MARKER_RE = re.compile(r"&([^&]+)&")

# Connectives that open the trailing [factors] clause of concept-procedural text.
_FACTOR_CONNECTIVES = (
    ", considering ", " considering ", ", and consider ", " and consider ",
    ", using ", ", and use ", " and use ",
)
# Connectives that open the trailing [reason] clause of programming-procedural text.
_REASON_CONNECTIVES = (" because ", ", because ", ", making ", " making ", ", so that ")


def strip_kind_prefix(text: str) -> str:
    return _PREFIX_RE.sub("", text.strip())


def _strip_markers(text: str) -> tuple[str, str | None]:
    """Remove &...& anchor markers; return (clean text, marked span or None)."""
    m = _MARKER_RE.search(text)
    if not m:
        return text, None
    return text.replace("&", ""), m.group(1)


def _split_first(text: str, connectives: tuple) -> tuple[str, str] | None:
    best = None
    for conn in connectives:
        idx = text.find(conn)
        if idx != -1 and (best is None or idx < best[0]):
            best = (idx, conn)
    if best is None:
        return None
    idx, conn = best
    return text[:idx], text[idx + len(conn):]


def _nearest_template(text: str) -> str | None:
    lowered = text.lower()
    if re.search(r"\bone (must|needs? to)\b", lowered):
        if re.search(r"\son\s", lowered):
            return "procedural/programming_related"
        return "procedural/concept_related"
    if lowered.startswith("the task is"):
        return "declarative/programming_related"
    if " that " in lowered:
        return "declarative/concept_related"
    return None


def _reject(text: str, why: str) -> TemplateRejection:
    nearest = _nearest_template(text)
    hint = f"; nearest template: {nearest}" if nearest else ""
    return TemplateRejection(f"{why}{hint}", nearest=nearest)


_DECL_CONCEPT_RE = re.compile(r"^(?P<subject>.+?)\s+that\s+(?P<clause>.+?)\.?\s*$", re.DOTALL)
_PROC_RE = re.compile(
    r"^To\s+(?P<mode>achieve|understand)\s+(?P<goal>.+?),?\s+one\s+(?:must|needs?\s+to)\s+(?P<rest>.+?)\s*$",
    re.DOTALL,
)
_DECL_PROG_RE = re.compile(r"^The\s+task\s+is\s+(?P<goal>.+?)\s+using\s+(?P<rest>.+?)\.?\s*$", re.DOTALL)


def validate_format(text: str, kind: Kind, domain: Domain) -> KnowledgeParse:
    """Parse a knowledge sentence against its (kind, domain) template.

    Returns the extracted slots and anchor span; &...&-marked spans are
    accepted as an alternate anchor marker and stripped from the stored text.
    Raises :class:`TemplateRejection` with a nearest-template hint otherwise.
    """
    cleaned = strip_kind_prefix(text)
    cleaned, marked = _strip_markers(cleaned)
    cleaned = cleaned.strip()
    if not cleaned:
        raise _reject(text, "empty knowledge text")

    if kind is Kind.DECLARATIVE and domain is Domain.CONCEPT:
        m = _DECL_CONCEPT_RE.match(cleaned)
        if not m or cleaned.lower().startswith("the task is"):
            raise _reject(cleaned, "no '[subject] ... that [clause]' shape found")
        clause = m.group("clause").rstrip(".")
        anchor = marked or clause
        slots = {"subject": m.group("subject"), "independent clause": clause}

    elif kind is Kind.PROCEDURAL and domain is Domain.CONCEPT:
        m = _PROC_RE.match(cleaned)
        if not m:
            raise _reject(cleaned, "no 'To achieve/understand ... one must ...' shape found")
        rest = m.group("rest").rstrip(".")
        split = _split_first(rest, _FACTOR_CONNECTIVES)
        if split is None and marked is None:
            raise _reject(cleaned, "missing 'considering/using [factors]' clause")
        actions, factors = split if split else (rest, "")
        anchor = marked or actions.strip().rstrip(",")
        slots = {"mode": m.group("mode"), "goal": m.group("goal"),
                 "actions": actions.strip().rstrip(","), "factors": factors.strip()}

    elif kind is Kind.DECLARATIVE and domain is Domain.PROGRAMMING:
        m = _DECL_PROG_RE.match(cleaned)
        if not m:
            raise _reject(cleaned, "no 'The task is [goal] using [method]' shape found")
        goal = m.group("goal")
        rest = m.group("rest").rstrip(".")
        split = _split_first(rest, (" and ",))
        method, enhancement = split if split else (rest, "")
        anchor = marked or goal
        slots = {"final goal": goal, "method": method.strip(), "enhancement": enhancement.strip()}

    elif kind is Kind.PROCEDURAL and domain is Domain.PROGRAMMING:
        m = _PROC_RE.match(cleaned)
        if not m or m.group("mode") != "achieve":
            raise _reject(cleaned, "no 'To achieve ... one must ...' shape found")
        rest = m.group("rest").rstrip(".")
        split = _split_first(rest, (" on ",))
        if split is None:
            raise _reject(cleaned, "missing 'on [object]' clause")
        action, after = split
        reason_split = _split_first(after, _REASON_CONNECTIVES)
        target, reason = reason_split if reason_split else (after, "")
        anchor = marked or action.strip().rstrip(",")
        slots = {"goal": m.group("goal"), "action": action.strip().rstrip(","),
                 "object": target.strip().rstrip(","), "reason": reason.strip()}

    else:  # pragma: no cover - enums are closed
        raise _reject(cleaned, f"unknown template ({kind}, {domain})")

    if anchor not in cleaned:
        raise _reject(cleaned, f"anchor span {anchor!r} is not a substring of the text")
    return KnowledgeParse(kind=kind, domain=domain, text=cleaned, anchor_span=anchor, slots=slots)


def anchor_of(item: KnowledgeItem) -> str:
    """The mastery-anchor span of a validated item.

    Declarative/programming items have no bolded slot in the template table,
    so their anchor falls back to the final-goal slot (validate_format already
    applied that rule when the item was built).
    """
    return item.anchor_span


def infer_parse(text: str, domains) -> KnowledgeParse:
    """Classify free knowledge text by trying templates in order.

    Programming templates are strictly more constrained than concept ones,
    so they are tried first when both domains are allowed.
    """
    attempts = []
    for domain in domains:
        for kind in (Kind.PROCEDURAL, Kind.DECLARATIVE):
            attempts.append((kind, domain))
    last: TemplateRejection | None = None
    for kind, domain in attempts:
        try:
            return validate_format(text, kind, domain)
        except TemplateRejection as rej:
            last = rej
    assert last is not None
    raise last


def _parse_reply_list(reply: str) -> list[str]:
    """Accept a JSON array of strings or a Python-literal list of strings."""
    for parser in (json.loads, ast.literal_eval):
        try:
            data = parser(reply)
        except (ValueError, SyntaxError):
            continue
        if isinstance(data, (list, tuple)) and all(isinstance(x, str) for x in data):
            return list(data)
    raise ReplyParseError("knowledge reply is not a list of strings", raw_reply=reply)


def make_item(segment_ref: str, order_index: int, parse: KnowledgeParse) -> KnowledgeItem:
    return KnowledgeItem(
        id=f"{segment_ref}#k{order_index}",
        segment_ref=segment_ref,
        kind=parse.kind,
        domain=parse.domain,
        text=parse.text,
        anchor_span=parse.anchor_span,
        order_index=order_index,
    )


def reindex_items(items) -> list[KnowledgeItem]:
    """Rebuild ids/order after filtering so positions stay contiguous from 0."""
    return [
        replace(item, order_index=i, id=f"{item.segment_ref}#k{i}")
        for i, item in enumerate(items)
    ]


def summarize_knowledge(segment, code, gateway: Gateway, *, domains,
                        max_items: int = 4, topic: str = "") -> ExtractionResult:
    """Extract templated knowledge sentences for one segment.

    ``segment`` needs ``key``, ``goal_name`` and ``text`` attributes. For
    concept segments at most one procedural sentence is kept (extras are
    per-item rejections); items are truncated to ``max_items`` and ordered
    as generated (reply order is trusted as the cognitive order).
    """
    if not segment.text.strip():
        return ExtractionResult(items=[], rejections=[])

    primary_domain = domains[0]
    code_text = ""
    if code is not None and primary_domain is Domain.PROGRAMMING:
        code_text = "\n\n".join(cell.text for cell in code.cells)

    prompt = prompts.knowledge_prompt(
        topic=topic,
        goal_name=segment.goal_name,
        segment_text=segment.text,
        code_text=code_text,
        domain=primary_domain.value,
        max_items=max_items,
    )
    reply = gateway.generate(GenerationRequest(user_prompt=prompt, stage="knowledge"))
    raw_items = _parse_reply_list(reply)

    items: list[KnowledgeItem] = []
    rejections: list = []
    procedural_seen = 0
    concept_only = tuple(domains) == (Domain.CONCEPT,)
    for raw in raw_items:
        try:
            parse = infer_parse(raw, domains)
        except TemplateRejection as rej:
            rejections.append((raw, str(rej)))
            continue
        if concept_only and parse.kind is Kind.PROCEDURAL:
            procedural_seen += 1
            if procedural_seen > 1:
                rejections.append((raw, "concept segments carry a single procedural sentence"))
                continue
        if len(items) >= max_items:
            rejections.append((raw, f"beyond max_items={max_items}"))
            continue
        items.append(make_item(segment.key, len(items), parse))

    return ExtractionResult(items=items, rejections=rejections)
