"""Loading and validation of transcripts, expert code, and the expert configuration.

All loaders are pure functions over immutable inputs: local paths are the
canonical source, remote URLs are fetched only when ``offline`` is false.
Validation is total — malformed fixtures raise a typed error naming the
offending entry, never yielding a partial object.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import httpx

from .dsl import ActionTemplate, Interaction
from .errors import ConfigError, SourceError, ValidationError
from .knowledge import Domain
from .planner import MentorMove


class VideoType(str, Enum):
    CONCEPT = "concept_related"
    PROGRAMMING = "programming_related"
    MIXED = "mixed"

    def domains(self) -> tuple[Domain, ...]:
        if self is VideoType.CONCEPT:
            return (Domain.CONCEPT,)
        if self is VideoType.PROGRAMMING:
            return (Domain.PROGRAMMING,)
        return (Domain.PROGRAMMING, Domain.CONCEPT)


# Moves the planner can emit (Exploration is the orchestrator's free-chat
# escape, never planned), so the action set must cover them per domain.
PLANNABLE_MOVES = (
    MentorMove.MODELING,
    MentorMove.COACHING,
    MentorMove.SCAFFOLDING,
    MentorMove.ARTICULATION,
    MentorMove.REFLECTION,
)


@dataclass(frozen=True)
class TranscriptSentence:
    """One timestamped caption entry."""

    index: int
    text: str
    start_s: float
    duration_s: float

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class LearningGoalDef:
    name: str
    description: str
    enabled: bool = True
    order_hint: int = 0


@dataclass(frozen=True)
class BktDefaults:
    p_mastery: float = 0.1
    p_transit: float = 0.1
    p_slip: float = 0.1
    p_guess: float = 0.2

    def as_dict(self) -> dict:
        return {
            "p_mastery": self.p_mastery,
            "p_transit": self.p_transit,
            "p_slip": self.p_slip,
            "p_guess": self.p_guess,
        }


@dataclass(frozen=True)
class Thresholds:
    """Mastery cut points: weak < fade < strong.

    ``weak`` flags goals needing attention, ``fade`` retires Scaffolding,
    ``strong`` retires the knowledge item itself.
    """

    weak: float = 0.3
    fade: float = 0.5
    strong: float = 0.7

    def as_dict(self) -> dict:
        return {"weak": self.weak, "fade": self.fade, "strong": self.strong}


@dataclass(frozen=True)
class CodeCell:
    text: str
    label: str | None = None


@dataclass(frozen=True)
class CodeArtifact:
    cells: tuple = ()

    def identifiers(self) -> list[str]:
        """All identifier tokens across cells, first-seen order, deduplicated."""
        seen: dict[str, None] = {}
        for cell in self.cells:
            for tok in re.findall(r"[A-Za-z_][A-Za-z0-9_.]*", cell.text):
                seen.setdefault(tok, None)
        return list(seen)


@dataclass(frozen=True)
class ExpertConfig:
    topic: str
    video_type: VideoType
    kernel_language: str
    transcript_source: str
    code_source: str
    goals: tuple = ()
    action_set: tuple = ()
    bkt_defaults: BktDefaults = BktDefaults()
    thresholds: Thresholds = Thresholds()
    max_knowledge_items: int = 4

    def enabled_goals(self) -> list[LearningGoalDef]:
        return [g for g in self.goals if g.enabled]

    def goal_names(self) -> list[str]:
        return [g.name for g in self.enabled_goals()]

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "video_type": self.video_type.value,
            "kernel_language": self.kernel_language,
            "transcript_source": self.transcript_source,
            "code_source": self.code_source,
            "goals": [
                {
                    "name": g.name,
                    "description": g.description,
                    "enabled": g.enabled,
                    "order_hint": g.order_hint,
                }
                for g in self.goals
            ],
            "action_set": [t.to_dict() for t in self.action_set],
            "bkt_defaults": self.bkt_defaults.as_dict(),
            "thresholds": self.thresholds.as_dict(),
            "max_knowledge_items": self.max_knowledge_items,
        }


# ---------------------------------------------------------------------------
# Source resolution


def resolve_source(source: str | Path, offline: bool = False) -> str:
    """Return the text behind a local path or http(s) URL."""
    text = str(source)
    if text.startswith("http://") or text.startswith("https://"):
        if offline:
            raise SourceError(f"offline mode forbids remote fetch: {source}")
        try:
            resp = httpx.get(text, timeout=30.0, follow_redirects=True)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise SourceError(f"cannot fetch {source}: {exc}") from exc
        return resp.text
    path = Path(text)
    if not path.exists():
        raise SourceError(f"no such file: {source}")
    return path.read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# Transcript


def load_transcript(source: str | Path, offline: bool = False) -> list[TranscriptSentence]:
    """Parse a caption JSON array of ``{text, start, duration}`` entries.

    Output is sorted by start time and re-indexed contiguously from 0.
    """
    raw = resolve_source(source, offline=offline)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"transcript is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ValidationError("transcript must be a JSON array")

    entries = []
    for i, row in enumerate(data):
        if not isinstance(row, dict):
            raise ValidationError(f"transcript entry {i}: not an object")
        for key in ("text", "start", "duration"):
            if key not in row:
                raise ValidationError(f"transcript entry {i}: missing field {key!r}")
        text = row["text"]
        start = row["start"]
        duration = row["duration"]
        if not isinstance(text, str):
            raise ValidationError(f"transcript entry {i}: text must be a string")
        if not isinstance(start, (int, float)) or isinstance(start, bool) or start < 0:
            raise ValidationError(f"transcript entry {i}: start must be a non-negative number")
        if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration <= 0:
            raise ValidationError(f"transcript entry {i}: duration must be a positive number")
        entries.append((float(start), float(duration), text))

    entries.sort(key=lambda e: e[0])
    return [
        TranscriptSentence(index=i, text=text, start_s=start, duration_s=duration)
        for i, (start, duration, text) in enumerate(entries)
    ]


# ---------------------------------------------------------------------------
# Expert config


def _probability(value, where: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{where}: probability {value} outside [0, 1]")
    return float(value)


def parse_config(data: dict) -> ExpertConfig:
    """Validate a parsed config document and build the ExpertConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("topic", "video_type", "kernel_language", "transcript_source",
                "code_source", "goals", "action_set"):
        if key not in data:
            raise ConfigError(f"config missing field {key!r}")

    try:
        video_type = VideoType(data["video_type"])
    except ValueError:
        raise ConfigError(
            f"video_type {data['video_type']!r} not one of "
            f"{[v.value for v in VideoType]}"
        ) from None

    goals = []
    names_seen = set()
    for i, row in enumerate(data["goals"]):
        name = row.get("name", "")
        if not name:
            raise ConfigError(f"goal {i}: empty name")
        if name in names_seen:
            raise ConfigError(f"goal {i}: duplicate name {name!r}")
        names_seen.add(name)
        enabled = bool(row.get("enabled", True))
        description = row.get("description", "")
        if enabled and not description:
            raise ConfigError(f"goal {name!r}: enabled goals need a description")
        goals.append(LearningGoalDef(
            name=name,
            description=description,
            enabled=enabled,
            order_hint=int(row.get("order_hint", i)),
        ))
    if not any(g.enabled for g in goals):
        raise ConfigError("config needs at least one enabled goal")

    if not data["action_set"]:
        raise ConfigError("action_set is empty")
    action_set = tuple(ActionTemplate.from_dict(row) for row in data["action_set"])

    bkt_raw = data.get("bkt_defaults", {})
    defaults = BktDefaults(
        p_mastery=_probability(bkt_raw.get("p_mastery", 0.1), "bkt_defaults.p_mastery"),
        p_transit=_probability(bkt_raw.get("p_transit", 0.1), "bkt_defaults.p_transit"),
        p_slip=_probability(bkt_raw.get("p_slip", 0.1), "bkt_defaults.p_slip"),
        p_guess=_probability(bkt_raw.get("p_guess", 0.2), "bkt_defaults.p_guess"),
    )
    if defaults.p_slip + defaults.p_guess >= 1.0:
        raise ConfigError(
            "bkt_defaults: p_slip + p_guess must stay below 1, got "
            f"{defaults.p_slip} + {defaults.p_guess}"
        )

    th_raw = data.get("thresholds", {})
    thresholds = Thresholds(
        weak=_probability(th_raw.get("weak", 0.3), "thresholds.weak"),
        fade=_probability(th_raw.get("fade", 0.5), "thresholds.fade"),
        strong=_probability(th_raw.get("strong", 0.7), "thresholds.strong"),
    )
    if not thresholds.weak < thresholds.fade < thresholds.strong:
        raise ConfigError(
            f"thresholds out of order: need weak < fade < strong, got "
            f"{thresholds.weak} / {thresholds.fade} / {thresholds.strong}"
        )

    config = ExpertConfig(
        topic=str(data["topic"]),
        video_type=video_type,
        kernel_language=str(data["kernel_language"]),
        transcript_source=str(data["transcript_source"]),
        code_source=str(data["code_source"]),
        goals=tuple(goals),
        action_set=action_set,
        bkt_defaults=defaults,
        thresholds=thresholds,
        max_knowledge_items=int(data.get("max_knowledge_items", 4)),
    )
    _check_action_coverage(config)
    return config


def _check_action_coverage(config: ExpertConfig) -> None:
    covered = {(t.move, t.domain) for t in config.action_set}
    missing = [
        (move.value, domain.value)
        for domain in config.video_type.domains()
        for move in PLANNABLE_MOVES
        if (move, domain) not in covered
    ]
    if missing:
        raise ConfigError(f"action_set does not cover (move, domain) pairs: {missing}")


def load_config(path: str | Path, offline: bool = False) -> ExpertConfig:
    raw = resolve_source(path, offline=offline)
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)


def serialize_config(config: ExpertConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Code artifact

_RMD_FENCE_OPEN = re.compile(r"^```\{(?P<header>[^}]*)\}\s*$")
_RMD_FENCE_CLOSE = re.compile(r"^```\s*$")
_PERCENT_MARKER = re.compile(r"^#\s*%%\s*(?P<label>.*)$")


def _split_rmd_cells(lines: list[str]) -> list[CodeCell]:
    cells = []
    buf: list[str] = []
    label: str | None = None
    inside = False
    for line in lines:
        if not inside:
            m = _RMD_FENCE_OPEN.match(line)
            if m:
                inside = True
                header = m.group("header").strip()
                label = header or None
                buf = []
        else:
            if _RMD_FENCE_CLOSE.match(line):
                inside = False
                text = "\n".join(buf).strip("\n")
                if text:
                    cells.append(CodeCell(text=text, label=label))
            else:
                buf.append(line)
    return cells


def _split_percent_cells(lines: list[str]) -> list[CodeCell]:
    cells = []
    buf: list[str] = []
    label: str | None = None
    started = False

    def flush():
        text = "\n".join(buf).strip("\n")
        if text:
            cells.append(CodeCell(text=text, label=label))

    for line in lines:
        m = _PERCENT_MARKER.match(line)
        if m:
            if started:
                flush()
            started = True
            label = m.group("label").strip() or None
            buf = []
        else:
            buf.append(line)
    flush()
    return cells


def _split_blank_cells(lines: list[str]) -> list[CodeCell]:
    cells = []
    buf: list[str] = []
    for line in lines:
        if line.strip():
            buf.append(line)
        elif buf:
            cells.append(CodeCell(text="\n".join(buf)))
            buf = []
    if buf:
        cells.append(CodeCell(text="\n".join(buf)))
    return cells


def split_code_cells(text: str) -> list[CodeCell]:
    """Split source text into cells.

    Explicit markers win: R-Markdown chunk fences first, then ``# %%``
    markers; otherwise blank-line-delimited blocks.
    """
    lines = text.splitlines()
    if any(_RMD_FENCE_OPEN.match(line) for line in lines):
        return _split_rmd_cells(lines)
    if any(_PERCENT_MARKER.match(line) for line in lines):
        return _split_percent_cells(lines)
    return _split_blank_cells(lines)


def load_code(source: str | Path, video_type: VideoType = VideoType.PROGRAMMING,
              offline: bool = False) -> CodeArtifact:
    raw = resolve_source(source, offline=offline)
    cells = split_code_cells(raw)
    if not cells and video_type in (VideoType.PROGRAMMING, VideoType.MIXED):
        raise ValidationError(
            f"code source {source} is empty but video_type is {video_type.value}"
        )
    return CodeArtifact(cells=tuple(cells))
