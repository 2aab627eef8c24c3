"""Transcript segmentation by learning goal: summarize → retrieve → rearrange.

Stage one asks the gateway for per-goal summary points in order of appearance;
stage two maps each summary back to the transcript sentence where it begins
(exact substring first, embedding similarity as fallback); stage three turns
anchor sentences into timestamped, time-ordered segments.
"""

from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field

from .errors import ReplyParseError, UnresolvedAnchorError, ValidationError
from .gateway import Gateway, GenerationRequest, cosine
from .dsl import segment_key
from . import prompts

log = logging.getLogger(__name__)

# Below this cosine the similarity fallback refuses to guess.
SIMILARITY_FLOOR = 0.60

# Optional pre-split window for long transcripts (about ten minutes).
DEFAULT_WINDOW_S = 600.0

# Timestamp arithmetic on caption floats carries dust; ignore sub-epsilon overlap.
_OVERLAP_EPS = 1e-6


@dataclass(frozen=True)
class SegmentSummary:
    goal_name: str
    summary: str
    appearance_index: int


@dataclass(frozen=True)
class RetrievedAnchor:
    goal_name: str
    sentence_text: str
    matched_indices: tuple


@dataclass(frozen=True)
class VideoSegment:
    goal_name: str
    start_s: float
    end_s: float
    summary: str
    sentence_range: tuple
    text: str = ""

    @property
    def key(self) -> str:
        return segment_key(self.goal_name, self.start_s)

    def to_dict(self) -> dict:
        return {"category": self.goal_name, "start": self.start_s, "end": self.end_s}

    def to_full_dict(self) -> dict:
        return {
            "category": self.goal_name,
            "start": self.start_s,
            "end": self.end_s,
            "summary": self.summary,
            "sentence_range": list(self.sentence_range),
            "text": self.text,
        }

    @classmethod
    def from_full_dict(cls, data: dict) -> "VideoSegment":
        return cls(
            goal_name=data["category"],
            start_s=float(data["start"]),
            end_s=float(data["end"]),
            summary=data.get("summary", ""),
            sentence_range=tuple(data.get("sentence_range", (0, 0))),
            text=data.get("text", ""),
        )


def transcript_text(sentences) -> str:
    return "\n".join(f"[{s.start_s:.2f}] {s.text}" for s in sentences)


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


# ---------------------------------------------------------------------------
# Stage 1: summarize


def _parse_summary_reply(reply: str) -> list[tuple[str, str]]:
    """Accept a list of (goal, summary) tuples or objects with category/summary."""
    data = None
    for parser in (json.loads, ast.literal_eval):
        try:
            data = parser(reply)
            break
        except (ValueError, SyntaxError):
            continue
    if not isinstance(data, (list, tuple)):
        raise ReplyParseError("summary reply is not a list", raw_reply=reply)
    pairs = []
    for row in data:
        if isinstance(row, dict) and "category" in row and "summary" in row:
            pairs.append((str(row["category"]), str(row["summary"])))
        elif isinstance(row, (list, tuple)) and len(row) == 2:
            pairs.append((str(row[0]), str(row[1])))
        else:
            raise ReplyParseError(f"unparseable summary row: {row!r}", raw_reply=reply)
    return pairs


def summarize(transcript, goals, gateway: Gateway, topic: str = "") -> list[SegmentSummary]:
    """Summary points per learning goal, in order of appearance in the video."""
    if not transcript:
        return []
    enabled = [g for g in goals if g.enabled]
    if not enabled:
        raise ValidationError("summarize needs at least one enabled goal")
    prompt = prompts.summarize_prompt(topic, enabled, transcript_text(transcript))
    reply = gateway.generate(GenerationRequest(user_prompt=prompt, stage="segmentation"))
    pairs = _parse_summary_reply(reply)

    allowed = {g.name for g in enabled}
    summaries = []
    for goal_name, summary in pairs:
        if goal_name not in allowed:
            log.warning("summary for unknown/disabled goal %r skipped", goal_name)
            continue
        summaries.append(SegmentSummary(
            goal_name=goal_name, summary=summary, appearance_index=len(summaries)
        ))
    return summaries


# ---------------------------------------------------------------------------
# Stage 2: retrieve


def _parse_retrieve_reply(reply: str) -> list[tuple[str, str]]:
    data = None
    for parser in (json.loads, ast.literal_eval):
        try:
            data = parser(reply)
            break
        except (ValueError, SyntaxError):
            continue
    if not isinstance(data, (list, tuple)):
        raise ReplyParseError("retrieve reply is not a list", raw_reply=reply)
    rows = []
    for row in data:
        if isinstance(row, dict) and "category" in row and "sentence" in row:
            rows.append((str(row["category"]), str(row["sentence"])))
        elif isinstance(row, (list, tuple)) and len(row) == 2:
            rows.append((str(row[0]), str(row[1])))
        else:
            raise ReplyParseError(f"unparseable retrieve row: {row!r}", raw_reply=reply)
    return rows


def _exact_match(anchor_norm: str, transcript, search_from: int) -> int | None:
    for sentence in transcript[search_from:]:
        s_norm = _normalize(sentence.text)
        if s_norm and (s_norm in anchor_norm or anchor_norm in s_norm):
            return sentence.index
    # Wrap around: an anchor may legitimately point earlier than the previous one.
    for sentence in transcript[:search_from]:
        s_norm = _normalize(sentence.text)
        if s_norm and (s_norm in anchor_norm or anchor_norm in s_norm):
            return sentence.index
    return None


def _nearest_by_embedding(anchor_text: str, transcript, gateway: Gateway) -> tuple[int, float]:
    """Brute-force nearest sentence by cosine; ties go to the lowest index."""
    anchor_vec = gateway.embed(anchor_text)
    best_idx, best_sim = -1, -2.0
    for sentence in transcript:
        sim = cosine(anchor_vec, gateway.embed(sentence.text))
        if sim > best_sim:
            best_idx, best_sim = sentence.index, sim
    return best_idx, best_sim


def retrieve(summaries, transcript, gateway: Gateway) -> list[RetrievedAnchor]:
    """Map each summary to the transcript sentence where its content begins."""
    if not summaries:
        return []
    prompt = prompts.retrieve_prompt(summaries, transcript_text(transcript))
    reply = gateway.generate(GenerationRequest(user_prompt=prompt, stage="segmentation"))
    rows = _parse_retrieve_reply(reply)
    if len(rows) != len(summaries):
        raise ReplyParseError(
            f"retrieve reply has {len(rows)} rows for {len(summaries)} summaries",
            raw_reply=reply,
        )

    anchors = []
    search_from = 0
    for summary, (goal_name, sentence_text) in zip(summaries, rows):
        if goal_name != summary.goal_name:
            raise ReplyParseError(
                f"retrieve row goal {goal_name!r} does not match summary goal "
                f"{summary.goal_name!r}",
                raw_reply=reply,
            )
        anchor_norm = _normalize(sentence_text)
        idx = _exact_match(anchor_norm, transcript, search_from) if anchor_norm else None
        if idx is None:
            idx, sim = _nearest_by_embedding(sentence_text, transcript, gateway)
            if sim < SIMILARITY_FLOOR:
                raise UnresolvedAnchorError(
                    f"no transcript sentence within similarity floor {SIMILARITY_FLOOR} "
                    f"for summary {summary.goal_name!r}: {summary.summary[:60]!r} "
                    f"(best cosine {sim:.3f})"
                )
            log.warning("anchor for %r matched by similarity %.3f", summary.goal_name, sim)
        anchors.append(RetrievedAnchor(
            goal_name=summary.goal_name,
            sentence_text=sentence_text,
            matched_indices=(idx,),
        ))
        search_from = max(search_from, idx)
    return anchors


# ---------------------------------------------------------------------------
# Stage 3: rearrange


def _segment_from_range(goal_name: str, summary: str, transcript,
                        first: int, last: int) -> VideoSegment:
    sentences = transcript[first:last + 1]
    return VideoSegment(
        goal_name=goal_name,
        start_s=transcript[first].start_s,
        end_s=transcript[last].end_s,
        summary=summary,
        sentence_range=(first, last),
        text=" ".join(s.text for s in sentences),
    )


def rearrange(anchors, transcript, summaries=None) -> list[VideoSegment]:
    """Anchor sentences delimit segments: each runs to just before the next anchor.

    Adjacent anchors for the same goal merge; overlapping segments are
    repaired by truncating the earlier one at the later's start (logged).
    """
    if not anchors:
        return []
    # Summaries pair with anchors positionally (retrieve keeps them aligned).
    summary_texts = {
        pos: s.summary for pos, s in enumerate(summaries or []) if pos < len(anchors)
    }

    indexed = sorted(
        enumerate(anchors), key=lambda pair: (pair[1].matched_indices[0], pair[0])
    )
    # Merge runs of same-goal anchors: keep the first of each run.
    merged: list = []
    for orig_pos, anchor in indexed:
        if merged and merged[-1][1].goal_name == anchor.goal_name:
            continue
        merged.append((orig_pos, anchor))

    segments = []
    for pos, (orig_pos, anchor) in enumerate(merged):
        first = anchor.matched_indices[0]
        if pos + 1 < len(merged):
            nxt = merged[pos + 1][1].matched_indices[0]
            last = max(first, nxt - 1)
        else:
            last = len(transcript) - 1
        summary = summary_texts.get(orig_pos, anchor.sentence_text)
        segments.append(_segment_from_range(anchor.goal_name, summary, transcript, first, last))

    segments.sort(key=lambda s: s.start_s)

    # Overlap repair. Caption arithmetic carries float dust, so only true
    # overlaps (beyond epsilon) are repaired.
    repaired: list[VideoSegment] = []
    for seg in segments:
        if repaired and repaired[-1].end_s > seg.start_s + _OVERLAP_EPS:
            prev = repaired[-1]
            log.warning(
                "segments overlap: truncating %r at %.2f (was %.2f)",
                prev.goal_name, seg.start_s, prev.end_s,
            )
            last = max(prev.sentence_range[0], seg.sentence_range[0] - 1)
            repaired[-1] = _segment_from_range(
                prev.goal_name, prev.summary, transcript, prev.sentence_range[0], last
            )
            if repaired[-1].end_s > seg.start_s:
                repaired[-1] = VideoSegment(
                    goal_name=prev.goal_name,
                    start_s=prev.start_s,
                    end_s=seg.start_s,
                    summary=prev.summary,
                    sentence_range=repaired[-1].sentence_range,
                    text=repaired[-1].text,
                )
        repaired.append(seg)
    return repaired


# ---------------------------------------------------------------------------
# Composition


def _windows(transcript, window_s: float):
    if not transcript:
        return
    start = transcript[0].start_s
    bucket = []
    for sentence in transcript:
        if sentence.start_s - start >= window_s and bucket:
            yield bucket
            bucket = []
            start = sentence.start_s
        bucket.append(sentence)
    if bucket:
        yield bucket


def segment_video(transcript, goals, gateway: Gateway, topic: str = "",
                  window_s: float | None = None) -> list[VideoSegment]:
    """Full three-stage segmentation; deterministic under the mock gateway.

    ``window_s`` optionally pre-splits long transcripts into windows that are
    summarized and retrieved independently, then rearranged globally.
    """
    if not transcript:
        return []
    if window_s:
        all_summaries: list[SegmentSummary] = []
        all_anchors: list[RetrievedAnchor] = []
        for window in _windows(transcript, window_s):
            summaries = summarize(window, goals, gateway, topic=topic)
            summaries = [
                SegmentSummary(s.goal_name, s.summary, len(all_summaries) + i)
                for i, s in enumerate(summaries)
            ]
            anchors = retrieve(summaries, window, gateway)
            all_summaries.extend(summaries)
            all_anchors.extend(anchors)
        return rearrange(all_anchors, transcript, all_summaries)
    summaries = summarize(transcript, goals, gateway, topic=topic)
    anchors = retrieve(summaries, transcript, gateway)
    return rearrange(anchors, transcript, summaries)
