"""End-to-end composition: config → segments → knowledge → plans → DSL → session.

The student model gates the pipeline in three ways: goals are summarized with
per-goal mastery (weak goals flagged for the expert), knowledge components the
student already mastered are dropped before planning, and remaining mastery
probabilities steer the planner's move choices.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field

from .dsl import DslDocument, build_queue, compile_document
from .errors import SessionError
from .gateway import Gateway
from .ingestion import (
    CodeArtifact,
    ExpertConfig,
    VideoType,
    load_code,
    load_transcript,
)
from .knowledge import Domain, reindex_items, summarize_knowledge
from .orchestrator import InboundEvent, Session
from .planner import PlannerHistory, plan
from .segmentation import segment_video
from .student_model import StudentModel, StudentStore, mastery_of

log = logging.getLogger(__name__)


def domains_for(video_type: VideoType) -> tuple:
    if video_type is VideoType.CONCEPT:
        return (Domain.CONCEPT,)
    if video_type is VideoType.PROGRAMMING:
        return (Domain.PROGRAMMING,)
    return (Domain.PROGRAMMING, Domain.CONCEPT)


@dataclass
class SessionAssets:
    segments: list
    knowledge: list
    plans: list
    document: DslDocument
    rejections: list = field(default_factory=list)
    dropped: list = field(default_factory=list)       # mastered items skipped
    goal_summary: dict = field(default_factory=dict)  # goal -> mastery summary


def build_assets(config: ExpertConfig, gateway: Gateway, model: StudentModel,
                 transcript=None, code: CodeArtifact | None = None,
                 window_s: float | None = None, offline: bool = False) -> SessionAssets:
    if transcript is None:
        transcript = load_transcript(config.transcript_source, offline=offline)
    if code is None:
        if config.code_source:
            code = load_code(config.code_source, config.video_type, offline=offline)
        else:
            code = CodeArtifact()

    segments = segment_video(transcript, config.enabled_goals(), gateway,
                             topic=config.topic, window_s=window_s)

    domains = domains_for(config.video_type)
    knowledge = []
    rejections = []
    dropped = []
    mastery_map: dict[str, float] = {}
    goal_mastery: dict[str, list] = {g: [] for g in config.goal_names()}

    for segment in segments:
        result = summarize_knowledge(
            segment, code, gateway,
            domains=domains,
            max_items=config.max_knowledge_items,
            topic=config.topic,
        )
        rejections.extend(result.rejections)

        kept = []
        for item in result.items:
            mastery = mastery_of(model, item.anchor_span, gateway)
            goal_mastery.setdefault(segment.goal_name, []).append(
                mastery if mastery is not None else config.bkt_defaults.p_mastery
            )
            if mastery is not None and mastery > config.thresholds.strong:
                dropped.append(item)
                log.info("skipping mastered knowledge %r (p=%.3f)", item.anchor_span, mastery)
                continue
            kept.append((item, mastery))

        reindexed = reindex_items([item for item, _ in kept])
        for item, (_, mastery) in zip(reindexed, kept):
            knowledge.append(item)
            if mastery is not None:
                mastery_map[item.id] = mastery

    history = PlannerHistory()
    plans = []
    by_segment: dict[str, list] = {}
    for item in knowledge:
        by_segment.setdefault(item.segment_ref, []).append(item)
    for segment in segments:
        items = sorted(by_segment.get(segment.key, []), key=lambda k: k.order_index)
        if not items:
            continue
        plans.extend(plan(items, mastery_map, history, config.thresholds,
                          default_mastery=config.bkt_defaults.p_mastery))

    document = compile_document(plans, knowledge, segments, config.action_set)

    goal_summary = {}
    for goal, values in goal_mastery.items():
        mean = sum(values) / len(values) if values else config.bkt_defaults.p_mastery
        goal_summary[goal] = {
            "mean_mastery": mean,
            "weak": mean < config.thresholds.weak,
            "observed_items": len(values),
        }

    return SessionAssets(
        segments=segments,
        knowledge=knowledge,
        plans=plans,
        document=document,
        rejections=rejections,
        dropped=dropped,
        goal_summary=goal_summary,
    )


def build_session(config: ExpertConfig, gateway: Gateway, store: StudentStore,
                  student_id: str, session_id: str | None = None,
                  transcript=None, code: CodeArtifact | None = None,
                  window_s: float | None = None, offline: bool = False,
                  assets: SessionAssets | None = None) -> tuple[Session, SessionAssets]:
    """Restore the student, run the pipeline, and return a ready session."""
    session_id = session_id or uuid.uuid4().hex[:12]
    model = store.get(student_id)
    if assets is None:
        assets = build_assets(config, gateway, model, transcript=transcript, code=code,
                              window_s=window_s, offline=offline)
    if code is None:
        if config.code_source:
            code = load_code(config.code_source, config.video_type, offline=offline)
        else:
            code = CodeArtifact()

    queue = build_queue(assets.document)
    session = Session(
        session_id=session_id,
        student_id=student_id,
        config=config,
        document=assets.document,
        queue=queue,
        knowledge_map={item.id: item for item in assets.knowledge},
        segments={segment.key: segment for segment in assets.segments},
        code_artifact=code,
        gateway=gateway,
        store=store,
        seed=session_id,
    )
    return session, assets


@dataclass
class ReplayReport:
    delivered: list
    stats: object
    phase: str
    history_len: int
    final_model: dict
    leftover_events: int


def replay_session(session: Session, events, max_steps: int = 10_000) -> ReplayReport:
    """Drive a session to completion from a scripted event list.

    Messages flow until the session blocks; then the next scripted event is
    applied (it may or may not unblock — corrective and help replies keep the
    queue where it is). Events left over after the farewell are applied as
    free chat.
    """
    pending_events = [e if isinstance(e, InboundEvent) else InboundEvent.from_dict(e)
                      for e in events]
    delivered = []
    cursor = 0
    for _ in range(max_steps):
        result = session.step()
        if result.status == "message":
            delivered.append(result.envelope)
            continue
        if result.status == "done":
            break
        if cursor >= len(pending_events):
            raise SessionError(
                f"session blocked in phase {session.phase.value} but the event "
                "script is exhausted"
            )
        outcome = session.handle_event(pending_events[cursor])
        cursor += 1
        if outcome.reply is not None:
            delivered.append(outcome.reply)
    else:
        raise SessionError(f"replay did not terminate within {max_steps} steps")

    leftover = pending_events[cursor:]
    for event in leftover:
        outcome = session.handle_event(event)
        if outcome.reply is not None:
            delivered.append(outcome.reply)

    final_model = session.store.get(session.student_id).to_dict()
    return ReplayReport(
        delivered=delivered,
        stats=session.stats,
        phase=session.phase.value,
        history_len=len(session.history),
        final_model=final_model,
        leftover_events=len(leftover),
    )
