"""Command-line entry points for the offline pipeline, replay, eval, and server."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .dsl import build_queue, compile_document, parse_document, serialize_document
from .errors import VideotutorError
from .evaluation import (
    intent_metrics,
    load_labeled_utterances,
    render_report,
    report,
    segmentation_accuracy,
)
from .gateway import Gateway
from .ingestion import load_code, load_config, load_transcript
from .knowledge import KnowledgeItem, summarize_knowledge
from .pipeline import build_assets, build_session, domains_for, replay_session
from .planner import MovePlan, PlannerHistory, plan
from .segmentation import VideoSegment, segment_video
from .student_model import StudentStore, mastery_of


def _gateway(mock: str | None) -> Gateway:
    if mock:
        return Gateway.mock(mock)
    return Gateway.live()


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text)


@click.group()
def main():
    """Turn programming-video transcripts into tutoring sessions."""


@main.command()
@click.option("--transcript", "transcript_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mock", "mock_script", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--offline", is_flag=True, default=False, help="Forbid remote fetches.")
@click.option("--window-s", type=float, default=None,
              help="Pre-split long transcripts into windows of this many seconds.")
def segment(transcript_path, config_path, mock_script, out, offline, window_s):
    """Segment a transcript by learning goals."""
    config = load_config(config_path, offline=offline)
    transcript = load_transcript(transcript_path, offline=offline)
    gateway = _gateway(mock_script)
    segments = segment_video(transcript, config.enabled_goals(), gateway,
                             topic=config.topic, window_s=window_s)
    _write_or_print(json.dumps([s.to_dict() for s in segments], indent=2,
                               ensure_ascii=False), out)


@main.command()
@click.option("--segments", "segments_path", required=True, type=click.Path(exists=True),
              help="Segment JSON from `segment` (category/start/end entries).")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mock", "mock_script", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--offline", is_flag=True, default=False)
def extract(segments_path, config_path, mock_script, out, offline):
    """Extract templated knowledge per segment (keyed by segment)."""
    config = load_config(config_path, offline=offline)
    transcript = load_transcript(config.transcript_source, offline=offline)
    code = load_code(config.code_source, config.video_type, offline=offline) \
        if config.code_source else None
    gateway = _gateway(mock_script)

    raw_segments = json.loads(Path(segments_path).read_text(encoding="utf-8"))
    segments = []
    for row in raw_segments:
        seg = VideoSegment.from_full_dict(row)
        if not seg.text:
            covered = [s for s in transcript
                       if seg.start_s <= s.start_s and s.end_s <= seg.end_s + 1e-9]
            seg = VideoSegment(
                goal_name=seg.goal_name, start_s=seg.start_s, end_s=seg.end_s,
                summary=seg.summary,
                sentence_range=(covered[0].index, covered[-1].index) if covered else (0, 0),
                text=" ".join(s.text for s in covered),
            )
        segments.append(seg)

    output = {}
    for seg in segments:
        result = summarize_knowledge(seg, code, gateway,
                                     domains=domains_for(config.video_type),
                                     max_items=config.max_knowledge_items,
                                     topic=config.topic)
        output[seg.key] = {
            "segment": seg.to_full_dict(),
            "items": [item.to_dict() for item in result.items],
            "rejections": [{"text": raw, "reason": reason}
                           for raw, reason in result.rejections],
        }
    _write_or_print(json.dumps(output, indent=2, ensure_ascii=False), out)


@main.command("plan")
@click.option("--knowledge", "knowledge_path", required=True, type=click.Path(exists=True),
              help="Knowledge JSON from `extract`.")
@click.option("--student", "student_path", type=click.Path(exists=True), default=None,
              help="Persisted student model JSON; omitted = fresh student.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@click.option("--offline", is_flag=True, default=False)
def plan_command(knowledge_path, student_path, config_path, out, offline):
    """Plan mentor moves for extracted knowledge."""
    from .student_model import StudentModel

    config = load_config(config_path, offline=offline)
    data = json.loads(Path(knowledge_path).read_text(encoding="utf-8"))
    gateway = Gateway.mock([])  # embeddings only; text entries unused here

    mastery = {}
    if student_path:
        model = StudentModel.from_dict(
            json.loads(Path(student_path).read_text(encoding="utf-8")))
        for block in data.values():
            for row in block["items"]:
                value = mastery_of(model, row["anchor_span"], gateway)
                if value is not None:
                    mastery[row["id"]] = value

    history = PlannerHistory()
    plans = []
    for block in data.values():
        items = sorted((KnowledgeItem.from_dict(row) for row in block["items"]),
                       key=lambda k: k.order_index)
        if items:
            plans.extend(plan(items, mastery, history, config.thresholds,
                              default_mastery=config.bkt_defaults.p_mastery))
    _write_or_print(json.dumps([p.to_dict() for p in plans], indent=2,
                               ensure_ascii=False), out)


@main.command("compile-dsl")
@click.option("--plans", "plans_path", required=True, type=click.Path(exists=True))
@click.option("--knowledge", "knowledge_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), required=True)
@click.option("--offline", is_flag=True, default=False)
def compile_dsl(plans_path, knowledge_path, config_path, out, offline):
    """Compile plans + knowledge into the conversation DSL document."""
    config = load_config(config_path, offline=offline)
    knowledge_data = json.loads(Path(knowledge_path).read_text(encoding="utf-8"))
    plans = [MovePlan.from_dict(row)
             for row in json.loads(Path(plans_path).read_text(encoding="utf-8"))]
    knowledge = []
    segments = []
    for block in knowledge_data.values():
        segments.append(VideoSegment.from_full_dict(block["segment"]))
        knowledge.extend(KnowledgeItem.from_dict(row) for row in block["items"])
    document = compile_document(plans, knowledge, segments, config.action_set)
    Path(out).write_text(serialize_document(document), encoding="utf-8")
    click.echo(f"wrote {out} ({document.action_count()} actions)")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True))
@click.option("--mock", "mock_script", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--student", "student_id", default="student")
@click.option("--session-id", default="replay")
@click.option("--offline", is_flag=True, default=True)
def replay(config_path, events_path, mock_script, data_dir, student_id, session_id, offline):
    """Drive a whole scripted session offline and print a summary."""
    config = load_config(config_path, offline=offline)
    events = json.loads(Path(events_path).read_text(encoding="utf-8"))
    gateway = _gateway(mock_script)
    store = StudentStore(data_dir)
    session, assets = build_session(config, gateway, store, student_id,
                                    session_id=session_id, offline=offline)
    report_data = replay_session(session, events)
    summary = {
        "phase": report_data.phase,
        "messages_delivered": len(report_data.delivered),
        "history_len": report_data.history_len,
        "queue_left": len(session.queue),
        "stats": vars(report_data.stats),
        "segments": [s.to_dict() for s in assets.segments],
        "student_model": {
            c["anchor"]: round(c["p_mastery"], 6)
            for c in report_data.final_model["components"]
        },
    }
    click.echo(json.dumps(summary, indent=2, ensure_ascii=False))
    if report_data.phase != "done":
        sys.exit(1)


@main.group("eval")
def eval_group():
    """Evaluation harness commands."""


@eval_group.command("segmentation")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--margin", type=float, default=5.0, show_default=True)
def eval_segmentation(pred_path, gold_path, margin):
    """Segmentation accuracy at the given margin (segment JSON files)."""
    def load(path):
        return [VideoSegment.from_full_dict(row)
                for row in json.loads(Path(path).read_text(encoding="utf-8"))]

    accuracy = segmentation_accuracy(load(pred_path), load(gold_path), margin_s=margin)
    click.echo(json.dumps({"accuracy": accuracy, "margin_s": margin}))


@eval_group.command("intents")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="LabeledUtterance JSON array (predicted+annotated per row).")
@click.option("--gold", "gold_path", type=click.Path(exists=True), default=None,
              help="Optional separate annotated file; ids must align 1:1.")
def eval_intents(pred_path, gold_path):
    """Hierarchical intent metrics per layer."""
    rows = json.loads(Path(pred_path).read_text(encoding="utf-8"))
    if gold_path:
        gold_rows = {row["utterance_id"]: row
                     for row in json.loads(Path(gold_path).read_text(encoding="utf-8"))}
        for row in rows:
            gid = str(row["utterance_id"])
            if gid not in gold_rows:
                raise click.ClickException(f"gold file missing utterance {gid}")
            row["annotated"] = gold_rows[gid]["annotated"]
    pairs = load_labeled_utterances(rows)
    result = {
        layer: intent_metrics(pairs, layer).macro
        for layer in ("knowledge", "method", "action", "interaction")
    }
    click.echo(json.dumps(result, indent=2))
    click.echo(render_report(report({"corpus": pairs})), err=True)


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data", "data_dir", required=True, type=click.Path())
@click.option("--mock", "mock_script", type=click.Path(exists=True), default=None)
@click.option("--auth-token", default=None)
@click.option("--allow-remote-sources", is_flag=True, default=False,
              help="Let session configs fetch transcripts/code over HTTP.")
def serve(port, host, data_dir, mock_script, auth_token, allow_remote_sources):
    """Run the tutoring service."""
    import uvicorn

    from .service import create_app

    if mock_script:
        def factory():
            return Gateway.mock(mock_script)
    else:
        def factory():
            return Gateway.live()

    app = create_app(data_dir, factory, auth_token=auth_token,
                     offline=not allow_remote_sources)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
