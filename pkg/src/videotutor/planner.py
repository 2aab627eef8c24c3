"""Mentor-move planning: assigns teaching moves to knowledge items.

The rules follow three principles — global skills before local ones,
increasing complexity, increasing diversity — gated by the student's mastery
probability for each knowledge item:

* first two encounters of a goal open with a single global move
  (Scaffolding, or Modeling once mastery passed the fade threshold);
* concept items pick one of {Scaffolding, Coaching, Articulation} by
  least-recently-used, Scaffolding dropping out above the fade threshold,
  with Reflection chained immediately after Coaching;
* programming procedural items follow the three-band scheme exactly:
  below weak → Scaffolding; weak..strong inclusive → Scaffolding then
  Coaching; above strong → Coaching only — and the segment's last
  programming item carries one final Reflection;
* programming declarative items choose between Scaffolding and Articulation.

Everything is deterministic: LRU ties break in fixed enum order. Exploration
is never planned; it exists only as the orchestrator's free-chat escape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .knowledge import Domain, Kind, KnowledgeItem


class MentorMove(str, Enum):
    MODELING = "Modeling"
    COACHING = "Coaching"
    SCAFFOLDING = "Scaffolding"
    ARTICULATION = "Articulation"
    REFLECTION = "Reflection"
    EXPLORATION = "Exploration"


# Fixed tie-break order for LRU choices.
_MOVE_ORDER = {move: i for i, move in enumerate(MentorMove)}

MAX_MOVES_PER_KNOWLEDGE = 3

# Appearance indices 0 and 1 count as "first knowledge" for a goal.
FIRST_KNOWLEDGE_MAX_INDEX = 1


@dataclass(frozen=True)
class MovePlan:
    knowledge_id: str
    moves: tuple
    rationale_tags: frozenset

    def to_dict(self) -> dict:
        return {
            "knowledge_id": self.knowledge_id,
            "moves": [m.value for m in self.moves],
            "rationale_tags": sorted(self.rationale_tags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MovePlan":
        return cls(
            knowledge_id=data["knowledge_id"],
            moves=tuple(MentorMove(m) for m in data["moves"]),
            rationale_tags=frozenset(data.get("rationale_tags", [])),
        )


@dataclass
class GoalHistory:
    appearance_count: int = 0
    last_used: dict = field(default_factory=dict)   # move -> sequence number
    use_counts: dict = field(default_factory=dict)  # move -> count


@dataclass
class PlannerHistory:
    """Per-goal move-usage bookkeeping. Caller-owned, passed in and returned."""

    goals: dict = field(default_factory=dict)
    clock: int = 0

    def goal(self, goal_name: str) -> GoalHistory:
        return self.goals.setdefault(goal_name, GoalHistory())

    def record(self, goal_name: str, moves) -> None:
        entry = self.goal(goal_name)
        for move in moves:
            self.clock += 1
            entry.last_used[move] = self.clock
            entry.use_counts[move] = entry.use_counts.get(move, 0) + 1

    def copy(self) -> "PlannerHistory":
        fresh = PlannerHistory(clock=self.clock)
        for name, entry in self.goals.items():
            fresh.goals[name] = GoalHistory(
                appearance_count=entry.appearance_count,
                last_used=dict(entry.last_used),
                use_counts=dict(entry.use_counts),
            )
        return fresh


def _lru_choice(candidates, goal_history: GoalHistory) -> MentorMove:
    """Least-recently-used move among candidates; never-used wins; ties break
    in enum order."""
    return min(
        candidates,
        key=lambda move: (goal_history.last_used.get(move, -1), _MOVE_ORDER[move]),
    )


def _plan_item(item: KnowledgeItem, p: float, appearance_index: int,
               goal_history: GoalHistory, thresholds) -> MovePlan:
    tags = set()

    if item.domain is Domain.PROGRAMMING and item.kind is Kind.PROCEDURAL:
        # Three-band scheme is categorical, including boundaries.
        tags.add("complexity")
        if p < thresholds.weak:
            moves = (MentorMove.SCAFFOLDING,)
        elif p <= thresholds.strong:
            moves = (MentorMove.SCAFFOLDING, MentorMove.COACHING)
        else:
            moves = (MentorMove.COACHING,)
            tags.add("fade_out")
        return MovePlan(knowledge_id=item.id, moves=moves, rationale_tags=frozenset(tags))

    if appearance_index <= FIRST_KNOWLEDGE_MAX_INDEX:
        tags.add("global_first")
        if p <= thresholds.fade:
            move = MentorMove.SCAFFOLDING
        else:
            move = MentorMove.MODELING
            tags.add("fade_out")
        return MovePlan(knowledge_id=item.id, moves=(move,), rationale_tags=frozenset(tags))

    if item.domain is Domain.PROGRAMMING:  # declarative
        candidates = [MentorMove.SCAFFOLDING, MentorMove.ARTICULATION]
    else:
        candidates = [MentorMove.SCAFFOLDING, MentorMove.COACHING, MentorMove.ARTICULATION]
    if p > thresholds.fade:
        candidates.remove(MentorMove.SCAFFOLDING)
        tags.add("fade_out")
    if len(candidates) > 1:
        tags.add("diversity")
    choice = _lru_choice(candidates, goal_history)

    moves = [choice]
    if choice is MentorMove.COACHING:
        # Self-assessment chains directly after observed practice.
        moves.append(MentorMove.REFLECTION)
    tags.add("complexity")
    return MovePlan(knowledge_id=item.id, moves=tuple(moves), rationale_tags=frozenset(tags))


def plan(knowledge, mastery: dict, history: PlannerHistory, thresholds,
         default_mastery: float = 0.1) -> list[MovePlan]:
    """Plan moves for one segment's ordered knowledge items.

    ``mastery`` maps knowledge id → probability; unknown ids are treated as
    fresh at ``default_mastery``. ``history`` is advanced in place: appearance
    counts and move recency feed the first-knowledge rule and LRU diversity.
    The segment's last programming item gets the single final Reflection.
    """
    plans: list[MovePlan] = []
    for item in knowledge:
        p = mastery.get(item.id, default_mastery)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"mastery for {item.id} outside [0, 1]: {p}")
        goal_key = _goal_key(item)
        entry = history.goal(goal_key)
        appearance_index = entry.appearance_count
        move_plan = _plan_item(item, p, appearance_index, entry, thresholds)
        entry.appearance_count += 1
        history.record(goal_key, move_plan.moves)
        plans.append(move_plan)

    if plans and knowledge[-1].domain is Domain.PROGRAMMING:
        last = plans[-1]
        if MentorMove.REFLECTION not in last.moves:
            plans[-1] = MovePlan(
                knowledge_id=last.knowledge_id,
                moves=last.moves + (MentorMove.REFLECTION,),
                rationale_tags=last.rationale_tags,
            )
            history.record(_goal_key(knowledge[-1]), (MentorMove.REFLECTION,))
    return plans


def _goal_key(item: KnowledgeItem) -> str:
    # Segment keys look like "<goal name> - <seconds>"; history tracks goals,
    # not individual segments.
    ref = item.segment_ref
    idx = ref.rfind(" - ")
    return ref[:idx] if idx != -1 else ref


@dataclass
class SegmentPlan:
    plans: list
    history: PlannerHistory


def plan_segment(segment_knowledge, mastery: dict, history: PlannerHistory,
                 config) -> SegmentPlan:
    """Plan one segment and return the advanced history alongside the plans."""
    working = history.copy()
    plans = plan(
        segment_knowledge,
        mastery,
        working,
        config.thresholds,
        default_mastery=config.bkt_defaults.p_mastery,
    )
    return SegmentPlan(plans=plans, history=working)
