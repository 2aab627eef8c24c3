"""Per-student mastery tracking over knowledge components.

Each component is a four-parameter probabilistic state (mastery, transit,
slip, guess). Observed correctness conditions the mastery estimate:

    correct:    p' = p(1-slip) / (p(1-slip) + (1-p)guess)
    incorrect:  p' = p·slip   / (p·slip   + (1-p)(1-guess))

followed by the standard transit step p ← p' + (1-p')·transit (a transit of 0
reproduces the bare conditioning). Components are keyed by their anchor text's
embedding: an observation lands on the nearest component within the cosine
threshold, or creates a new one from the configured defaults.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateUpdateError, GatewayError, StoreError
from .gateway import Gateway, cosine
from .ingestion import BktDefaults

DEFAULT_SIMILARITY_THRESHOLD = 0.80


class SignalKind(str, Enum):
    VIDEO = "video"        # post-viewing guidance
    RESPONSE = "response"  # progression cue
    ERROR = "error"        # corrective feedback
    HELP = "help"          # responsive assistance


@dataclass(frozen=True)
class Signal:
    kind: SignalKind
    timestamp: float
    detail: str = ""  # failing code text for error, question text for help


class ObservationOutcome(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


@dataclass(frozen=True)
class Observation:
    outcome: ObservationOutcome
    source_signal: Signal
    knowledge_id: str


@dataclass(frozen=True)
class KnowledgeComponentState:
    anchor_text: str
    embedding: tuple
    p_mastery: float
    p_transit: float
    p_slip: float
    p_guess: float
    attempts: int = 0
    last_updated: float = 0.0
    aliases: tuple = ()

    def __post_init__(self):
        for name in ("p_mastery", "p_transit", "p_slip", "p_guess"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.p_slip + self.p_guess >= 1.0:
            raise ValueError(
                f"p_slip + p_guess must stay below 1 (got {self.p_slip} + {self.p_guess}); "
                "updates would be non-informative or inverted"
            )


def condition_mastery(p: float, p_slip: float, p_guess: float, correct: bool) -> float:
    """Bare Bayesian conditioning of the mastery estimate on one outcome."""
    if correct:
        numerator = p * (1.0 - p_slip)
        denominator = numerator + (1.0 - p) * p_guess
    else:
        numerator = p * p_slip
        denominator = numerator + (1.0 - p) * (1.0 - p_guess)
    if denominator == 0.0:
        raise DegenerateUpdateError(
            f"zero-probability evidence (p={p}, slip={p_slip}, guess={p_guess}, "
            f"correct={correct})"
        )
    return numerator / denominator


def apply_transit(p: float, p_transit: float) -> float:
    """Learning-opportunity step: unknown mass transitions at rate p_transit."""
    return p + (1.0 - p) * p_transit


def bkt_update(state: KnowledgeComponentState, obs: Observation) -> KnowledgeComponentState:
    """Condition mastery on one observation, then apply the transit step."""
    try:
        posterior = condition_mastery(
            state.p_mastery, state.p_slip, state.p_guess,
            obs.outcome is ObservationOutcome.CORRECT,
        )
    except DegenerateUpdateError as exc:
        raise DegenerateUpdateError(f"{state.anchor_text!r}: {exc}") from exc
    posterior = apply_transit(posterior, state.p_transit)
    return replace(
        state,
        p_mastery=min(1.0, max(0.0, posterior)),
        attempts=state.attempts + 1,
        last_updated=time.time(),
    )


def is_weak(p: float, thresholds) -> bool:
    """Goal-selection rule: mastery below the weak cut needs attention."""
    return p < thresholds.weak


def is_mastered(p: float, thresholds) -> bool:
    """Recurrence rule: knowledge above the strong cut is not re-taught."""
    return p > thresholds.strong


def should_fade(p: float, thresholds) -> bool:
    """Method-adaptation rule: above the fade cut, Coaching is favored over
    Modeling or Scaffolding."""
    return p > thresholds.fade


@dataclass
class StudentModel:
    student_id: str
    components: list = field(default_factory=list)
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    pending_observations: list = field(default_factory=list)  # (anchor_text, Observation)

    def nearest(self, embedding) -> tuple[int, float]:
        """Index and cosine of the closest component, or (-1, -2) when empty."""
        best_idx, best_sim = -1, -2.0
        vec = np.asarray(embedding)
        for i, comp in enumerate(self.components):
            sim = cosine(vec, np.asarray(comp.embedding))
            if sim > best_sim:
                best_idx, best_sim = i, sim
        return best_idx, best_sim

    def to_dict(self) -> dict:
        return {
            "student_id": self.student_id,
            "similarity_threshold": self.similarity_threshold,
            "components": [
                {
                    "anchor": c.anchor_text,
                    "embedding": list(c.embedding),
                    "p_mastery": c.p_mastery,
                    "p_transit": c.p_transit,
                    "p_slip": c.p_slip,
                    "p_guess": c.p_guess,
                    "attempts": c.attempts,
                    "last_updated": c.last_updated,
                    "aliases": list(c.aliases),
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudentModel":
        return cls(
            student_id=data["student_id"],
            similarity_threshold=float(
                data.get("similarity_threshold", DEFAULT_SIMILARITY_THRESHOLD)
            ),
            components=[
                KnowledgeComponentState(
                    anchor_text=row["anchor"],
                    embedding=tuple(row["embedding"]),
                    p_mastery=float(row["p_mastery"]),
                    p_transit=float(row["p_transit"]),
                    p_slip=float(row["p_slip"]),
                    p_guess=float(row["p_guess"]),
                    attempts=int(row.get("attempts", 0)),
                    last_updated=float(row.get("last_updated", 0.0)),
                    aliases=tuple(row.get("aliases", ())),
                )
                for row in data.get("components", [])
            ],
        )


def observe(model: StudentModel, anchor_text: str, obs: Observation,
            gateway: Gateway, defaults: BktDefaults | None = None) -> StudentModel:
    """Apply one observation to the component matching the anchor.

    Within the similarity threshold the existing component updates (its anchor
    text stays; the new phrasing is recorded as an alias); otherwise a fresh
    component initializes from the defaults and takes the update. When the
    embedding backend is down the observation is queued and replayed on the
    next successful call rather than dropped.
    """
    if not anchor_text:
        raise ValueError("anchor_text must be non-empty")
    defaults = defaults or BktDefaults()

    queued = list(model.pending_observations)
    model.pending_observations = []
    work = queued + [(anchor_text, obs)]
    for anchor, observation in work:
        try:
            embedding = gateway.embed(anchor)
        except GatewayError:
            model.pending_observations.append((anchor, observation))
            continue
        idx, sim = model.nearest(embedding)
        if idx >= 0 and sim >= model.similarity_threshold:
            comp = model.components[idx]
            if anchor != comp.anchor_text and anchor not in comp.aliases:
                comp = replace(comp, aliases=comp.aliases + (anchor,))
            model.components[idx] = bkt_update(comp, observation)
        else:
            fresh = KnowledgeComponentState(
                anchor_text=anchor,
                embedding=tuple(float(x) for x in embedding),
                p_mastery=defaults.p_mastery,
                p_transit=defaults.p_transit,
                p_slip=defaults.p_slip,
                p_guess=defaults.p_guess,
            )
            model.components.append(bkt_update(fresh, observation))
    return model


def mastery_of(model: StudentModel, anchor_text: str, gateway: Gateway) -> float | None:
    """Nearest component's mastery, or None when nothing is within threshold."""
    if not model.components or not anchor_text:
        return None
    embedding = gateway.embed(anchor_text)
    idx, sim = model.nearest(embedding)
    if idx >= 0 and sim >= model.similarity_threshold:
        return model.components[idx].p_mastery
    return None


# ---------------------------------------------------------------------------
# Persistence


class StudentStore:
    """One JSON document per student under ``<data_dir>/students``.

    Writes are atomic (temp file + fsync + rename) and happen before any ack
    leaves the service, so a crash never loses an acknowledged observation.
    Per-student locks serialize writers; reads ride on the same lock.
    """

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir) / "students"
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._cache: dict[str, StudentModel] = {}
        self.update_count = 0  # instrumentation: bumped on every observe

    def _lock_for(self, student_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(student_id, threading.Lock())

    def _path(self, student_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in student_id)
        return self.root / f"{safe}.json"

    def persist(self, model: StudentModel) -> None:
        path = self._path(model.student_id)
        tmp = path.with_suffix(".json.tmp")
        try:
            payload = json.dumps(model.to_dict(), ensure_ascii=False)
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreError(f"cannot persist student {model.student_id!r}: {exc}") from exc
        self._cache[model.student_id] = model

    def restore(self, student_id: str) -> StudentModel:
        """Stored model, or a fresh empty one for unknown students."""
        path = self._path(student_id)
        if not path.exists():
            return StudentModel(student_id=student_id)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreError(f"cannot restore student {student_id!r}: {exc}") from exc
        return StudentModel.from_dict(data)

    def observe(self, student_id: str, anchor_text: str, obs: Observation,
                gateway: Gateway, defaults: BktDefaults | None = None) -> StudentModel:
        """Observe-and-persist under the student's lock (write-ahead of any ack)."""
        with self._lock_for(student_id):
            model = self._cache.get(student_id) or self.restore(student_id)
            observe(model, anchor_text, obs, gateway, defaults)
            self.persist(model)
            self.update_count += 1
            return model

    def get(self, student_id: str) -> StudentModel:
        with self._lock_for(student_id):
            model = self._cache.get(student_id)
            if model is None:
                model = self.restore(student_id)
                self._cache[student_id] = model
            return model

    def drop_cache(self) -> None:
        """Forget in-memory state (crash simulation in tests)."""
        self._cache.clear()
