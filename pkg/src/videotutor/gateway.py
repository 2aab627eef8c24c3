"""Single boundary for text generation and embeddings.

Every LLM interaction in the engine flows through a :class:`Gateway`, which
delegates to either a live HTTP backend or a deterministic scripted mock.
No other module performs network I/O for generation or embedding.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .errors import GatewayError, MockScriptError

EMBED_DIM = 64

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024

# Which backend model serves which pipeline stage. Segmentation sees whole
# transcripts, so it defaults to the long-context model; everything else uses
# the standard one.
DEFAULT_MODEL_MAP = {
    "segmentation": "long_context",
    "default": "standard",
}


@dataclass(frozen=True)
class GenerationRequest:
    """One text-generation call.

    ``history`` is the running chat transcript as ``{"role", "text"}`` dicts;
    the system prompt is pinned separately and never trimmed away.
    """

    user_prompt: str
    system_prompt: str = ""
    history: tuple = ()
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stage: str = "default"

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")


def count_history_tokens(history) -> int:
    """Whitespace-token count over the history texts (approximation, by design)."""
    return sum(len(entry["text"].split()) for entry in history)


def trim_history(history, budget: int) -> list:
    """Drop oldest entries until the token count fits ``budget``.

    The system prompt lives outside the history, so it is always kept.
    """
    trimmed = list(history)
    while trimmed and count_history_tokens(trimmed) > budget:
        trimmed.pop(0)
    return trimmed


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# Mock backend


@dataclass
class MockScript:
    """Ordered scripted replies, consumed strictly front to back.

    Each entry is ``{"match": substring-or-"any", "reply": str}``. A call must
    hit the head entry's match; anything else is a script error, which keeps
    test fixtures honest about call order.
    """

    entries: list = field(default_factory=list)
    cursor: int = 0

    @classmethod
    def from_file(cls, path) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_list(data)

    @classmethod
    def from_list(cls, data) -> "MockScript":
        entries = []
        for i, row in enumerate(data):
            if "reply" not in row:
                raise MockScriptError(f"script entry {i} missing 'reply'")
            entries.append({"match": row.get("match", "any"), "reply": row["reply"]})
        return cls(entries=entries)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.entries)

    def next_reply(self, probe_text: str) -> str:
        if self.exhausted:
            raise MockScriptError(
                f"mock script exhausted; unmatched prompt starts: {probe_text[:80]!r}"
            )
        entry = self.entries[self.cursor]
        match = entry["match"]
        if match != "any" and match not in probe_text:
            raise MockScriptError(
                f"mock script entry {self.cursor} expects {match!r}; "
                f"prompt starts: {probe_text[:80]!r}"
            )
        self.cursor += 1
        return entry["reply"]


class MockTextBackend:
    """Deterministic generation backend driven by a :class:`MockScript`."""

    def __init__(self, script: MockScript):
        self.script = script
        self.calls: list[GenerationRequest] = []

    def generate(self, request: GenerationRequest) -> str:
        self.calls.append(request)
        probe = request.system_prompt + "\n" + request.user_prompt
        return self.script.next_reply(probe)


class MockEmbedBackend:
    """Hash-seeded embeddings: deterministic, and token overlap ⇒ cosine similarity.

    Each lowercase token maps to a fixed random vector seeded from its SHA-256;
    a text embeds as the normalized sum. Identical texts embed identically.
    """

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:4], "big")
            vec = np.random.RandomState(seed).standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        if not tokens:
            raise GatewayError("cannot embed empty text")
        total = np.zeros(self.dim)
        for token in tokens:
            total += self._token_vector(token)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            return total
        return total / norm


# ---------------------------------------------------------------------------
# Live backend (OpenAI-compatible HTTP API)

API_KEY_ENV = "VIDEOTUTOR_API_KEY"
API_BASE_ENV = "VIDEOTUTOR_API_BASE"
RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY_S = 1.0


class LiveBackend:
    """Chat-completions + embeddings over an OpenAI-compatible endpoint.

    Credentials come from the environment; bursts are serialized by a lock so
    a single process cannot hammer the quota.
    """

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 model_map: dict | None = None, embed_model: str = "text-embedding-3-small",
                 timeout_s: float = 60.0):
        self.base_url = (base_url or os.environ.get(API_BASE_ENV, "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key or os.environ.get(API_KEY_ENV) or os.environ.get("OPENAI_API_KEY")
        self.model_map = dict(DEFAULT_MODEL_MAP)
        if model_map:
            self.model_map.update(model_map)
        self.embed_model = embed_model
        self.timeout_s = timeout_s
        self._lock = threading.Lock()

    def _headers(self) -> dict:
        if not self.api_key:
            raise GatewayError(f"no API key: set {API_KEY_ENV} or OPENAI_API_KEY")
        return {"Authorization": f"Bearer {self.api_key}"}

    def _post_with_retry(self, url: str, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            try:
                with self._lock:
                    resp = httpx.post(url, json=payload, headers=self._headers(),
                                      timeout=self.timeout_s)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt + 1 < RETRY_ATTEMPTS:
                    time.sleep(RETRY_BASE_DELAY_S * (2 ** attempt))
        raise GatewayError(f"backend failed after {RETRY_ATTEMPTS} attempts: {last_error}")

    def generate(self, request: GenerationRequest) -> str:
        model = self.model_map.get(request.stage, self.model_map["default"])
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        for entry in request.history:
            role = "assistant" if entry["role"] in ("assistant", "mentor") else "user"
            messages.append({"role": role, "content": entry["text"]})
        messages.append({"role": "user", "content": request.user_prompt})
        data = self._post_with_retry(f"{self.base_url}/chat/completions", {
            "model": model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError) as exc:
            raise GatewayError(f"malformed completion response: {exc}") from exc

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise GatewayError("cannot embed empty text")
        data = self._post_with_retry(f"{self.base_url}/embeddings", {
            "model": self.embed_model,
            "input": text,
        })
        try:
            return np.asarray(data["data"][0]["embedding"], dtype=float)
        except (KeyError, IndexError) as exc:
            raise GatewayError(f"malformed embedding response: {exc}") from exc


# ---------------------------------------------------------------------------
# Facade


class Gateway:
    """Generation + embedding facade shared by the whole pipeline.

    Sessions share one gateway; every request is independent. The embedding
    cache is purely an optimization (embeddings are deterministic per backend).
    """

    def __init__(self, text_backend, embed_backend, history_budget: int = 3000):
        self.text_backend = text_backend
        self.embed_backend = embed_backend
        self.history_budget = history_budget
        self._embed_cache: dict[str, np.ndarray] = {}
        self.generate_calls = 0
        self.embed_calls = 0

    @classmethod
    def mock(cls, script: MockScript | list | str | Path) -> "Gateway":
        if isinstance(script, (str, Path)):
            script = MockScript.from_file(script)
        elif isinstance(script, list):
            script = MockScript.from_list(script)
        return cls(MockTextBackend(script), MockEmbedBackend())

    @classmethod
    def live(cls, **kwargs) -> "Gateway":
        backend = LiveBackend(**kwargs)
        return cls(backend, backend)

    def generate(self, request: GenerationRequest) -> str:
        self.generate_calls += 1
        trimmed = trim_history(request.history, self.history_budget)
        if len(trimmed) != len(request.history):
            request = GenerationRequest(
                user_prompt=request.user_prompt,
                system_prompt=request.system_prompt,
                history=tuple(trimmed),
                temperature=request.temperature,
                max_tokens=request.max_tokens,
                stage=request.stage,
            )
        return self.text_backend.generate(request)

    def generate_stream(self, request: GenerationRequest):
        """Yield reply chunks. Backends without native streaming yield once."""
        stream = getattr(self.text_backend, "generate_stream", None)
        if stream is not None:
            yield from stream(request)
        else:
            yield self.generate(request)

    def embed(self, text: str) -> np.ndarray:
        cached = self._embed_cache.get(text)
        if cached is not None:
            return cached
        self.embed_calls += 1
        vec = self.embed_backend.embed(text)
        self._embed_cache[text] = vec
        return vec
