import math

import numpy as np
import pytest

from videotutor.errors import GatewayError, MockScriptError
from videotutor.gateway import (
    Gateway,
    GenerationRequest,
    MockEmbedBackend,
    MockScript,
    cosine,
    count_history_tokens,
    trim_history,
)


def test_mock_script_replies_in_order():
    gateway = Gateway.mock([
        {"match": "Summarize", "reply": "[one]"},
        {"match": "any", "reply": "[two]"},
    ])
    assert gateway.generate(GenerationRequest(user_prompt="Summarize this")) == "[one]"
    assert gateway.generate(GenerationRequest(user_prompt="whatever")) == "[two]"


def test_mock_script_exhaustion_names_prompt():
    gateway = Gateway.mock([{"match": "any", "reply": "x"}])
    gateway.generate(GenerationRequest(user_prompt="first"))
    with pytest.raises(MockScriptError) as err:
        gateway.generate(GenerationRequest(user_prompt="second prompt text"))
    assert "second prompt" in str(err.value)


def test_mock_script_mismatch_is_error():
    gateway = Gateway.mock([{"match": "needle", "reply": "x"}])
    with pytest.raises(MockScriptError):
        gateway.generate(GenerationRequest(user_prompt="haystack only"))


def test_mock_script_missing_reply_rejected():
    with pytest.raises(MockScriptError):
        MockScript.from_list([{"match": "x"}])


def test_embed_deterministic_and_self_similar():
    backend = MockEmbedBackend()
    a = backend.embed("reorder the major category by median")
    b = backend.embed("reorder the major category by median")
    assert np.array_equal(a, b)
    assert cosine(a, b) == pytest.approx(1.0)


def test_embed_cosine_matches_independent_dot_product():
    backend = MockEmbedBackend()
    a = backend.embed("use fct_reorder on Major_category")
    b = backend.embed("use fct_reorder on the category column")
    # independent oracle: plain dot/norm arithmetic
    expected = float(sum(x * y for x, y in zip(a, b)) / (
        math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))))
    assert cosine(a, b) == pytest.approx(expected, abs=1e-12)
    # token overlap keeps paraphrases close, distinct topics far
    c = backend.embed("completely unrelated words about cooking pasta")
    assert cosine(a, b) > cosine(a, c)


def test_embed_empty_text_rejected():
    with pytest.raises(GatewayError):
        MockEmbedBackend().embed("   ")


def test_count_history_tokens():
    assert count_history_tokens([{"role": "user", "text": "a b c"}]) == 3
    assert count_history_tokens([]) == 0


def test_trim_history_drops_oldest_first():
    history = [
        {"role": "user", "text": "one two three"},
        {"role": "mentor", "text": "four five"},
        {"role": "user", "text": "six"},
    ]
    trimmed = trim_history(history, budget=3)
    assert trimmed == history[1:]
    # system prompt lives outside history, so trimming can never touch it
    assert trim_history(history, budget=0) == []


def test_gateway_trims_before_generate():
    captured = {}

    class Spy:
        def generate(self, request):
            captured["history"] = request.history
            return "ok"

    gateway = Gateway(Spy(), MockEmbedBackend(), history_budget=2)
    history = tuple(
        {"role": "user", "text": f"word{i} word{i}"} for i in range(3)
    )
    gateway.generate(GenerationRequest(user_prompt="hi", history=history))
    assert len(captured["history"]) == 1


def test_temperature_bounds():
    with pytest.raises(ValueError):
        GenerationRequest(user_prompt="x", temperature=2.5)


def test_embed_cache_counts_backend_calls_once():
    gateway = Gateway.mock([])
    gateway.embed("same text")
    gateway.embed("same text")
    assert gateway.embed_calls == 1


def test_live_backend_retries_then_succeeds(monkeypatch):
    import httpx

    from videotutor import gateway as gw

    calls = {"n": 0}

    class FakeResponse:
        def raise_for_status(self):
            return None

        def json(self):
            return {"choices": [{"message": {"content": "recovered"}}]}

    def flaky_post(url, **kwargs):
        calls["n"] += 1
        if calls["n"] < 3:
            raise httpx.ConnectError("down")
        return FakeResponse()

    monkeypatch.setattr(gw.httpx, "post", flaky_post)
    monkeypatch.setattr(gw.time, "sleep", lambda s: None)
    backend = gw.LiveBackend(api_key="test-key")
    assert backend.generate(GenerationRequest(user_prompt="hi")) == "recovered"
    assert calls["n"] == 3


def test_live_backend_gives_up_after_three_attempts(monkeypatch):
    import httpx

    from videotutor import gateway as gw

    calls = {"n": 0}

    def dead_post(url, **kwargs):
        calls["n"] += 1
        raise httpx.ConnectError("still down")

    monkeypatch.setattr(gw.httpx, "post", dead_post)
    monkeypatch.setattr(gw.time, "sleep", lambda s: None)
    backend = gw.LiveBackend(api_key="test-key")
    with pytest.raises(GatewayError):
        backend.generate(GenerationRequest(user_prompt="hi"))
    assert calls["n"] == 3


def test_network_io_confined_to_gateway_and_source_loading():
    # generation/embedding I/O lives in gateway.py alone; ingestion.py may
    # fetch transcript/code/config sources. No other module touches httpx.
    import pathlib

    import videotutor

    package_dir = pathlib.Path(videotutor.__file__).parent
    offenders = []
    for path in package_dir.glob("*.py"):
        text = path.read_text()
        if "import httpx" in text and path.name not in ("gateway.py", "ingestion.py"):
            offenders.append(path.name)
    assert offenders == []
