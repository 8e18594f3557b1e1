import json
import math

import pytest
import requests as requests_lib

import foampilot.llm as llm_mod
from foampilot.llm import (EMBED_BATCH_SIZE, AuthError, ChatResponse,
                           DimensionMismatch, HashEmbedder, HttpChatProvider,
                           HttpEmbedder, MockChatProvider, MockScript,
                           ProviderConfig, ProviderError, ScriptExhausted,
                           ScriptExpectationError, ScriptStep,
                           to_wire_messages)
from foampilot.messages import Message, Role


class FakeResponse:
    def __init__(self, status_code, payload=None, text=None):
        self.status_code = status_code
        self._payload = payload
        if text is not None:
            self.text = text
        elif payload is not None:
            self.text = json.dumps(payload)
        else:
            self.text = ""

    def json(self):
        if self._payload is None:
            raise ValueError("no json body")
        return self._payload


class FakeHttp:
    """Stands in for requests.Session: returns queued responses, records
    every request, raises queued exceptions."""

    def __init__(self, items):
        self.items = list(items)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json,
                              "headers": headers, "timeout": timeout})
        if not self.items:
            raise AssertionError("unexpected extra HTTP request")
        item = self.items.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def chat_ok(content="hello", prompt_tokens=12, completion_tokens=3):
    return FakeResponse(200, {
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens,
                  "completion_tokens": completion_tokens},
    })


def embed_ok(batch_size, dim=4, shuffle=False):
    rows = [{"index": i, "embedding": [float(i)] * (dim - 1) + [1.0]}
            for i in range(batch_size)]
    if shuffle:
        rows = rows[::-1]
    return FakeResponse(200, {"object": "list", "data": rows})


def fast_config(**kw):
    kw.setdefault("base_url", "https://api.example.test/v1")
    kw.setdefault("api_key", "sk-sekret-123")
    kw.setdefault("backoff_base", 0.0)
    return ProviderConfig(**kw)


MSGS = [Message(Role.SYSTEM, "be brief"), Message(Role.USER, "hi")]


class TestProviderConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ProviderConfig(temperature=-0.1)
        with pytest.raises(ValueError):
            ProviderConfig(max_retries=-1)

    def test_api_key_not_in_repr(self):
        cfg = ProviderConfig(base_url="https://x", api_key="sk-sekret-123")
        assert "sk-sekret-123" not in repr(cfg)

    def test_defaults(self):
        cfg = ProviderConfig()
        assert cfg.chat_model == "gpt-4o"
        assert cfg.embed_model == "text-embedding-ada-002"
        assert cfg.temperature == 0.0
        assert cfg.max_retries == 2


class TestWireFormat:
    def test_roles_map_directly(self):
        wire = to_wire_messages(MSGS)
        assert wire == [{"role": "system", "content": "be brief"},
                        {"role": "user", "content": "hi"}]

    def test_tool_observation_becomes_prefixed_user(self):
        wire = to_wire_messages([Message(Role.TOOL_OBSERVATION, "exit 0")])
        assert wire == [{"role": "user", "content": "Observation: exit 0"}]


class TestHttpChatProvider:
    def test_happy_path_request_shape(self):
        http = FakeHttp([chat_ok("fine")])
        provider = HttpChatProvider(fast_config(), session=http)
        resp = provider.complete(MSGS)
        assert resp == ChatResponse("fine", 12, 3)
        req = http.requests[0]
        assert req["url"] == "https://api.example.test/v1/chat/completions"
        assert req["headers"]["Authorization"] == "Bearer sk-sekret-123"
        assert req["json"]["model"] == "gpt-4o"
        assert req["json"]["temperature"] == 0.0
        assert req["json"]["messages"] == to_wire_messages(MSGS)

    def test_base_url_trailing_slash(self):
        http = FakeHttp([chat_ok()])
        provider = HttpChatProvider(fast_config(base_url="https://h/v1/"),
                                    session=http)
        provider.complete(MSGS)
        assert http.requests[0]["url"] == "https://h/v1/chat/completions"

    def test_requires_base_url(self):
        with pytest.raises(ValueError):
            HttpChatProvider(ProviderConfig())

    def test_empty_messages_rejected(self):
        provider = HttpChatProvider(fast_config(), session=FakeHttp([]))
        with pytest.raises(ValueError):
            provider.complete([])

    def test_retries_on_429_then_succeeds(self):
        http = FakeHttp([FakeResponse(429, text="slow down"), chat_ok("ok")])
        provider = HttpChatProvider(fast_config(max_retries=2), session=http)
        assert provider.complete(MSGS).text == "ok"
        assert len(http.requests) == 2

    def test_retries_on_500_then_succeeds(self):
        http = FakeHttp([FakeResponse(503, text="overloaded"), chat_ok("ok")])
        provider = HttpChatProvider(fast_config(max_retries=1), session=http)
        assert provider.complete(MSGS).text == "ok"

    def test_exhausted_retries_raise_provider_error(self):
        http = FakeHttp([FakeResponse(500, text="boom")] * 3)
        provider = HttpChatProvider(fast_config(max_retries=2), session=http)
        with pytest.raises(ProviderError) as exc:
            provider.complete(MSGS)
        assert len(http.requests) == 3  # 1 initial + 2 retries
        assert "after 3 attempt(s)" in str(exc.value)
        assert exc.value.status == 500
        assert exc.value.body_excerpt == "boom"

    def test_max_retries_zero_means_one_attempt(self):
        http = FakeHttp([FakeResponse(429, text="later")])
        provider = HttpChatProvider(fast_config(max_retries=0), session=http)
        with pytest.raises(ProviderError):
            provider.complete(MSGS)
        assert len(http.requests) == 1

    @pytest.mark.parametrize("status", [401, 403])
    def test_auth_errors_never_retry(self, status):
        http = FakeHttp([FakeResponse(status, text="denied")])
        provider = HttpChatProvider(fast_config(max_retries=5), session=http)
        with pytest.raises(AuthError) as exc:
            provider.complete(MSGS)
        assert len(http.requests) == 1
        assert exc.value.status == status
        assert "sk-sekret-123" not in str(exc.value)

    def test_client_error_does_not_retry(self):
        http = FakeHttp([FakeResponse(400, text="bad request")])
        provider = HttpChatProvider(fast_config(max_retries=3), session=http)
        with pytest.raises(ProviderError):
            provider.complete(MSGS)
        assert len(http.requests) == 1

    def test_transport_errors_retry(self):
        http = FakeHttp([requests_lib.ConnectionError("refused"), chat_ok("up")])
        provider = HttpChatProvider(fast_config(max_retries=1), session=http)
        assert provider.complete(MSGS).text == "up"

    def test_backoff_schedule(self, monkeypatch):
        sleeps = []
        monkeypatch.setattr(llm_mod.time, "sleep", sleeps.append)
        http = FakeHttp([FakeResponse(429)] * 3)
        cfg = fast_config(max_retries=2, backoff_base=1.0, backoff_factor=2.0)
        with pytest.raises(ProviderError):
            HttpChatProvider(cfg, session=http).complete(MSGS)
        assert sleeps == [1.0, 2.0]

    def test_malformed_body_raises(self):
        http = FakeHttp([FakeResponse(200, {"unexpected": True})])
        provider = HttpChatProvider(fast_config(), session=http)
        with pytest.raises(ProviderError):
            provider.complete(MSGS)

    def test_non_json_200_raises(self):
        http = FakeHttp([FakeResponse(200, text="<html>oops</html>")])
        provider = HttpChatProvider(fast_config(), session=http)
        with pytest.raises(ProviderError):
            provider.complete(MSGS)


class TestHttpEmbedder:
    def test_batching_at_64(self):
        texts = [f"doc {i}" for i in range(130)]
        http = FakeHttp([embed_ok(64), embed_ok(64), embed_ok(2)])
        out = HttpEmbedder(fast_config(), session=http).embed(texts)
        assert len(out) == 130
        assert len(http.requests) == 3
        sizes = [len(r["json"]["input"]) for r in http.requests]
        assert sizes == [64, 64, 2]
        assert http.requests[0]["url"].endswith("/embeddings")
        assert http.requests[0]["json"]["model"] == "text-embedding-ada-002"

    def test_exact_batch_boundary(self):
        texts = ["x"] * EMBED_BATCH_SIZE
        http = FakeHttp([embed_ok(EMBED_BATCH_SIZE)])
        out = HttpEmbedder(fast_config(), session=http).embed(texts)
        assert len(out) == EMBED_BATCH_SIZE
        assert len(http.requests) == 1

    def test_rows_resorted_by_index(self):
        http = FakeHttp([embed_ok(3, shuffle=True)])
        out = HttpEmbedder(fast_config(), session=http).embed(["a", "b", "c"])
        assert out[0][0] == 0.0 and out[2][0] == 2.0

    def test_dimension_mismatch_detected(self):
        rows = [{"index": 0, "embedding": [1.0, 0.0]},
                {"index": 1, "embedding": [1.0, 0.0, 0.0]}]
        http = FakeHttp([FakeResponse(200, {"data": rows})])
        with pytest.raises(DimensionMismatch):
            HttpEmbedder(fast_config(), session=http).embed(["a", "b"])

    def test_count_mismatch_detected(self):
        http = FakeHttp([embed_ok(1)])
        with pytest.raises(ProviderError):
            HttpEmbedder(fast_config(), session=http).embed(["a", "b"])

    def test_rejects_empty_inputs(self):
        embedder = HttpEmbedder(fast_config(), session=FakeHttp([]))
        with pytest.raises(ValueError):
            embedder.embed([])
        with pytest.raises(ValueError):
            embedder.embed(["ok", ""])


class TestMockScript:
    def test_from_obj_list_of_strings(self):
        script = MockScript.from_obj(["one", "two"])
        assert script.steps == [ScriptStep("one"), ScriptStep("two")]
        assert script.repeat is False

    def test_from_obj_dict_with_expectations(self):
        script = MockScript.from_obj({
            "steps": [{"response": "r1", "expect_substring": "needle"}, "r2"],
            "repeat": True,
        })
        assert script.steps[0].expect_substring == "needle"
        assert script.steps[1].expect_substring is None
        assert script.repeat is True

    def test_from_json_file(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"steps": ["a", "b"]}))
        script = MockScript.from_json_file(path)
        assert [s.response for s in script.steps] == ["a", "b"]

    def test_empty_script_rejected(self):
        with pytest.raises(ValueError):
            MockScript(steps=[])


class TestMockChatProvider:
    def test_ordered_replay(self):
        provider = MockChatProvider(MockScript.from_obj(["first", "second"]))
        assert provider.complete(MSGS).text == "first"
        assert provider.complete(MSGS).text == "second"
        assert provider.calls == 2

    def test_exhaustion_is_a_provider_error(self):
        provider = MockChatProvider(MockScript.from_obj(["only"]))
        provider.complete(MSGS)
        with pytest.raises(ScriptExhausted):
            provider.complete(MSGS)
        assert issubclass(ScriptExhausted, ProviderError)

    def test_repeat_wraps_around(self):
        provider = MockChatProvider(
            MockScript.from_obj({"steps": ["a", "b"], "repeat": True}))
        outs = [provider.complete(MSGS).text for _ in range(5)]
        assert outs == ["a", "b", "a", "b", "a"]

    def test_expectation_satisfied(self):
        provider = MockChatProvider(MockScript.from_obj(
            {"steps": [{"response": "ok", "expect_substring": "be brief"}]}))
        assert provider.complete(MSGS).text == "ok"

    def test_expectation_miss_raises_assertion(self):
        provider = MockChatProvider(MockScript.from_obj(
            {"steps": [{"response": "ok", "expect_substring": "absent needle"}]}))
        with pytest.raises(ScriptExpectationError):
            provider.complete(MSGS)
        assert issubclass(ScriptExpectationError, AssertionError)

    def test_expectation_sees_all_messages(self):
        provider = MockChatProvider(MockScript.from_obj(
            {"steps": [{"response": "ok", "expect_substring": "hi"}]}))
        assert provider.complete(MSGS).text == "ok"


class TestHashEmbedder:
    def test_dimension_and_unit_norm(self):
        embedder = HashEmbedder()
        (vec,) = embedder.embed(["the quick brown fox"])
        assert len(vec) == 256
        assert math.isclose(sum(x * x for x in vec), 1.0, rel_tol=1e-9)

    def test_deterministic(self):
        embedder = HashEmbedder()
        assert embedder.embed(["same text"]) == embedder.embed(["same text"])

    def test_case_insensitive_tokens(self):
        embedder = HashEmbedder(dim=32)
        a, b = embedder.embed(["FlameletModel", "flameletmodel"])
        assert a == b

    def test_word_overlap_drives_similarity(self):
        embedder = HashEmbedder()
        q, near, far = embedder.embed([
            "pyrolysis front tracking model",
            "the pyrolysis front tracking model reads coefficients",
            "unrelated mesh motion solver text",
        ])
        dot_near = sum(a * b for a, b in zip(q, near))
        dot_far = sum(a * b for a, b in zip(q, far))
        assert dot_near > dot_far

    def test_degenerate_text_still_unit(self):
        (vec,) = HashEmbedder(dim=8).embed(["!!!"])
        assert vec[0] == 1.0 and all(x == 0.0 for x in vec[1:])

    def test_rejects_empty_list_and_bad_dim(self):
        with pytest.raises(ValueError):
            HashEmbedder().embed([])
        with pytest.raises(ValueError):
            HashEmbedder(dim=0)
