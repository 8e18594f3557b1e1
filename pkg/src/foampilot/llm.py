"""Chat-completion and embedding clients over the OpenAI-compatible wire
format, plus deterministic mock providers for offline tests.

Real providers are reached via HTTP (``{base_url}/chat/completions`` and
``{base_url}/embeddings``, bearer auth). The mock chat provider replays a
fixed script and the mock embedder hashes tokens into a fixed-dimension
bag-of-words vector, so the whole agent stack runs without a network.
"""

from __future__ import annotations

import json
import math
import re
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .messages import Message, Role

EMBED_BATCH_SIZE = 64
HASH_EMBED_DIM = 256
DEFAULT_CHAT_MODEL = "gpt-4o"
DEFAULT_EMBED_MODEL = "text-embedding-ada-002"


class ProviderError(Exception):
    """Chat/embedding request failed after exhausting retries."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class AuthError(ProviderError):
    """Credentials rejected (HTTP 401/403); retrying cannot help."""


class DimensionMismatch(ProviderError):
    """Provider returned embedding vectors of inconsistent dimensions."""


class ScriptExhausted(ProviderError):
    """Mock script was consumed past its last step."""


class ScriptExpectationError(AssertionError):
    """A scripted step's expect_substring was not found in the request."""


@dataclass
class ProviderConfig:
    base_url: str = ""
    api_key: str = field(default="", repr=False)
    chat_model: str = DEFAULT_CHAT_MODEL
    embed_model: str = DEFAULT_EMBED_MODEL
    temperature: float = 0.0
    request_timeout: float = 120.0
    max_retries: int = 2
    # Backoff knobs are configurable so tests do not sleep for real seconds.
    backoff_base: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def to_wire_messages(messages: list[Message]) -> list[dict]:
    """Map transcript messages to the provider wire roles.

    Tool observations have no native role on this wire format; they are sent
    as user messages with an "Observation: " prefix, matching the format the
    system prompt teaches the model.
    """
    wire = []
    for m in messages:
        if m.role is Role.TOOL_OBSERVATION:
            wire.append({"role": "user", "content": "Observation: " + m.content})
        else:
            wire.append({"role": m.role.value, "content": m.content})
    return wire


def _post_with_retries(url: str, payload: dict, config: ProviderConfig,
                       session: requests.Session | None = None) -> dict:
    # Total attempts = 1 + max_retries; 401/403 abort immediately.
    post = (session or requests).post
    headers = {
        "Authorization": f"Bearer {config.api_key}",
        "Content-Type": "application/json",
    }
    attempts = 1 + config.max_retries
    last_error: str = ""
    last_status: int | None = None
    last_body = ""
    for attempt in range(1, attempts + 1):
        try:
            resp = post(url, json=payload, headers=headers,
                        timeout=config.request_timeout)
        except requests.RequestException as exc:
            last_error = f"transport error: {type(exc).__name__}"
            last_status = None
            last_body = ""
        else:
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError:
                    raise ProviderError("provider returned non-JSON body",
                                        status=200,
                                        body_excerpt=resp.text[:500])
            if resp.status_code in (401, 403):
                raise AuthError(f"authentication rejected (HTTP {resp.status_code})",
                                status=resp.status_code,
                                body_excerpt=resp.text[:500])
            last_status = resp.status_code
            last_body = resp.text[:500]
            last_error = f"HTTP {resp.status_code}"
            if not (resp.status_code == 429 or resp.status_code >= 500):
                break
        if attempt < attempts:
            time.sleep(config.backoff_base * config.backoff_factor ** (attempt - 1))
    raise ProviderError(f"request failed after {attempt} attempt(s): {last_error}",
                        status=last_status, body_excerpt=last_body)


class HttpChatProvider:
    """Chat completions against an OpenAI-compatible endpoint."""

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        if not config.base_url:
            raise ValueError("base_url required for HTTP provider")
        self.config = config
        self._session = session

    def complete(self, messages: list[Message]) -> ChatResponse:
        if not messages:
            raise ValueError("messages must be non-empty")
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.config.chat_model,
            "messages": to_wire_messages(messages),
            "temperature": self.config.temperature,
        }
        data = _post_with_retries(url, payload, self.config, self._session)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProviderError("malformed chat-completions response",
                                status=200, body_excerpt=json.dumps(data)[:500])
        usage = data.get("usage") or {}
        return ChatResponse(
            text=text if text is not None else "",
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


class HttpEmbedder:
    """Embeddings against an OpenAI-compatible endpoint, batched at 64."""

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        if not config.base_url:
            raise ValueError("base_url required for HTTP embedder")
        self.config = config
        self._session = session

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        for t in texts:
            if not t:
                raise ValueError("texts must each be non-empty")
        url = self.config.base_url.rstrip("/") + "/embeddings"
        out: list[list[float]] = []
        dim: int | None = None
        for start in range(0, len(texts), EMBED_BATCH_SIZE):
            batch = texts[start:start + EMBED_BATCH_SIZE]
            payload = {"model": self.config.embed_model, "input": batch}
            data = _post_with_retries(url, payload, self.config, self._session)
            try:
                rows = sorted(data["data"], key=lambda r: r["index"])
                vectors = [row["embedding"] for row in rows]
            except (KeyError, TypeError):
                raise ProviderError("malformed embeddings response",
                                    status=200, body_excerpt=json.dumps(data)[:500])
            if len(vectors) != len(batch):
                raise ProviderError(
                    f"embedding count mismatch: sent {len(batch)}, got {len(vectors)}")
            for v in vectors:
                if dim is None:
                    dim = len(v)
                elif len(v) != dim:
                    raise DimensionMismatch(
                        f"inconsistent embedding dimensions: {dim} vs {len(v)}")
                out.append([float(x) for x in v])
        return out


def complete(messages: list[Message], config: ProviderConfig) -> ChatResponse:
    return HttpChatProvider(config).complete(messages)


def embed(texts: list[str], config: ProviderConfig) -> list[list[float]]:
    return HttpEmbedder(config).embed(texts)


@dataclass(frozen=True)
class ScriptStep:
    response: str
    expect_substring: str | None = None


@dataclass
class MockScript:
    steps: list[ScriptStep]
    # When set, the script loops back to step 0 after the last step instead
    # of exhausting; useful for long interactive demos.
    repeat: bool = False

    def __post_init__(self):
        if not self.steps:
            raise ValueError("mock script must have at least one step")

    @classmethod
    def from_obj(cls, obj) -> "MockScript":
        if isinstance(obj, dict):
            raw_steps = obj.get("steps", [])
            repeat = bool(obj.get("repeat", False))
        else:
            raw_steps = obj
            repeat = False
        steps = []
        for raw in raw_steps:
            if isinstance(raw, str):
                steps.append(ScriptStep(response=raw))
            else:
                steps.append(ScriptStep(response=raw["response"],
                                        expect_substring=raw.get("expect_substring")))
        return cls(steps=steps, repeat=repeat)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "MockScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_obj(json.load(fh))


class MockChatProvider:
    """Strictly ordered replay of a MockScript.

    Each complete() consumes the next step. A step with expect_substring
    set requires that needle somewhere in the flattened request messages;
    a miss raises loudly rather than skipping.
    """

    def __init__(self, script: MockScript):
        self.script = script
        self.calls = 0

    def complete(self, messages: list[Message]) -> ChatResponse:
        idx = self.calls
        if idx >= len(self.script.steps):
            if self.script.repeat:
                idx = idx % len(self.script.steps)
            else:
                raise ScriptExhausted(
                    f"mock script exhausted after {len(self.script.steps)} step(s)")
        step = self.script.steps[idx]
        flattened = "\n".join(m.content for m in messages)
        if step.expect_substring is not None and step.expect_substring not in flattened:
            raise ScriptExpectationError(
                f"scripted step {idx} expected substring {step.expect_substring!r} "
                f"in the request messages, but it was absent")
        self.calls += 1
        return ChatResponse(text=step.response)


def mock_provider(script: MockScript) -> MockChatProvider:
    return MockChatProvider(script)


_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


class HashEmbedder:
    """Deterministic bag-of-words embedder: crc32-hash tokens into a
    fixed-dimension count vector, then L2-normalize. No network, no model;
    good enough for retrieval tests where word overlap drives similarity."""

    def __init__(self, dim: int = HASH_EMBED_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        counts = [0.0] * self.dim
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            # Degenerate text still gets a unit vector so norms stay 1.
            counts[0] = 1.0
        for tok in tokens:
            counts[zlib.crc32(tok.encode("utf-8")) % self.dim] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        return [c / norm for c in counts]
