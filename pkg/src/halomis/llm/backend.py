"""Chat-completion backends: a generic HTTP client and a deterministic mock."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import httpx

from ..errors import (
    AuthMissing,
    BackendError,
    BackendTimeout,
    ExhaustedRetries,
    MalformedBackendReply,
    MalformedBlock,
    NoStructuredBlock,
)
from .parsing import extract_structured_block

log = logging.getLogger(__name__)

BACKEND_KINDS = ("http_chat", "mock")
REASK_SUFFIX = (
    "\n\nYour previous reply could not be parsed. Return only the structured JSON "
    "object with exactly these fields: {fields}."
)


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    model_name: str = ""
    endpoint: Optional[str] = None
    auth_env: Optional[str] = None
    max_retries: int = 3
    timeout_s: float = 60.0
    mock_seed: Optional[int] = None
    backend_id: Optional[str] = None
    max_in_flight: int = 4
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http_chat" and not (self.endpoint and self.model_name):
            raise ValueError("http_chat backends need endpoint and model_name")
        if self.kind == "mock" and self.mock_seed is None:
            raise ValueError("mock backends need mock_seed")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def id(self) -> str:
        if self.backend_id:
            return self.backend_id
        if self.kind == "mock":
            return f"mock-{self.mock_seed}"
        return self.model_name

    @classmethod
    def from_dict(cls, d: dict) -> "BackendConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown backend config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 2048
    backend_id: str = ""
    # routing hint for the mock; never sent over the wire
    sample_id: Optional[str] = None

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_ms: float
    backend_id: str
    attempt_count: int = 1


class Backend:
    """Common behaviour: call counting and an in-flight limit."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))
        self.calls = 0

    @property
    def backend_id(self) -> str:
        return self.config.id

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._slots:
            with self._lock:
                self.calls += 1
            start = time.perf_counter()
            text, attempts = self._complete(request)
            latency = (time.perf_counter() - start) * 1000.0
        return ChatResponse(text, latency, self.backend_id, attempts)

    def _complete(self, request):
        raise NotImplementedError


class HttpChatBackend(Backend):
    """OpenAI-style ``/chat/completions`` client with bearer auth and retries."""

    def __init__(self, config: BackendConfig, transport=None, sleep: Callable = time.sleep):
        super().__init__(config)
        if not config.auth_env or not os.environ.get(config.auth_env):
            raise AuthMissing(f"environment variable {config.auth_env!r} is not set for backend {config.id}")
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)
        self._sleep = sleep

    def check_auth(self) -> str:
        token = os.environ.get(self.config.auth_env or "")
        if not token:
            raise AuthMissing(f"environment variable {self.config.auth_env!r} is not set")
        return token

    def payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        return {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

    @staticmethod
    def parse_reply(body) -> str:
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedBackendReply(f"unexpected reply shape: {str(body)[:200]}") from None
        if not isinstance(content, str):
            raise MalformedBackendReply("reply content is not text")
        return content

    def _complete(self, request):
        token = self.check_auth()
        headers = {"Authorization": f"Bearer {token}"}
        body = self.payload(request)
        last_exc = None
        for attempt in range(1, self.config.max_retries + 2):
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_exc = BackendTimeout(str(exc) or "request timed out")
            except httpx.TransportError as exc:
                last_exc = BackendError(f"transport error: {exc}")
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_exc = BackendError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        data = resp.json()
                    except ValueError:
                        raise MalformedBackendReply("reply is not JSON") from None
                    return self.parse_reply(data), attempt
            if attempt <= self.config.max_retries:
                self._sleep(self.config.backoff_s * 2 ** (attempt - 1))
        if isinstance(last_exc, BackendTimeout) and self.config.max_retries == 0:
            raise last_exc
        raise ExhaustedRetries(
            f"backend {self.config.id} failed after {self.config.max_retries + 1} attempts: {last_exc}"
        ) from last_exc


# ---------------------------------------------------------------------------
# mock


def _digest(*parts) -> bytes:
    return hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()


def mock_score_profile(config: BackendConfig, sample_id: str, field_names) -> dict:
    """Deterministic 1-10 integer per field, keyed on (seed, sample id, field)."""
    return {
        name: int.from_bytes(_digest(config.mock_seed, sample_id, name)[:8], "big") % 10 + 1
        for name in field_names
    }


_SCHEMA_LINE = re.compile(r"^Schema: (\{.*\})\s*$", re.MULTILINE)
_RANGE = re.compile(r"^(int|float)\[(-?[\d.]+),(-?[\d.]+)\]\??$")


def schema_from_prompt(text: str) -> Optional[dict]:
    found = _SCHEMA_LINE.findall(text)
    if not found:
        return None
    try:
        return json.loads(found[-1])
    except json.JSONDecodeError:
        return None


class MockBackend(Backend):
    """Offline backend whose replies are a pure function of its inputs.

    Score fields come from :func:`mock_score_profile` keyed on the request's
    ``sample_id`` (or a digest of the prompt when absent); ``planted`` can pin
    individual fields per sample id. List fields are fabricated from a digest
    of (seed, prompt) so multi-stage analyzer chains have something to chew on.
    """

    def __init__(self, config: BackendConfig, planted: Optional[dict] = None):
        super().__init__(config)
        self.planted = planted or {}

    def _complete(self, request):
        return self.reply(request), 1

    def reply(self, request: ChatRequest) -> str:
        seed = self.config.mock_seed
        text_key = hashlib.sha256(request.user_text.encode("utf-8")).hexdigest()
        schema = schema_from_prompt(request.user_text)
        if schema is None:
            return f"Mock reply {_digest(seed, text_key).hex()[:12]}."
        key = request.sample_id if request.sample_id is not None else text_key
        pinned = self.planted.get(key, {})
        rng = random.Random(_digest(seed, text_key).hex())
        obj = {}
        for name, kind in schema.items():
            kind = kind.rstrip("?")
            if name in pinned:
                obj[name] = pinned[name]
                continue
            m = _RANGE.match(kind)
            if m and m.group(1) == "int":
                obj[name] = mock_score_profile(self.config, key, [name])[name]
            elif m:
                lo, hi = float(m.group(2)), float(m.group(3))
                frac = int.from_bytes(_digest(seed, key, name)[:4], "big") / 2**32
                obj[name] = round(lo + (hi - lo) * frac, 3)
            elif kind.startswith("list[") and kind.endswith("]"):
                obj[name] = self._fabricate_list(kind[5:-1], rng, obj, key)
            else:
                obj[name] = f"mock {name} {_digest(seed, key, name).hex()[:8]}"
        return "Analysis complete.\n```json\n" + json.dumps(obj) + "\n```"

    def _fabricate_list(self, item, rng, built, key):
        tag = _digest(self.config.mock_seed, key).hex()[:8]
        if item == "statement":
            return [
                {
                    "text": f"Statement {i} ({tag})",
                    "entities": [],
                    "quantitative_claims": [],
                    "causal": rng.random() < 0.3,
                    "confidence": rng.randint(1, 10),
                }
                for i in range(rng.randint(5, 15))
            ]
        if item == "pair":
            return [
                {
                    "statement_a": f"Statement {i} ({tag})",
                    "statement_b": f"Statement {i + 1} ({tag})",
                    "explanation": "mock contradiction",
                    "severity": rng.randint(1, 10),
                    "confidence": rng.randint(1, 10),
                }
                for i in range(rng.randint(0, 2))
            ]
        if item == "entity":
            return [
                {"name": f"Entity{i}-{tag}", "type": "concept", "attributes": [], "source": None}
                for i in range(rng.randint(1, 4))
            ]
        if item == "relationship":
            names = [e["name"] for e in built.get("entities", [])]
            if len(names) < 2:
                return []
            return [
                {"from": names[i], "to": names[i + 1], "nature": "related to", "qualifiers": []}
                for i in range(rng.randint(0, len(names) - 1))
            ]
        if item == "claim":
            return [
                {
                    "claim": f"Claim {i} ({tag})",
                    "type": "statistic",
                    "facts_to_verify": [f"fact {i}.{j} ({tag})" for j in range(rng.randint(1, 2))],
                    "verifiability": "high",
                    "citations": [],
                }
                for i in range(rng.randint(1, 3))
            ]
        return []


def make_backend(config: BackendConfig, **kwargs) -> Backend:
    if config.kind == "mock":
        return MockBackend(config, **kwargs)
    return HttpChatBackend(config, **kwargs)


_REGISTRY: dict = {}
_REGISTRY_LOCK = threading.Lock()


def complete(config: BackendConfig, request: ChatRequest) -> ChatResponse:
    """Functional entry point; backends are created once per config."""
    with _REGISTRY_LOCK:
        backend = _REGISTRY.get(config)
        if backend is None:
            backend = _REGISTRY[config] = make_backend(config)
    return backend.complete(request)


def ask_structured(backend: Backend, user_text: str, required=(), sample_id=None, system_text=""):
    """Complete and parse one structured object, re-asking once on parse failure.

    Returns ``(record, raw_text)``; ``raw_text`` joins both replies when a
    re-ask happened.
    """
    request = ChatRequest(user_text=user_text, system_text=system_text,
                          backend_id=backend.backend_id, sample_id=sample_id)
    reply = backend.complete(request)
    try:
        record = extract_structured_block(reply.text)
        _check_required(record, required)
        return record, reply.text
    except (NoStructuredBlock, MalformedBlock) as exc:
        first_error = exc
    fields = ", ".join(required) if required else "the requested fields"
    retry = replace(request, user_text=user_text + REASK_SUFFIX.format(fields=fields))
    second = backend.complete(retry)
    log.warning("re-asked backend %s after unparseable reply: %s", backend.backend_id, first_error)
    record = extract_structured_block(second.text)
    _check_required(record, required)
    return record, reply.text + "\n---\n" + second.text


def _check_required(record: dict, required) -> None:
    missing = [f for f in required if f not in record]
    if missing:
        raise MalformedBlock(f"structured object lacks fields {missing}")
