"""Provider-agnostic chat-completion gateway.

Three modes: ``live`` talks to the wire endpoint, ``record`` does the same and
persists every response into a cassette, ``replay`` answers exclusively from
the cassette and never touches the network. Requests are keyed by a canonical
digest so cassettes survive field-order and process-restart differences.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import CassetteMissError, ConfigError, GatewayError

DEFAULT_MAX_CONCURRENCY = 4
DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_BASE_S = 1.0


class TransientProviderError(GatewayError):
    """Retryable provider failure (timeouts, rate limits, 5xx)."""


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[dict, ...]
    temperature: float = 0.7
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ConfigError("a chat request needs at least one message")
        for msg in self.messages:
            if msg.get("role") not in ("system", "user", "assistant"):
                raise ConfigError(f"invalid message role {msg.get('role')!r}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")


@dataclass(frozen=True)
class Usage:
    model_name: str
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: Usage
    latency_s: float


def request_digest(req: ChatRequest) -> str:
    """Stable across runs and serialization order of message dicts."""
    canonical = json.dumps(
        {
            "model_name": req.model_name,
            "messages": [
                {"role": m["role"], "content": m["content"]} for m in req.messages
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Cassette:
    """Line-delimited digest -> response store."""

    def __init__(self, entries: Optional[dict] = None):
        self.entries: dict[str, dict] = dict(entries or {})

    def get(self, digest: str) -> Optional[dict]:
        return self.entries.get(digest)

    def put(self, digest: str, text: str, prompt_tokens: int, completion_tokens: int) -> None:
        self.entries[digest] = {
            "response_text": text,
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for digest in sorted(self.entries):
                fh.write(json.dumps({"digest": digest, **self.entries[digest]},
                                    sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Cassette":
        cassette = cls()
        path = Path(path)
        if not path.exists():
            return cassette
        for raw in path.read_text(encoding="utf-8").splitlines():
            if not raw.strip():
                continue
            obj = json.loads(raw)
            cassette.entries[obj["digest"]] = {
                "response_text": obj["response_text"],
                "prompt_tokens": obj["prompt_tokens"],
                "completion_tokens": obj["completion_tokens"],
            }
        return cassette


def http_transport(req: ChatRequest) -> tuple[str, int, int]:
    """Default wire transport: OpenAI-style chat-completion endpoint.

    Endpoint URL, and auth token come from LLM_ENDPOINT / LLM_API_TOKEN.
    """
    import httpx

    endpoint = os.environ.get("LLM_ENDPOINT")
    if not endpoint:
        raise GatewayError("LLM_ENDPOINT not set; live mode needs a provider endpoint")
    headers = {}
    token = os.environ.get("LLM_API_TOKEN")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": req.model_name,
        "messages": list(req.messages),
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    try:
        resp = httpx.post(endpoint, json=payload, headers=headers, timeout=120)
    except httpx.TransportError as exc:
        raise TransientProviderError(str(exc)) from exc
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientProviderError(f"provider returned {resp.status_code}")
    if resp.status_code != 200:
        raise GatewayError(f"provider returned {resp.status_code}: {resp.text[:200]}")
    body = resp.json()
    text = body["choices"][0]["message"]["content"]
    usage = body.get("usage", {})
    return text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))


@dataclass
class AttemptLogEntry:
    digest: str
    attempt: int
    backoff_s: float
    outcome: str  # ok | transient | fatal


class Gateway:
    """Shareable chat client with bounded concurrency, retries, and cassettes."""

    def __init__(
        self,
        mode: str = "replay",
        cassette: Optional[Cassette] = None,
        cassette_path=None,
        transport: Callable[[ChatRequest], tuple[str, int, int]] = http_transport,
        max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: Optional[random.Random] = None,
    ):
        if mode not in ("live", "record", "replay"):
            raise ConfigError(f"unknown gateway mode {mode!r}")
        self.mode = mode
        self.cassette_path = cassette_path
        if cassette is None:
            cassette = Cassette.load(cassette_path) if cassette_path else Cassette()
        self.cassette = cassette
        self.transport = transport
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self._sleep = sleep
        self._jitter = jitter_rng or random.Random()
        self._limiter = threading.Semaphore(max_concurrency)
        self._write_lock = threading.Lock()
        self.attempt_log: list[AttemptLogEntry] = []
        self.usages: list[Usage] = []

    def complete(self, req: ChatRequest) -> CompletionResult:
        digest = request_digest(req)
        if self.mode == "replay":
            entry = self.cassette.get(digest)
            if entry is None:
                raise CassetteMissError(f"no cassette entry for digest {digest[:12]}")
            usage = Usage(req.model_name, entry["prompt_tokens"], entry["completion_tokens"])
            self.usages.append(usage)
            return CompletionResult(text=entry["response_text"], usage=usage, latency_s=0.0)

        start = time.monotonic()
        text, prompt_tokens, completion_tokens = self._call_with_retries(req, digest)
        latency = time.monotonic() - start
        usage = Usage(req.model_name, prompt_tokens, completion_tokens)
        self.usages.append(usage)
        if self.mode == "record":
            with self._write_lock:
                self.cassette.put(digest, text, prompt_tokens, completion_tokens)
                if self.cassette_path:
                    self.cassette.save(self.cassette_path)
        return CompletionResult(text=text, usage=usage, latency_s=latency)

    def _call_with_retries(self, req: ChatRequest, digest: str):
        last_exc = None
        for attempt in range(self.max_retries + 1):
            with self._limiter:
                try:
                    result = self.transport(req)
                    self.attempt_log.append(AttemptLogEntry(digest, attempt, 0.0, "ok"))
                    return result
                except TransientProviderError as exc:
                    last_exc = exc
                    backoff = 0.0
                    if attempt < self.max_retries:
                        backoff = self.backoff_base_s * (2 ** attempt)
                        backoff *= 1 + self._jitter.uniform(-0.2, 0.2)
                    self.attempt_log.append(
                        AttemptLogEntry(digest, attempt, backoff, "transient")
                    )
            if attempt < self.max_retries:
                self._sleep(backoff)
        raise GatewayError(
            f"provider failed after {self.max_retries + 1} attempts: {last_exc}"
        ) from last_exc


def cost_report(usages: Iterable[Usage], price_table: dict[str, dict[str, float]]) -> float:
    """Total spend given per-1K-token prices, e.g. {"gpt-4": {"prompt": 0.03, "completion": 0.06}}."""
    if not price_table:
        raise ConfigError("price table is empty")
    total = 0.0
    for usage in usages:
        if usage.model_name not in price_table:
            raise ConfigError(f"no prices for model {usage.model_name!r}")
        prices = price_table[usage.model_name]
        total += usage.prompt_tokens / 1000 * prices["prompt"]
        total += usage.completion_tokens / 1000 * prices["completion"]
    return total
