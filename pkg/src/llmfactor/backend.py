"""Completion backends: an HTTP chat-completion client, a rule-based mock, and a
replay/caching layer keyed by ``(model_id, prompt hash)``.

Every backend exposes ``model_id`` and ``complete(system_preamble, user_prompt)``
returning a :class:`CompletionResult`, and is safe to call from many threads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx

from .errors import BackendError, ConfigError

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
TRANSIENT_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"  # "remote" | "mock" | "replay"
    model_id: str = "mock"
    endpoint_url: str = DEFAULT_ENDPOINT
    timeout_s: float = 60.0
    max_retries: int = 5
    max_concurrent_requests: int = 5
    temperature: float = 0.0
    api_key_env: str = "OPENAI_API_KEY"
    backoff_base_s: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.kind not in ("remote", "mock", "replay"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.max_concurrent_requests < 1:
            raise ConfigError("max_concurrent_requests must be >= 1")
        if not self.timeout_s > 0:
            raise ConfigError("timeout_s must be > 0")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_ms: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    attempt: int = 1
    cached: bool = False


class Backend(Protocol):
    model_id: str

    def complete(self, system_preamble: str, user_prompt: str) -> CompletionResult: ...


def prompt_hash(system_preamble: str, user_prompt: str) -> str:
    h = hashlib.sha256()
    h.update(system_preamble.encode("utf-8"))
    h.update(b"\x00")
    h.update(user_prompt.encode("utf-8"))
    return h.hexdigest()


class ResponseCache:
    """Append-only JSONL log of ``{prompt_hash, model_id, response}``; doubles as a replay log."""

    def __init__(self, path: Optional[str | os.PathLike] = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str], str] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    try:
                        row = json.loads(line)
                    except json.JSONDecodeError:
                        # a torn final line from an interrupted run
                        log.warning("skipping unreadable cache line in %s", self.path)
                        continue
                    self._data[(row["model_id"], row["prompt_hash"])] = row["response"]

    def __len__(self) -> int:
        return len(self._data)

    def get(self, model_id: str, key: str) -> Optional[str]:
        with self._lock:
            return self._data.get((model_id, key))

    def put(self, model_id: str, key: str, response: str) -> None:
        with self._lock:
            if (model_id, key) in self._data:
                return
            self._data[(model_id, key)] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"prompt_hash": key, "model_id": model_id, "response": response},
                                        ensure_ascii=False) + "\n")


    def compact(self) -> None:
        """Rewrite the log sorted by key so that identical runs leave identical files."""
        if self.path is None:
            return
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
                for (model_id, key), response in sorted(self._data.items()):
                    fh.write(json.dumps({"prompt_hash": key, "model_id": model_id, "response": response},
                                        ensure_ascii=False) + "\n")
            os.replace(tmp, self.path)


class RemoteBackend:
    """Chat-completion client with bounded concurrency and exponential backoff."""

    def __init__(
        self,
        config: BackendConfig,
        api_key: Optional[str] = None,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.config = config
        self.model_id = config.model_id
        self._api_key = api_key if api_key is not None else os.environ.get(config.api_key_env, "")
        self._client = client or httpx.Client(timeout=config.timeout_s)
        self._slots = threading.BoundedSemaphore(config.max_concurrent_requests)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._rng_lock = threading.Lock()

    def _delay(self, attempt: int, retry_after: Optional[str]) -> float:
        c = self.config
        base = c.backoff_base_s * c.backoff_factor ** (attempt - 1)
        with self._rng_lock:
            delay = base * (1.0 + 0.25 * self._rng.random())
        if retry_after:
            try:
                delay = max(delay, float(retry_after))
            except ValueError:
                pass
        return delay

    def _payload(self, system_preamble: str, user_prompt: str) -> dict:
        messages = []
        if system_preamble:
            messages.append({"role": "system", "content": system_preamble})
        messages.append({"role": "user", "content": user_prompt})
        return {"model": self.model_id, "messages": messages, "temperature": self.config.temperature}

    def complete(self, system_preamble: str, user_prompt: str) -> CompletionResult:
        if not user_prompt:
            raise ValueError("prompt must be non-empty")
        c = self.config
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = self._payload(system_preamble, user_prompt)
        attempts = c.max_retries + 1
        status: Optional[int] = None
        reason = "request failed"
        for attempt in range(1, attempts + 1):
            retry_after = None
            t0 = time.perf_counter()
            try:
                with self._slots:
                    resp = self._client.post(c.endpoint_url, json=payload, headers=headers, timeout=c.timeout_s)
            except httpx.TimeoutException:
                status, reason = None, "timeout"
            except httpx.TransportError as e:
                status, reason = None, f"transport error: {e}"
            else:
                latency = (time.perf_counter() - t0) * 1000.0
                if resp.status_code == 200:
                    try:
                        body = resp.json()
                        text = body["choices"][0]["message"]["content"] or ""
                    except (ValueError, KeyError, IndexError, TypeError) as e:
                        raise BackendError(f"malformed completion body: {e}", 200, attempt) from e
                    usage = body.get("usage") or {}
                    return CompletionResult(text, latency, int(usage.get("prompt_tokens", 0)),
                                            int(usage.get("completion_tokens", 0)), attempt)
                status, reason = resp.status_code, "HTTP error"
                if status not in TRANSIENT_STATUS:
                    raise BackendError(f"non-retryable response: {resp.text[:200]}", status, attempt)
                retry_after = resp.headers.get("Retry-After")
            if attempt < attempts:
                delay = self._delay(attempt, retry_after)
                log.warning("%s: %s (status %s), retrying in %.2fs", self.model_id, reason, status, delay)
                self._sleep(delay)
        raise BackendError(reason, status, attempts)

    def close(self) -> None:
        self._client.close()


Pattern = Union[None, str, Callable[[str], bool]]
Response = Union[str, Callable[[str], str]]


class MockBackend:
    """Deterministic backend answering from an ordered rule list.

    A rule is ``(pattern, response)``. ``pattern`` is a regex searched in the user
    prompt, a predicate, or ``None`` for the default rule; the first matching rule
    wins. ``response`` is a string or a function of the prompt.
    """

    def __init__(self, rules: Sequence[tuple[Pattern, Response]], model_id: str = "mock"):
        self.model_id = model_id
        self._rules: list[tuple[Callable[[str], bool], Response]] = []
        default: Optional[Response] = None
        for pattern, response in rules:
            if pattern is None:
                if default is None:
                    default = response
                continue
            if isinstance(pattern, str):
                rx = re.compile(pattern)
                self._rules.append((lambda p, rx=rx: rx.search(p) is not None, response))
            elif callable(pattern):
                self._rules.append((pattern, response))
            else:
                raise ConfigError(f"unsupported rule pattern {pattern!r}")
        if default is None:
            raise ConfigError("mock rules must include a default rule (pattern None)")
        self._rules.append((lambda p: True, default))
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, system_preamble: str, user_prompt: str) -> CompletionResult:
        if not user_prompt:
            raise ValueError("prompt must be non-empty")
        with self._lock:
            self.calls += 1
        for matches, response in self._rules:
            if matches(user_prompt):
                text = response(user_prompt) if callable(response) else response
                return CompletionResult(text=text, attempt=1)
        raise AssertionError("unreachable: default rule always matches")


def mock_from_rules(rules: Sequence[tuple[Pattern, Response]], model_id: str = "mock") -> MockBackend:
    return MockBackend(rules, model_id)


class CachingBackend:
    """Serve repeats from a :class:`ResponseCache`; misses go to ``inner`` (or fail in replay mode)."""

    def __init__(self, inner: Optional[Backend], cache: ResponseCache, model_id: Optional[str] = None):
        if inner is None and model_id is None:
            raise ConfigError("replay mode needs a model_id")
        self.inner = inner
        self.cache = cache
        self.model_id = model_id or inner.model_id

    def complete(self, system_preamble: str, user_prompt: str) -> CompletionResult:
        key = prompt_hash(system_preamble, user_prompt)
        hit = self.cache.get(self.model_id, key)
        if hit is not None:
            return CompletionResult(text=hit, attempt=1, cached=True)
        if self.inner is None:
            raise BackendError(f"prompt {key[:12]} not in replay log")
        result = self.inner.complete(system_preamble, user_prompt)
        self.cache.put(self.model_id, key, result.text)
        return result


def replay_backend(log_path: str | os.PathLike, model_id: str) -> CachingBackend:
    return CachingBackend(None, ResponseCache(log_path), model_id=model_id)
