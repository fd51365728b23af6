"""Uniform completion interface over chat-completion providers.

Every LLM interaction in the system routes through :class:`Gateway`; no
other module opens a provider connection. Each provider attempt produces
exactly one trace record (request and response snapshots), persisted to the
store and optionally to a JSON-lines file. Retry policy deliberately lives
in callers — the gateway stays a thin, predictable edge.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

import httpx

logger = logging.getLogger(__name__)

from .config import Config
from .errors import (
    GatewayRejectionError,
    GatewayRetryableError,
    InvariantViolation,
    MockScriptExhaustedError,
)
from .models import LogType
from .serde import new_id, rfc3339, utcnow


@dataclass
class CompletionRequest:
    user_text: str
    model_id: str
    temperature: float = 0.7
    max_tokens: int = 2048
    system_text: Optional[str] = None

    def validate(self) -> list[str]:
        violations = []
        if not self.user_text:
            violations.append("user_text must be non-empty")
        if not 0 <= self.temperature <= 2:
            violations.append("temperature must be in 0..2")
        if self.max_tokens <= 0:
            violations.append("max_tokens must be positive")
        return violations

    def to_dict(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass
class CompletionResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int
    trace_id: str = ""

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_ms": self.latency_ms,
            "trace_id": self.trace_id,
        }


@dataclass
class TraceRecord:
    trace_id: str
    task_id: Optional[str]
    request: dict
    response: dict
    created_at: datetime = field(default_factory=utcnow)

    def to_dict(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "task_id": self.task_id,
            "request": self.request,
            "response": self.response,
            "created_at": rfc3339(self.created_at),
        }


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse:
        ...


ScriptEntry = Union[str, dict]


def _entry_response(entry: ScriptEntry, request: CompletionRequest) -> CompletionResponse:
    if isinstance(entry, str):
        entry = {"text": entry}
    prompt_text = (request.system_text or "") + " " + request.user_text
    return CompletionResponse(
        text=entry["text"],
        prompt_tokens=entry.get("prompt_tokens", len(prompt_text.split())),
        completion_tokens=entry.get("completion_tokens", len(entry["text"].split())),
        latency_ms=entry.get("latency_ms", 0),
    )


class MockProvider:
    """Deterministic provider for tests and replays.

    Resolution order: exact-prompt key, then ordered queue, then echo
    fallback. An exhausted queue without fallback is an explicit error.
    """

    def __init__(
        self,
        keyed: dict[str, ScriptEntry] | None = None,
        queue: list[ScriptEntry] | None = None,
        echo: bool = False,
        allow_empty: bool = False,
    ) -> None:
        # allow_empty is for drivers that enqueue responses as they go;
        # configure_mock never sets it (scripts must be non-empty or echo).
        if not keyed and not queue and not echo and not allow_empty:
            raise ValueError("mock script must be non-empty or echo mode explicit")
        self.keyed = dict(keyed or {})
        self.queue: deque[ScriptEntry] = deque(queue or [])
        self.echo = echo
        self.call_count = 0
        self._lock = threading.Lock()

    def enqueue(self, *entries: ScriptEntry) -> None:
        with self._lock:
            self.queue.extend(entries)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.call_count += 1
            if request.user_text in self.keyed:
                return _entry_response(self.keyed[request.user_text], request)
            if self.queue:
                return _entry_response(self.queue.popleft(), request)
            if self.echo:
                return _entry_response(request.user_text, request)
            raise MockScriptExhaustedError(
                "mock queue exhausted and no echo fallback configured"
            )


def configure_mock(script: Union[dict, list, str]) -> MockProvider:
    """Build a MockProvider from a response table.

    Accepts a dict (exact-prompt keyed), a list (ordered queue), the string
    ``"echo"``, or a dict with explicit ``keyed``/``queue``/``echo`` keys.
    """
    if script == "echo":
        return MockProvider(echo=True)
    if isinstance(script, list):
        return MockProvider(queue=script)
    if isinstance(script, dict):
        if {"keyed", "queue", "echo"} & set(script.keys()):
            return MockProvider(
                keyed=script.get("keyed"),
                queue=script.get("queue"),
                echo=bool(script.get("echo", False)),
            )
        return MockProvider(keyed=script)
    raise ValueError(f"unsupported mock script: {type(script).__name__}")


class HttpChatProvider:
    """Chat-completion HTTP provider (OpenAI-style JSON wire format)."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        timeout_s: float = 120.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.monotonic()
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException as exc:
            raise GatewayRetryableError(f"provider timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise GatewayRetryableError(f"provider transport error: {exc}") from exc
        latency_ms = int((time.monotonic() - started) * 1000)
        if 400 <= response.status_code < 500:
            raise GatewayRejectionError(
                f"provider rejected request ({response.status_code}): {response.text[:500]}"
            )
        if response.status_code >= 500:
            raise GatewayRetryableError(
                f"provider error ({response.status_code}): {response.text[:500]}"
            )
        body = response.json()
        usage = body.get("usage", {})
        return CompletionResponse(
            text=body["choices"][0]["message"]["content"],
            prompt_tokens=usage.get("prompt_tokens", 0),
            completion_tokens=usage.get("completion_tokens", 0),
            latency_ms=latency_ms,
        )


class _FifoGate:
    """Bounded concurrent admission with first-come-first-served order."""

    def __init__(self, limit: int) -> None:
        self._limit = max(1, limit)
        self._active = 0
        self._waiting: deque[object] = deque()
        self._cv = threading.Condition()

    def __enter__(self):
        ticket = object()
        with self._cv:
            self._waiting.append(ticket)
            self._cv.wait_for(
                lambda: self._active < self._limit and self._waiting[0] is ticket
            )
            self._waiting.popleft()
            self._active += 1
        return self

    def __exit__(self, *exc):
        with self._cv:
            self._active -= 1
            self._cv.notify_all()
        return False


class Gateway:
    """Provider wrapper: validation, bounded admission, total tracing."""

    def __init__(
        self,
        provider: Provider,
        store=None,
        config: Config | None = None,
        trace_path: str | Path | None = None,
        id_factory: Callable[[], str] = new_id,
        clock: Callable[[], datetime] = utcnow,
    ) -> None:
        self.provider = provider
        self.store = store
        self.config = config or Config()
        self.trace_path = Path(trace_path) if trace_path else None
        self.id_factory = id_factory
        self.clock = clock
        self._gate = _FifoGate(self.config.max_inflight)
        self._sink_lock = threading.Lock()

    def request(self, user_text: str, system_text: str | None = None) -> CompletionRequest:
        return CompletionRequest(
            user_text=user_text,
            system_text=system_text,
            model_id=self.config.model_id,
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
        )

    def complete(
        self, request: CompletionRequest, task_id: str | None = None
    ) -> CompletionResponse:
        violations = request.validate()
        if violations:
            # Precondition failure: rejected before any provider attempt.
            raise InvariantViolation(violations)
        trace_id = self.id_factory()
        with self._gate:
            try:
                response = self.provider.complete(request)
            except Exception as exc:
                self._record(
                    trace_id,
                    task_id,
                    request,
                    {
                        "error": str(exc),
                        "retryable": bool(getattr(exc, "retryable", False)),
                    },
                )
                raise
        response.trace_id = trace_id
        self._record(trace_id, task_id, request, response.to_dict())
        return response

    def _record(
        self, trace_id: str, task_id: str | None, request: CompletionRequest, response: dict
    ) -> None:
        record = TraceRecord(
            trace_id=trace_id,
            task_id=task_id,
            request=request.to_dict(),
            response=response,
            created_at=self.clock(),
        )
        if self.store is not None:
            self.store.append_trace(record.to_dict())
            if task_id is not None:
                # Trace ids propagate into the task's log stream; tracing
                # must never break the completion itself.
                outcome = "error" if "error" in response else "ok"
                try:
                    self.store.append_task_log(
                        task_id,
                        LogType.INFO,
                        f"llm trace {trace_id} ({outcome})",
                        created_at=self.clock(),
                    )
                except Exception:
                    logger.warning("could not log trace %s to task %s", trace_id, task_id)
        if self.trace_path is not None:
            with self._sink_lock, open(self.trace_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")
