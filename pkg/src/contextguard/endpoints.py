"""Model endpoint clients sharing one wire format.

Every endpoint exposes ``complete(messages, max_tokens, model=None)`` and
returns an EndpointResponse.  The HTTP wire format is::

    POST <url>
    {"model": str, "messages": [{"role": str, "content": str}], "max_tokens": int}
    -> {"content": str, "usage": {"prompt_tokens": int, "completion_tokens": int}}

LocalEndpoint never touches the network; MockEndpoint captures every request
for leakage analysis in tests and the benchmark harness.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import httpx

from .costmodel import estimate_tokens
from .errors import EndpointError


@dataclass(frozen=True)
class EndpointResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class CapturedRequest:
    """One outbound request as seen by a capture mock."""

    model: str
    messages: tuple[dict, ...]
    max_tokens: int

    @property
    def payload_text(self) -> str:
        return "\n".join(m.get("content", "") for m in self.messages)


def _messages_tokens(messages) -> int:
    return sum(estimate_tokens(m.get("content", "")) for m in messages)


class HttpEndpoint:
    """httpx-backed client with a per-endpoint concurrency cap.

    Raises EndpointError on transport failure, non-2xx status, or a
    malformed response body.  Retry policy belongs to the caller.
    """

    def __init__(self, url: str, model: str = "default",
                 timeout: float = 30.0, max_concurrency: int = 4,
                 single_tenant: bool = False):
        self.url = url
        self.model = model
        self.single_tenant = single_tenant
        self._timeout = timeout
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._client = httpx.Client(timeout=timeout)

    def complete(self, messages, max_tokens: int, model: str | None = None) -> EndpointResponse:
        body = {
            "model": model or self.model,
            "messages": list(messages),
            "max_tokens": max_tokens,
        }
        with self._semaphore:
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.HTTPError as exc:
                raise EndpointError(f"transport failure to {self.url}: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise EndpointError(f"endpoint {self.url} returned HTTP {resp.status_code}")
        try:
            data = resp.json()
            usage = data.get("usage", {})
            return EndpointResponse(
                content=data["content"],
                prompt_tokens=int(usage.get("prompt_tokens", _messages_tokens(messages))),
                completion_tokens=int(usage.get("completion_tokens", estimate_tokens(data["content"]))),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise EndpointError(f"malformed response from {self.url}: {exc}") from exc

    def close(self) -> None:
        self._client.close()


class LocalEndpoint:
    """On-box deterministic endpoint: no sockets, no subprocesses.

    Stands in for an on-premise model.  The response is a deterministic
    function of the newest user message so tests can assert stability.
    """

    single_tenant = True

    def __init__(self, model: str = "local"):
        self.model = model
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, messages, max_tokens: int, model: str | None = None) -> EndpointResponse:
        with self._lock:
            self.calls += 1
        prompt = ""
        for m in reversed(list(messages)):
            if m.get("role") == "user":
                prompt = m.get("content", "")
                break
        first_line = next((ln.strip() for ln in prompt.split("\n") if ln.strip()), "")
        content = f"Processed locally: {first_line[:160]}"
        return EndpointResponse(
            content=content,
            prompt_tokens=_messages_tokens(messages),
            completion_tokens=estimate_tokens(content),
        )


@dataclass
class MockEndpoint:
    """Capture mock for tests and the benchmark harness.

    Records every request; replies with a short deterministic
    acknowledgement (or whatever ``responder`` returns).  ``fail_times``
    makes the first N calls raise, for retry tests.
    """

    name: str = "mock"
    responder: object = None  # callable(CapturedRequest) -> str
    fail_times: int = 0
    single_tenant: bool = False
    captures: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def complete(self, messages, max_tokens: int, model: str | None = None) -> EndpointResponse:
        request = CapturedRequest(
            model=model or self.name,
            messages=tuple(dict(m) for m in messages),
            max_tokens=max_tokens,
        )
        with self._lock:
            if self.fail_times > 0:
                self.fail_times -= 1
                raise EndpointError(f"injected failure on {self.name}")
            self.captures.append(request)
        if self.responder is not None:
            content = self.responder(request)
        else:
            digest = hashlib.sha256(request.payload_text.encode("utf-8")).hexdigest()[:8]
            content = f"ack {digest} from {self.name}"
        return EndpointResponse(
            content=content,
            prompt_tokens=_messages_tokens(messages),
            completion_tokens=estimate_tokens(content),
        )

    def payloads(self) -> list[str]:
        with self._lock:
            return [c.payload_text for c in self.captures]
