"""Minimal client for OpenAI-compatible completion and embedding endpoints."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import httpx

from .errors import (
    AuthFailure,
    EndpointUnreachable,
    MalformedResponse,
    RequestRejected,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "RECIPE_EVAL_API_KEY"

# Request fields beyond the core OpenAI schema. Servers that reject them get
# the request again without them.
EXTENSION_FIELDS = ("repetition_penalty", "no_repeat_ngram_size", "do_sample")

_RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class Endpoint:
    base_url: str
    model: str = "default"
    chat: bool = False
    api_key_env: str = API_KEY_ENV
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 0.5

    def url(self, path: str) -> str:
        base = self.base_url.rstrip("/")
        if base.endswith("/v1"):
            base = base[:-3]
        return f"{base}{path}"

    def identifier(self) -> str:
        return f"{self.base_url}#{self.model}"


@dataclass(frozen=True)
class RetryEvent:
    url: str
    attempt: int
    reason: str
    delay: float


@dataclass
class OpenAICompatibleClient:
    endpoint: Endpoint
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    retry_events: list[RetryEvent] = field(default_factory=list)
    dropped_fields: set[str] = field(default_factory=set)

    def __post_init__(self):
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.endpoint.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(headers=headers, timeout=self.endpoint.timeout, transport=self.transport)
        self._lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- transport ---------------------------------------------------------

    def _retry(self, url: str, attempt: int, reason: str) -> None:
        delay = self.endpoint.backoff * 2 ** (attempt - 1)
        with self._lock:
            self.retry_events.append(RetryEvent(url, attempt, reason, delay))
        log.warning("request to %s failed (%s); retry %d/%d in %.2fs",
                    url, reason, attempt, self.endpoint.max_attempts - 1, delay)
        self.sleep(delay)

    def post_json(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        """POST with up to ``max_attempts`` tries on transient failures."""
        url = self.endpoint.url(path)
        attempts = self.endpoint.max_attempts
        for attempt in range(1, attempts + 1):
            try:
                resp = self._http.post(url, json=body)
            except httpx.TransportError as exc:
                if attempt == attempts:
                    raise EndpointUnreachable(f"{url}: {exc!r} after {attempts} attempts") from exc
                self._retry(url, attempt, type(exc).__name__)
                continue
            if resp.status_code in _RETRY_STATUS:
                if attempt == attempts:
                    raise EndpointUnreachable(f"{url}: HTTP {resp.status_code} after {attempts} attempts")
                self._retry(url, attempt, f"HTTP {resp.status_code}")
                continue
            if resp.status_code in (401, 403):
                raise AuthFailure(f"{url}: HTTP {resp.status_code}; set {self.endpoint.api_key_env}")
            if resp.status_code >= 400:
                raise RequestRejected(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{url}: response is not JSON: {resp.text[:200]!r}") from exc
            if not isinstance(data, dict):
                raise MalformedResponse(f"{url}: expected a JSON object")
            return data
        raise AssertionError("unreachable")

    # -- API ---------------------------------------------------------------

    def complete(self, prompt: str, params: dict[str, Any] | None = None) -> str:
        """Text of the first choice for ``prompt``."""
        body: dict[str, Any] = {"model": self.endpoint.model}
        body.update({k: v for k, v in (params or {}).items() if k not in self.dropped_fields})
        if self.endpoint.chat:
            path = "/v1/chat/completions"
            body["messages"] = [{"role": "user", "content": prompt}]
        else:
            path = "/v1/completions"
            body["prompt"] = prompt
        try:
            data = self.post_json(path, body)
        except RequestRejected:
            extras = [k for k in EXTENSION_FIELDS if k in body]
            if not extras:
                raise
            log.warning("endpoint rejected the request; dropping unsupported fields %s", extras)
            with self._lock:
                self.dropped_fields.update(extras)
            for k in extras:
                del body[k]
            data = self.post_json(path, body)
        return _first_choice_text(data, self.endpoint.chat)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        data = self.post_json("/v1/embeddings", {"model": self.endpoint.model, "input": list(texts)})
        try:
            rows = [[float(x) for x in item["embedding"]] for item in data["data"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad embedding response: {exc!r}") from exc
        if len(rows) != len(texts):
            raise MalformedResponse(f"asked for {len(texts)} embeddings, got {len(rows)}")
        return rows


def _first_choice_text(data: dict[str, Any], chat: bool) -> str:
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"] if chat else choice["text"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"no usable choice in response: {str(data)[:200]}") from exc
    if not isinstance(text, str):
        raise MalformedResponse("choice text is not a string")
    return text
