"""HTTP-backed providers implementing the live contracts.

These speak a minimal OpenAI-style JSON shape for chat, a generic JSON result
list for search, and a vector list for embeddings. The transport callable is
injectable so the retry/backoff/auth behavior is testable without a network;
credentials are resolved from the environment variable named in the config,
never stored in files.
"""
from __future__ import annotations

import os
import random
import time
from typing import Callable, Sequence

import requests

from ..errors import (
    EmbeddingItemError,
    PreconditionError,
    ProviderAuthError,
    ProviderRateLimitError,
    ProviderTimeoutError,
    ProviderTransportError,
)
from .base import (
    CallLog,
    ChatRequest,
    ChatResponse,
    ProviderConfig,
    RateLimiter,
    SearchResult,
    dedupe_results,
    retry_with_backoff,
)

Transport = Callable[[str, dict, dict, float], dict]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> dict:
    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise ProviderTimeoutError(str(exc)) from exc
    except requests.RequestException as exc:
        raise ProviderTransportError(str(exc)) from exc
    if resp.status_code in (401, 403):
        raise ProviderAuthError(f"HTTP {resp.status_code}")
    if resp.status_code == 429:
        raise ProviderRateLimitError("HTTP 429")
    if resp.status_code >= 400:
        raise ProviderTransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    return resp.json()


def resolve_credential(config: ProviderConfig) -> str:
    if not config.credential_ref:
        return ""
    value = os.environ.get(config.credential_ref)
    if value is None:
        raise ProviderAuthError(f"environment variable {config.credential_ref!r} is not set")
    return value


class _HttpProviderBase:
    def __init__(
        self,
        config: ProviderConfig,
        call_log: CallLog | None = None,
        transport: Transport | None = None,
        now: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        if not config.endpoint:
            raise PreconditionError("live provider requires an endpoint")
        self._config = config
        self._call_log = call_log
        self._transport = transport or _requests_transport
        self._limiter = RateLimiter(config.requests_per_minute, now=now, sleep=sleep)
        self._now = now
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = resolve_credential(self._config)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, payload: dict, request_text: str) -> dict:
        headers = self._headers()

        def attempt() -> dict:
            self._limiter.acquire()
            started = self._now()
            try:
                result = self._transport(self._config.endpoint, headers, payload, self._config.timeout)
            except Exception as exc:
                if self._call_log is not None:
                    self._call_log.record(self.provider_id, request_text, self._now() - started, type(exc).__name__)
                raise
            if self._call_log is not None:
                self._call_log.record(self.provider_id, request_text, self._now() - started, "ok")
            return result

        return retry_with_backoff(attempt, self._config.max_retries, rng=self._rng, sleep=self._sleep)


class HttpChatProvider(_HttpProviderBase):
    """Chat-completion client for an OpenAI-style endpoint."""

    def __init__(self, config: ProviderConfig, **kwargs):
        super().__init__(config, **kwargs)
        self.provider_id = f"http:chat:{config.model or 'default'}"

    def chat(self, request: ChatRequest) -> ChatResponse:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": self._config.model,
            "messages": messages,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        }
        data = self._post(payload, request.user_text)
        try:
            text = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage", {})
            counts = (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderTransportError(f"malformed chat response: {exc}") from exc
        return ChatResponse(text=text, provider_id=self.provider_id, token_counts=counts)


class HttpSearchProvider(_HttpProviderBase):
    """Web-search client expecting ``{"results": [{url,title,snippet}]}``."""

    provider_id = "http:search"

    def search(self, query_text: str, top_k: int = 5) -> list[SearchResult]:
        if top_k < 1:
            raise PreconditionError("top_k must be >= 1")
        data = self._post({"q": query_text, "count": top_k}, query_text)
        raw = []
        for i, item in enumerate(data.get("results", [])):
            raw.append(
                SearchResult(
                    url=str(item.get("url", "")),
                    title=str(item.get("title", "")),
                    snippet=str(item.get("snippet", "")),
                    rank=i + 1,
                )
            )
        return dedupe_results(r for r in raw if r.url)[:top_k]


class HttpEmbeddingProvider(_HttpProviderBase):
    """Embedding client expecting ``{"data": [{"embedding": [...]}, ...]}``."""

    provider_id = "http:embed"

    def __init__(self, config: ProviderConfig, text_limit: int = 20000, **kwargs):
        super().__init__(config, **kwargs)
        self._text_limit = text_limit

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise PreconditionError("embed requires at least one text")
        for i, text in enumerate(texts):
            if len(text) > self._text_limit:
                raise EmbeddingItemError(i, f"text length {len(text)} exceeds limit {self._text_limit}")
        data = self._post({"model": self._config.model, "input": list(texts)}, "\x1f".join(texts))
        rows = data.get("data", [])
        if len(rows) != len(texts):
            raise ProviderTransportError(f"expected {len(texts)} embeddings, got {len(rows)}")
        return [[float(x) for x in row["embedding"]] for row in rows]
