"""Provider contracts: request/response types, rate limiting, retries, call logging.

Concrete clients (mock and HTTP) live in sibling modules; everything here is
transport-agnostic. All outbound calls are recorded in a :class:`CallLog`,
which is also how tests assert that mock-configured runs never go live.
"""
from __future__ import annotations

import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence, TypeVar

from ..errors import PreconditionError, ProviderAuthError, ProviderError
from ..storage import append_jsonl, digest

T = TypeVar("T")
R = TypeVar("R")

BACKOFF_CAP_SECONDS = 60.0


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: str = ""
    language: str = "en"
    max_output_tokens: int = 1024
    temperature: float = 0.0

    def __post_init__(self):
        if not self.user_text or not self.user_text.strip():
            raise PreconditionError("ChatRequest.user_text must be nonempty")
        if self.max_output_tokens < 1:
            raise PreconditionError("ChatRequest.max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise PreconditionError("ChatRequest.temperature must be non-negative")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_id: str
    token_counts: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class SearchResult:
    url: str
    title: str
    snippet: str
    rank: int


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = ""
    credential_ref: str = ""
    requests_per_minute: int = 60
    max_retries: int = 3
    timeout: float = 30.0
    model: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.requests_per_minute < 1:
            raise PreconditionError("requests_per_minute must be positive")
        if self.max_retries < 0:
            raise PreconditionError("max_retries must be non-negative")


class ChatProvider(Protocol):
    provider_id: str

    def chat(self, request: ChatRequest) -> ChatResponse: ...


class SearchProvider(Protocol):
    provider_id: str

    def search(self, query_text: str, top_k: int = 5) -> list[SearchResult]: ...


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass(frozen=True)
class CallRecord:
    provider_id: str
    request_digest: str
    latency: float
    outcome: str

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "request_digest": self.request_digest,
            "latency": round(self.latency, 6),
            "outcome": self.outcome,
        }


class CallLog:
    """Thread-safe append-only record of every attempted provider call."""

    def __init__(self, sink_path=None, clock=None):
        self._records: list[CallRecord] = []
        self._lock = threading.Lock()
        self._sink_path = sink_path
        self._clock = clock

    def record(self, provider_id: str, request_text: str, latency: float, outcome: str) -> None:
        rec = CallRecord(provider_id=provider_id, request_digest=digest(request_text), latency=latency, outcome=outcome)
        with self._lock:
            self._records.append(rec)
            if self._sink_path is not None:
                append_jsonl(self._sink_path, rec.to_dict())

    @property
    def records(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


class RateLimiter:
    """Sliding-window limiter: at most ``requests_per_minute`` acquisitions per 60 s.

    Clock and sleep are injectable so tests can drive it with fake time.
    Calls over budget are delayed, never dropped.
    """

    def __init__(
        self,
        requests_per_minute: int,
        now: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute < 1:
            raise PreconditionError("requests_per_minute must be positive")
        self._rpm = requests_per_minute
        self._now = now
        self._sleep = sleep
        self._window: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                t = self._now()
                self._window = [w for w in self._window if t - w < 60.0]
                if len(self._window) < self._rpm:
                    self._window.append(t)
                    return
                wait = 60.0 - (t - self._window[0])
            self._sleep(max(wait, 0.0))


def retry_with_backoff(
    fn: Callable[[], T],
    max_retries: int,
    rng: random.Random | None = None,
    sleep: Callable[[float], None] = time.sleep,
    base_delay: float = 0.5,
) -> T:
    """Run ``fn``, retrying transient provider failures with full-jitter backoff.

    Authentication failures are never retried. Delays double per attempt and
    are capped at 60 seconds.
    """
    rng = rng or random.Random()
    attempt = 0
    while True:
        try:
            return fn()
        except ProviderAuthError:
            raise
        except ProviderError:
            if attempt >= max_retries:
                raise
            delay = min(base_delay * (2**attempt), BACKOFF_CAP_SECONDS)
            sleep(rng.uniform(0.0, delay))
            attempt += 1


def dedupe_results(results: Iterable[SearchResult]) -> list[SearchResult]:
    """Drop duplicate URLs (first occurrence wins) and renumber ranks 1..n."""
    seen: set[str] = set()
    out: list[SearchResult] = []
    for r in sorted(results, key=lambda r: r.rank):
        if r.url in seen:
            continue
        seen.add(r.url)
        out.append(SearchResult(url=r.url, title=r.title, snippet=r.snippet, rank=len(out) + 1))
    return out


def run_parallel(fn: Callable[[T], R], items: Sequence[T], max_workers: int = 4) -> list[R]:
    """Apply ``fn`` to items under bounded parallelism, preserving input order."""
    if not items:
        return []
    if max_workers <= 1 or len(items) == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))
