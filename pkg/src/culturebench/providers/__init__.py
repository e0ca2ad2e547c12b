"""Pluggable chat, search, and embedding clients (live HTTP and offline mocks)."""
from __future__ import annotations

from .base import (
    CallLog,
    CallRecord,
    ChatProvider,
    ChatRequest,
    ChatResponse,
    EmbeddingProvider,
    ProviderConfig,
    RateLimiter,
    SearchProvider,
    SearchResult,
    dedupe_results,
    retry_with_backoff,
    run_parallel,
)
from .http import HttpChatProvider, HttpEmbeddingProvider, HttpSearchProvider
from .mock import (
    MockChatProvider,
    MockEmbedder,
    MockFetcher,
    MockSearchProvider,
    ScriptedJudge,
    ScriptedKnowledgeModel,
    load_fixture_corpus,
)

__all__ = [
    "CallLog",
    "CallRecord",
    "ChatProvider",
    "ChatRequest",
    "ChatResponse",
    "EmbeddingProvider",
    "HttpChatProvider",
    "HttpEmbeddingProvider",
    "HttpSearchProvider",
    "MockChatProvider",
    "MockEmbedder",
    "MockFetcher",
    "MockSearchProvider",
    "ProviderConfig",
    "RateLimiter",
    "ScriptedJudge",
    "ScriptedKnowledgeModel",
    "SearchProvider",
    "SearchResult",
    "dedupe_results",
    "load_fixture_corpus",
    "retry_with_backoff",
    "run_parallel",
]
