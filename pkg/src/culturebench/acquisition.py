"""Retrieval planning, page fetching and cleaning, and source classification.

Turns schema leaves into search queries, fetches and cleans the hits into
provenance-carrying raw documents, tags each with a source category from an
editable rule table, and screens them for relevance with a chat call.
"""
from __future__ import annotations

import importlib.resources
import json
import re
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable
from urllib.parse import urlparse

from . import prompts
from .errors import PreconditionError
from .providers.base import ChatProvider, ChatRequest, SearchProvider
from .schema import QuerySpec, Schema, build_query, retrieval_leaves
from .storage import digest

SOURCE_CATEGORIES = (
    "ENCYCLOPEDIA",
    "GOVERNMENT",
    "MEDIA",
    "TOURISM_CULTURE",
    "EDUCATION",
    "FORUM",
    "OTHER",
)

DEFAULT_BODY_BUDGET = 20000

_URL_RE = re.compile(r"^https?://[^\s]+$")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    url: str
    title: str
    body_text: str
    dimension_id: str
    culture: str
    language: str
    source_category: str
    fetched_at: str
    search_rank: int | None = None

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "url": self.url,
            "title": self.title,
            "body_text": self.body_text,
            "dimension_id": self.dimension_id,
            "culture": self.culture,
            "language": self.language,
            "source_category": self.source_category,
            "fetched_at": self.fetched_at,
            "search_rank": self.search_rank,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RawDocument":
        return cls(
            doc_id=d["doc_id"],
            url=d["url"],
            title=d["title"],
            body_text=d["body_text"],
            dimension_id=d["dimension_id"],
            culture=d["culture"],
            language=d["language"],
            source_category=d["source_category"],
            fetched_at=d["fetched_at"],
            search_rank=d.get("search_rank"),
        )


@dataclass(frozen=True)
class FilterVerdict:
    accepted: bool
    reason: str  # RELEVANT, OFF_TOPIC, BOILERPLATE, WRONG_CULTURE, UNDECIDED
    rationale: str = ""


def plan_retrieval(
    schema: Schema,
    culture: str,
    language: str = "en",
    include_sub_dimensions: bool = False,
) -> list[QuerySpec]:
    """One deterministic QuerySpec per retrieval leaf (140 for the canonical schema)."""
    if not culture.strip():
        raise PreconditionError("culture must be nonempty")
    leaves = retrieval_leaves(schema, include_sub_dimensions=include_sub_dimensions)
    return [build_query(leaf, culture, language, schema=schema) for leaf in leaves]


# ---------------------------------------------------------------------------
# HTML cleaning

_DROP_TAGS = {"script", "style", "nav", "header", "footer", "aside", "noscript", "form", "iframe"}
_BLOCK_TAGS = {"p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "td", "blockquote"}


class _TextExtractor(HTMLParser):
    """Keeps heading/paragraph/list text, drops navigation, script, and style."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = []
        self._current: list[str] = []
        self._drop_depth = 0
        self._in_block = 0

    def handle_starttag(self, tag, attrs):
        if tag in _DROP_TAGS:
            self._drop_depth += 1
        elif tag in _BLOCK_TAGS:
            self._in_block += 1

    def handle_endtag(self, tag):
        if tag in _DROP_TAGS:
            self._drop_depth = max(0, self._drop_depth - 1)
        elif tag in _BLOCK_TAGS:
            self._in_block = max(0, self._in_block - 1)
            self._flush()

    def handle_data(self, data):
        if self._drop_depth == 0 and self._in_block > 0:
            self._current.append(data)

    def _flush(self):
        text = " ".join("".join(self._current).split())
        self._current = []
        if text:
            self.blocks.append(text)

    def close(self):
        super().close()
        self._flush()


def clean_html(html: str, body_budget: int = DEFAULT_BODY_BUDGET) -> str:
    """Extract main text from HTML, truncated to the configured character budget."""
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    if parser.blocks:
        text = "\n".join(parser.blocks)
    elif not re.search(r"<\w+[^>]*>", html):
        # Plain-text input (no tags at all): normalize whitespace per line.
        lines = [" ".join(line.split()) for line in html.splitlines()]
        text = "\n".join(line for line in lines if line)
    else:
        text = ""
    return text[:body_budget].strip()


# ---------------------------------------------------------------------------
# Source classification


def _load_rules(path: str | Path | None = None) -> dict:
    if path is None:
        path = Path(str(importlib.resources.files("culturebench").joinpath("data/source_rules.json")))
    return json.loads(Path(path).read_text(encoding="utf-8"))


_DEFAULT_RULES = None


def classify_source(url: str, title: str = "", rules: dict | None = None) -> str:
    """Deterministic category from the ordered rule table: hosts, then titles, then OTHER."""
    global _DEFAULT_RULES
    if rules is None:
        if _DEFAULT_RULES is None:
            _DEFAULT_RULES = _load_rules()
        rules = _DEFAULT_RULES
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.hostname:
        raise PreconditionError(f"malformed url: {url!r}")
    host = parsed.hostname.lower()
    for rule in rules["rules"]:
        for suffix in rule.get("host_suffixes", []):
            if host == suffix.lstrip(".") or host.endswith(suffix if suffix.startswith(".") else "." + suffix):
                return rule["category"]
    for rule in rules["rules"]:
        if any(frag in host for frag in rule.get("host_contains", [])):
            return rule["category"]
    title_low = title.lower()
    for rule in rules["rules"]:
        if any(kw in title_low for kw in rule.get("title_keywords", [])):
            return rule["category"]
    return rules.get("default", "OTHER")


# ---------------------------------------------------------------------------
# Fetching


def _make_document(
    spec: QuerySpec,
    url: str,
    title: str,
    body: str,
    fetched_at: str,
    rank: int | None,
) -> RawDocument:
    return RawDocument(
        doc_id=digest(url, fetched_at[:10]),
        url=url,
        title=title,
        body_text=body,
        dimension_id=spec.dimension_id,
        culture=spec.culture,
        language=spec.language,
        source_category=classify_source(url, title),
        fetched_at=fetched_at,
        search_rank=rank,
    )


def fetch_documents(
    spec: QuerySpec,
    fetcher,
    search: SearchProvider | None = None,
    top_k: int = 5,
    seed_urls: list[str] | None = None,
    fetched_at: str = "1970-01-01T00:00:00Z",
    body_budget: int = DEFAULT_BODY_BUDGET,
    warn: Callable[[str], None] | None = None,
) -> list[RawDocument]:
    """Fetch, clean, and tag the pages for one query.

    Search hits and curated seed URLs are merged and de-duplicated by URL;
    individual page failures are skipped (and reported through ``warn``),
    never aborting the batch. Pages that clean to an empty body are dropped.
    """
    if not spec.query_text.strip():
        raise PreconditionError("query_text must be nonempty")
    candidates: list[tuple[str, str, int | None]] = []
    seen: set[str] = set()
    if search is not None:
        for result in search.search(spec.query_text, top_k=top_k):
            if result.url not in seen:
                seen.add(result.url)
                candidates.append((result.url, result.title, result.rank))
    for url in seed_urls or []:
        if url not in seen:
            seen.add(url)
            candidates.append((url, "", None))

    documents: list[RawDocument] = []
    for url, title, rank in candidates[: max(top_k, len(seed_urls or []))]:
        if not _URL_RE.match(url):
            if warn:
                warn(f"skipping malformed url {url!r}")
            continue
        try:
            raw = fetcher.fetch(url)
        except Exception as exc:
            if warn:
                warn(f"fetch failed for {url}: {exc}")
            continue
        body = clean_html(raw, body_budget=body_budget)
        if not body:
            if warn:
                warn(f"empty body after cleaning: {url}")
            continue
        documents.append(_make_document(spec, url, title, body, fetched_at, rank))
    if not documents and candidates and warn:
        warn(f"all {len(candidates)} urls failed for query {spec.query_text!r}")
    return documents


class PoliteFetcher:
    """Live page fetcher with a per-host minimum delay and custom user agent."""

    provider_id = "http:fetch"

    def __init__(
        self,
        timeout: float = 30.0,
        per_host_delay: float = 1.0,
        user_agent: str = "culturebench/0.1 (research toolkit)",
        now=None,
        sleep=None,
    ):
        import time as _time

        self._timeout = timeout
        self._delay = per_host_delay
        self._user_agent = user_agent
        self._now = now or _time.monotonic
        self._sleep = sleep or _time.sleep
        self._last_hit: dict[str, float] = {}

    def fetch(self, url: str) -> str:
        import requests

        host = urlparse(url).hostname or ""
        last = self._last_hit.get(host)
        if last is not None:
            wait = self._delay - (self._now() - last)
            if wait > 0:
                self._sleep(wait)
        self._last_hit[host] = self._now()
        response = requests.get(url, timeout=self._timeout, headers={"User-Agent": self._user_agent})
        response.raise_for_status()
        return response.text


def load_seed_urls(path: str | Path) -> list[tuple[str, str | None]]:
    """Seed-URL file: one URL per line, optionally followed by a dimension id."""
    out: list[tuple[str, str | None]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        out.append((parts[0], parts[1] if len(parts) > 1 else None))
    return out


# ---------------------------------------------------------------------------
# LLM relevance filtering

_VERDICT_RE = re.compile(r"VERDICT:\s*(RELEVANT|OFF_TOPIC|BOILERPLATE|WRONG_CULTURE)", re.IGNORECASE)


def llm_filter(doc: RawDocument, chat: ChatProvider, dimension_name: str | None = None) -> FilterVerdict:
    """Screen a document for relevance; unparseable verdicts get one retry."""
    if not doc.body_text.strip():
        raise PreconditionError(f"{doc.doc_id}: document body is empty")
    prompt = prompts.FILTER_TEMPLATE.format(
        dimension=dimension_name or doc.dimension_id,
        culture=doc.culture,
        title=doc.title,
        url=doc.url,
        body=doc.body_text,
    )
    request = ChatRequest(user_text=prompt, system_text=prompts.FILTER_SYSTEM, language=doc.language, temperature=0.0)
    for _ in range(2):
        response = chat.chat(request)
        match = _VERDICT_RE.search(response.text)
        if match:
            verdict = match.group(1).upper()
            rationale = response.text.split("\n", 1)[1].strip() if "\n" in response.text else ""
            return FilterVerdict(accepted=verdict == "RELEVANT", reason=verdict, rationale=rationale)
    return FilterVerdict(accepted=False, reason="UNDECIDED", rationale="no parseable verdict after retry")


def sort_documents(documents: list[RawDocument]) -> list[RawDocument]:
    """Stage-end stable sort by doc_id for deterministic persistence."""
    return sorted(documents, key=lambda d: d.doc_id)
