from __future__ import annotations

import pytest

from culturebench.acquisition import fetch_documents, llm_filter, plan_retrieval
from culturebench.extraction import (
    QC_VERIFIED,
    apply_verdict,
    extract_knowledge,
    verify_instance,
)
from culturebench.providers import MockChatProvider, MockEmbedder, MockFetcher, MockSearchProvider
from culturebench.schema import load_canonical_schema


@pytest.fixture(scope="session")
def canonical():
    return load_canonical_schema()


@pytest.fixture()
def mock_chat():
    return MockChatProvider()


@pytest.fixture()
def mock_embed():
    return MockEmbedder()


@pytest.fixture(scope="session")
def fixture_documents(canonical):
    """Accepted raw documents from the bundled fixture corpus (English, Spanish culture)."""
    chat, search, fetcher = MockChatProvider(), MockSearchProvider(), MockFetcher()
    names = {n.node_id: n.name for n in canonical.nodes}
    docs = []
    for spec in plan_retrieval(canonical, "Spanish", "en"):
        for doc in fetch_documents(spec, fetcher=fetcher, search=search, top_k=5):
            if llm_filter(doc, chat, dimension_name=names[doc.dimension_id]).accepted:
                docs.append(doc)
    return docs


@pytest.fixture(scope="session")
def fixture_kb(canonical, fixture_documents):
    """Verified knowledge instances extracted from the fixture documents."""
    chat = MockChatProvider()
    instances = []
    for doc in fixture_documents:
        node = canonical.node(doc.dimension_id)
        for inst in extract_knowledge(doc, node, chat):
            verdict = verify_instance(inst, doc, chat, dimension_name=node.name)
            instances.append(apply_verdict(inst, verdict))
    return [i for i in instances if i.qc_status == QC_VERIFIED]
