# From schema leaves to a verified knowledge base, using the bundled fixture
# corpus and the deterministic mock providers (no network).

from culturebench.acquisition import fetch_documents, llm_filter, plan_retrieval
from culturebench.extraction import QC_VERIFIED, apply_verdict, extract_knowledge, verify_instance
from culturebench.providers import MockChatProvider, MockFetcher, MockSearchProvider
from culturebench.schema import load_canonical_schema

schema = load_canonical_schema()
chat = MockChatProvider()
search = MockSearchProvider()
fetcher = MockFetcher()
names = {n.node_id: n.name for n in schema.nodes}

# One query per leaf dimension; the fixture corpus only answers a handful.
specs = plan_retrieval(schema, "Spanish", "en")
print("Planned queries:", len(specs))

documents, rejected = [], []
for spec in specs:
    for doc in fetch_documents(spec, fetcher=fetcher, search=search, top_k=5):
        verdict = llm_filter(doc, chat, dimension_name=names[doc.dimension_id])
        if verdict.accepted:
            documents.append(doc)
        else:
            rejected.append((doc.url, verdict.reason))

print("Accepted documents:", len(documents))
for url, reason in rejected:
    print("  rejected:", reason, url)

# Summarize each accepted page into statements, then verify every statement
# against its source before it may enter the knowledge base.
instances = []
for doc in documents:
    node = schema.node(doc.dimension_id)
    for inst in extract_knowledge(doc, node, chat):
        verdict = verify_instance(inst, doc, chat, dimension_name=node.name)
        instances.append(apply_verdict(inst, verdict))

verified = [i for i in instances if i.qc_status == QC_VERIFIED]
print(f"\nKnowledge instances: {len(instances)} extracted, {len(verified)} verified")
print("\nA few verified statements:")
for inst in verified[:5]:
    print(f"  [{names[inst.dimension_id]}] {inst.statement}")
    print(f"      source: {inst.source_url} ({inst.source_category})")
