# Curation: de-duplicate the knowledge base, cluster each dimension into
# labeled sub-categories, derive keywords, and extend the schema with them.

from culturebench.curation import (
    apply_cluster_labels,
    cluster_kb,
    dedup,
    derive_keywords,
    kb_stats,
)
from culturebench.providers import MockChatProvider, MockEmbedder
from culturebench.schema import Level, expand_schema, load_canonical_schema

# Reuse the extraction walkthrough to get a verified KB.
import importlib.util
from pathlib import Path

spec = importlib.util.spec_from_file_location("kb_demo", Path(__file__).parent / "02_build_knowledge_base.py")
kb_demo = importlib.util.module_from_spec(spec)
spec.loader.exec_module(kb_demo)
verified = kb_demo.verified
schema = load_canonical_schema()

print("\n--- curation ---")
embed = MockEmbedder()
deduped = dedup(verified, similarity_threshold=0.92, embed=embed)
print(f"Dedup: {len(verified)} -> {len(deduped)} instances")

# k per dimension is chosen by silhouette score; with a mock chat the labels
# fall back to deterministic top-term pairs.
assignments = cluster_kb(deduped, embed, chat=MockChatProvider(), seed=7)
labeled = apply_cluster_labels(deduped, assignments)
clusters = {(a.dimension_id, a.cluster_index) for a in assignments}
print(f"Clusters: {len(clusters)} across {len({d for d, _ in clusters})} dimensions")

keywords = derive_keywords(assignments)
print("\nDerived keywords (dimension, label):")
for dimension_id, label in keywords[:8]:
    print(f"  {dimension_id:35s} {label}")

expanded = expand_schema(schema, keywords)
subs = sum(1 for n in expanded.nodes if n.level == Level.SUB_DIMENSION)
print(f"\nSchema gains {subs} sub-dimension nodes from expansion")

stats = kb_stats(labeled)
print("\nKB statistics")
print("  total instances:", stats.total_instances)
print("  dimensions covered:", stats.dimensions_covered)
print("  by source category:")
for category, count in sorted(stats.per_source_counts.items()):
    print(f"    {category:16s} {count}")
