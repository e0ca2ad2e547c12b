# A tour of the cultural-dimension schema: the 4-level taxonomy that drives
# retrieval, generation, and reporting. Runs fully offline.

from culturebench.schema import (
    Level,
    build_query,
    expand_schema,
    leaf_dimensions,
    load_canonical_schema,
)

schema = load_canonical_schema()

print("Canonical schema", schema.version)
print("Node counts per level:")
for level, count in schema.level_counts().items():
    print(f"  {level:13s} {count}")

# The three layers sit at the roots; every leaf dimension reaches its layer
# in at most four parent steps.
layers = [n for n in schema.nodes if n.level == Level.LAYER]
print("\nLayers:", ", ".join(n.name for n in layers))

# Walk one leaf upward.
leaf = schema.resolve("dim.celebration-of-festivals")
chain = [leaf.name] + [a.name for a in schema.ancestors(leaf.node_id)]
print("\nAncestry of a leaf:", "  ->  ".join(chain))

# Deterministically ordered leaves, full and filtered.
print("\nTotal leaf dimensions:", len(leaf_dimensions(schema)))
institutional = leaf_dimensions(schema, under="Institutional Norms")
print("Leaves under Institutional Norms:", len(institutional))
print("First five:", ", ".join(n.name for n in institutional[:5]))

# Leaves become search queries for a target culture; per-language templates
# and localized dimension names come from the data file.
for culture, language in (("Spanish", "en"), ("española", "es")):
    spec = build_query(schema.resolve("dim.eating-habits"), culture, language, schema=schema)
    print(f"\nQuery [{language}]: {spec.query_text}")

# Clustering-derived keywords extend the schema with sub-dimensions.
expanded = expand_schema(
    schema,
    [("dim.alcohol", "Legal and Social Norms"), ("dim.alcohol", "Drinking Habits and Moderation")],
)
subs = [n for n in expanded.nodes if n.level == Level.SUB_DIMENSION]
print("\nAfter expansion:", len(subs), "sub-dimensions")
for node in subs:
    print(f"  {node.node_id}  (under {node.parent_id})")
