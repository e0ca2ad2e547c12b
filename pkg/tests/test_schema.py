from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culturebench.errors import NodeNotFoundError, PreconditionError, SchemaParseError, SchemaValidationError
from culturebench.schema import (
    DimensionNode,
    Level,
    Origin,
    Schema,
    build_query,
    expand_schema,
    leaf_dimensions,
    load_schema,
    retrieval_leaves,
    save_schema,
    validate,
)


def test_canonical_counts(canonical):
    counts = canonical.level_counts()
    assert counts["LAYER"] == 3
    assert counts["CATEGORY"] == 5
    assert counts["TOPIC_ASPECT"] == 18
    assert counts["DIMENSION"] == 140


def test_canonical_validates_clean(canonical):
    assert validate(canonical) == []


def test_roundtrip_structural_equality(canonical, tmp_path):
    path = tmp_path / "schema.json"
    save_schema(canonical, path)
    reloaded = load_schema(path)
    assert reloaded == canonical


def test_missing_parent_is_rejected(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(
        json.dumps(
            {
                "version": "t",
                "nodes": [
                    {"id": "layer.a", "level": "LAYER", "name": "A", "parent": None, "origin": "CANONICAL"},
                    {"id": "cat.b", "level": "CATEGORY", "name": "B", "parent": "layer.missing", "origin": "CANONICAL"},
                ],
            }
        ),
        encoding="utf-8",
    )
    with pytest.raises(SchemaValidationError, match="layer.missing"):
        load_schema(path)


def test_parse_error_names_offending_node(tmp_path):
    path = tmp_path / "malformed.json"
    path.write_text(
        json.dumps(
            {
                "version": "t",
                "nodes": [
                    {"id": "layer.a", "level": "LAYER", "name": "A", "parent": None, "origin": "CANONICAL"},
                    {"id": "cat.b", "level": "NOPE", "name": "B", "parent": "layer.a", "origin": "CANONICAL"},
                ],
            }
        ),
        encoding="utf-8",
    )
    with pytest.raises(SchemaParseError, match="cat.b"):
        load_schema(path)


def test_unknown_fields_rejected(tmp_path):
    path = tmp_path / "extra.json"
    path.write_text(
        json.dumps(
            {
                "version": "t",
                "surprise": 1,
                "nodes": [],
            }
        ),
        encoding="utf-8",
    )
    with pytest.raises(SchemaParseError, match="surprise"):
        load_schema(path)


def test_canonical_flag_enforces_counts(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(
        json.dumps(
            {
                "version": "t",
                "canonical": True,
                "nodes": [
                    {"id": "layer.a", "level": "LAYER", "name": "A", "parent": None, "origin": "CANONICAL"},
                ],
            }
        ),
        encoding="utf-8",
    )
    with pytest.raises(SchemaValidationError, match="LAYER"):
        load_schema(path)


def _node(node_id, level, name, parent, origin=Origin.CANONICAL):
    return DimensionNode(node_id=node_id, level=level, name=name, parent_id=parent, origin=origin)


def _tiny_schema(extra=()):
    nodes = (
        _node("layer.a", Level.LAYER, "A", None),
        _node("cat.b", Level.CATEGORY, "B", "layer.a"),
        _node("asp.c", Level.TOPIC_ASPECT, "C", "cat.b"),
        _node("dim.d", Level.DIMENSION, "thing d", "asp.c"),
        _node("dim.e", Level.DIMENSION, "thing e", "asp.c"),
    ) + tuple(extra)
    return Schema(version="t", nodes=nodes)


def test_duplicate_node_id_violation():
    schema = _tiny_schema(extra=(_node("dim.d", Level.DIMENSION, "thing d again", "asp.c"),))
    violations = validate(schema)
    assert any("uniqueness" in v and "dim.d" in v for v in violations)


def test_sub_dimension_origin_violation():
    bad = _node("sub.x", Level.SUB_DIMENSION, "x", "dim.d", origin=Origin.CANONICAL)
    violations = validate(_tiny_schema(extra=(bad,)))
    assert any("sub.x" in v and "EXPANDED" in v for v in violations)


def test_level_step_violation():
    bad = _node("dim.skip", Level.DIMENSION, "skip", "cat.b")
    violations = validate(_tiny_schema(extra=(bad,)))
    assert any("dim.skip" in v and "one step" in v for v in violations)


def test_repairing_a_violation_leaves_schema_clean():
    bad = _node("sub.x", Level.SUB_DIMENSION, "x", "dim.d", origin=Origin.CANONICAL)
    broken = _tiny_schema(extra=(bad,))
    assert len(validate(broken)) == 1
    repaired = _tiny_schema(extra=(_node("sub.x", Level.SUB_DIMENSION, "x", "dim.d", origin=Origin.EXPANDED),))
    assert validate(repaired) == []


def test_forest_invariant_reaches_layer_in_four_steps(canonical):
    for node in canonical.nodes:
        current = node
        steps = 0
        while current.parent_id is not None:
            current = canonical.node(current.parent_id)
            steps += 1
            assert steps <= 4
        assert current.level == Level.LAYER


def test_leaf_dimensions_full(canonical):
    leaves = leaf_dimensions(canonical)
    assert len(leaves) == 140
    assert all(n.level == Level.DIMENSION for n in leaves)


def test_leaf_dimensions_under_layer(canonical):
    leaves = leaf_dimensions(canonical, under="Institutional Norms")
    names = {n.name for n in leaves}
    assert "celebration of festivals" in names
    assert 0 < len(leaves) < 140
    assert all(
        canonical.ancestor_at(n.node_id, Level.LAYER).name == "Institutional Norms" for n in leaves
    )


def test_leaf_dimensions_under_leaf(canonical):
    node = canonical.resolve("dim.alcohol")
    assert leaf_dimensions(canonical, under="dim.alcohol") == [node]


def test_leaf_dimensions_unknown_node(canonical):
    with pytest.raises(NodeNotFoundError):
        leaf_dimensions(canonical, under="dim.not-a-node")


def test_leaf_ordering_is_stable_and_total(canonical):
    first = [n.node_id for n in leaf_dimensions(canonical)]
    second = [n.node_id for n in leaf_dimensions(canonical)]
    assert first == second
    assert len(set(first)) == len(first)
    # Grouped by layer then category then aspect: indices of each group are contiguous.
    aspects = [canonical.ancestor_at(n, Level.TOPIC_ASPECT).node_id for n in first]
    seen = set()
    previous = None
    for aspect in aspects:
        if aspect != previous:
            assert aspect not in seen
            seen.add(aspect)
            previous = aspect


def test_build_query_festival_example(canonical):
    node = canonical.resolve("dim.celebration-of-festivals")
    spec = build_query(node, "Spanish", "en", schema=canonical)
    assert spec.query_text.lower() == "celebration of festivals in spanish culture"
    assert spec.dimension_id == "dim.celebration-of-festivals"
    assert spec.language == "en"


def test_build_query_eating_habits_example(canonical):
    node = canonical.resolve("dim.eating-habits")
    spec = build_query(node, "Spanish", "en", schema=canonical)
    assert spec.query_text == "eating habits in Spanish culture"


def test_build_query_localized_name(canonical):
    node = canonical.resolve("dim.eating-habits")
    spec = build_query(node, "española", "es", schema=canonical)
    assert spec.query_text == "hábitos alimentarios en la cultura española"


def test_build_query_empty_culture(canonical):
    node = canonical.resolve("dim.alcohol")
    with pytest.raises(PreconditionError):
        build_query(node, "   ", "en")


def test_build_query_rejects_non_leaf(canonical):
    layer = canonical.resolve("Institutional Norms")
    with pytest.raises(PreconditionError):
        build_query(layer, "Spanish", "en")


def test_expand_schema_empty_is_identity(canonical):
    assert expand_schema(canonical, []) == canonical


def test_expand_schema_adds_sub_dimension(canonical):
    expanded = expand_schema(canonical, [("dim.alcohol", "Cultural Integration")])
    subs = [n for n in expanded.nodes if n.level == Level.SUB_DIMENSION]
    assert len(subs) == 1
    assert subs[0].parent_id == "dim.alcohol"
    assert subs[0].origin == Origin.EXPANDED
    assert subs[0].name == "Cultural Integration"
    # input unchanged
    assert canonical.level_counts()["SUB_DIMENSION"] == 0
    assert validate(expanded) == []


def test_expand_schema_deduplicates(canonical):
    keywords = [("dim.alcohol", "Cultural Integration"), ("dim.alcohol", "Cultural Integration")]
    expanded = expand_schema(canonical, keywords)
    assert expanded.level_counts()["SUB_DIMENSION"] == 1


def test_expand_schema_namespaces_by_dimension(canonical):
    keywords = [("dim.alcohol", "Norms"), ("dim.pork", "Norms")]
    expanded = expand_schema(canonical, keywords)
    subs = {n.node_id for n in expanded.nodes if n.level == Level.SUB_DIMENSION}
    assert len(subs) == 2


def test_expand_schema_unknown_dimension(canonical):
    with pytest.raises(NodeNotFoundError):
        expand_schema(canonical, [("dim.not-here", "X")])


def test_expand_schema_rejects_non_dimension_target(canonical):
    with pytest.raises(PreconditionError):
        expand_schema(canonical, [("asp.religion", "X")])


def test_expand_schema_rejects_empty_label(canonical):
    with pytest.raises(PreconditionError):
        expand_schema(canonical, [("dim.alcohol", "  ")])


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["dim.alcohol", "dim.pork", "dim.religion", "dim.eating-habits"]),
            st.sampled_from(["Norms", "Integration", "Habits", "Rules", "Origins"]),
        ),
        max_size=8,
    )
)
def test_expand_schema_idempotent(keywords):
    schema = load_schema_cached()
    once = expand_schema(schema, keywords)
    twice = expand_schema(once, keywords)
    assert once == twice


_CACHED = None


def load_schema_cached():
    global _CACHED
    if _CACHED is None:
        from culturebench.schema import load_canonical_schema

        _CACHED = load_canonical_schema()
    return _CACHED


def test_retrieval_leaves_with_sub_dimensions(canonical):
    expanded = expand_schema(canonical, [("dim.alcohol", "A"), ("dim.pork", "B")])
    assert len(retrieval_leaves(expanded)) == 140
    assert len(retrieval_leaves(expanded, include_sub_dimensions=True)) == 142
