"""Hierarchical cultural-dimension schema: load, validate, query, expand.

The schema is a forest with three layers at the roots and four canonical
levels (layer -> category -> topic aspect -> dimension); clustering-derived
sub-dimensions may hang below dimensions. The shipped data file, not code,
is the source of truth for the canonical taxonomy.
"""
from __future__ import annotations

import importlib.resources
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import NodeNotFoundError, PreconditionError, SchemaParseError, SchemaValidationError

CANONICAL_COUNTS = {"LAYER": 3, "CATEGORY": 5, "TOPIC_ASPECT": 18, "DIMENSION": 140}

_NODE_FIELDS = {"id", "level", "name", "parent", "origin"}
_TOP_FIELDS = {"version", "canonical", "culture_tag", "display_abbreviations", "localized_names", "nodes"}

# Query templates per language; "{dimension} in {culture} culture" is the
# documented English pattern, the rest localize the same shape.
QUERY_TEMPLATES = {
    "en": "{dimension} in {culture} culture",
    "es": "{dimension} en la cultura {culture}",
    "zh": "{culture}文化中的{dimension}",
}


class Level(str, Enum):
    LAYER = "LAYER"
    CATEGORY = "CATEGORY"
    TOPIC_ASPECT = "TOPIC_ASPECT"
    DIMENSION = "DIMENSION"
    SUB_DIMENSION = "SUB_DIMENSION"


_LEVEL_ORDER = [Level.LAYER, Level.CATEGORY, Level.TOPIC_ASPECT, Level.DIMENSION, Level.SUB_DIMENSION]
_LEAF_LEVELS = {Level.DIMENSION, Level.SUB_DIMENSION}


class Origin(str, Enum):
    CANONICAL = "CANONICAL"
    EXPANDED = "EXPANDED"


@dataclass(frozen=True)
class DimensionNode:
    node_id: str
    level: Level
    name: str
    parent_id: str | None
    origin: Origin

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "level": self.level.value,
            "name": self.name,
            "parent": self.parent_id,
            "origin": self.origin.value,
        }


@dataclass(frozen=True)
class QuerySpec:
    dimension_id: str
    culture: str
    language: str
    query_text: str


@dataclass(frozen=True)
class Schema:
    """Immutable snapshot of the taxonomy plus display/localization metadata."""

    version: str
    nodes: tuple[DimensionNode, ...]
    culture_tag: str | None = None
    display_abbreviations: dict[str, str] = field(default_factory=dict)
    localized_names: dict[str, dict[str, str]] = field(default_factory=dict)
    _by_id: dict[str, DimensionNode] = field(default_factory=dict, repr=False, compare=False)
    _order: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_id: dict[str, DimensionNode] = {}
        order: dict[str, int] = {}
        for i, node in enumerate(self.nodes):
            by_id.setdefault(node.node_id, node)
            order.setdefault(node.node_id, i)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_order", order)

    def node(self, node_id: str) -> DimensionNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise NodeNotFoundError(f"no node with id {node_id!r}") from None

    def resolve(self, ref: str) -> DimensionNode:
        """Look a node up by id, falling back to an exact unique name match."""
        if ref in self._by_id:
            return self._by_id[ref]
        matches = [n for n in self.nodes if n.name == ref]
        if len(matches) == 1:
            return matches[0]
        if not matches:
            raise NodeNotFoundError(f"no node with id or name {ref!r}")
        raise NodeNotFoundError(f"name {ref!r} is ambiguous across {len(matches)} nodes")

    def children(self, node_id: str) -> list[DimensionNode]:
        return [n for n in self.nodes if n.parent_id == node_id]

    def ancestors(self, node_id: str) -> list[DimensionNode]:
        """Chain from the node's parent up to its layer (at most 4 steps)."""
        out = []
        current = self.node(node_id)
        for _ in range(len(_LEVEL_ORDER)):
            if current.parent_id is None:
                break
            current = self.node(current.parent_id)
            out.append(current)
        return out

    def ancestor_at(self, node_id: str, level: Level) -> DimensionNode | None:
        node = self.node(node_id)
        if node.level == level:
            return node
        for anc in self.ancestors(node_id):
            if anc.level == level:
                return anc
        return None

    def level_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {lvl.value: 0 for lvl in _LEVEL_ORDER}
        for n in self.nodes:
            counts[n.level.value] += 1
        return counts

    def localized_name(self, node_id: str, language: str) -> str:
        """Localized node name when the data file supplies one, else the default."""
        name = self.localized_names.get(language, {}).get(node_id)
        return name if name else self.node(node_id).name

    def order_index(self, node_id: str) -> int:
        return self._order[node_id]

    def to_dict(self) -> dict:
        doc: dict = {"version": self.version}
        if self.culture_tag is not None:
            doc["culture_tag"] = self.culture_tag
        if self.display_abbreviations:
            doc["display_abbreviations"] = dict(self.display_abbreviations)
        if self.localized_names:
            doc["localized_names"] = {k: dict(v) for k, v in self.localized_names.items()}
        doc["nodes"] = [n.to_dict() for n in self.nodes]
        return doc


def slugify(text: str) -> str:
    s = text.lower().replace("&", "and")
    s = re.sub(r"[^a-z0-9À-ɏ一-鿿]+", "-", s).strip("-")
    return s or "x"


def canonical_schema_path() -> Path:
    return Path(str(importlib.resources.files("culturebench").joinpath("data/canonical_schema.json")))


def load_canonical_schema() -> Schema:
    return load_schema(canonical_schema_path())


def _parse_node(raw: dict, index: int) -> DimensionNode:
    if not isinstance(raw, dict):
        raise SchemaParseError(f"node #{index} is not an object")
    unknown = set(raw) - _NODE_FIELDS
    node_label = raw.get("id", f"#{index}")
    if unknown:
        raise SchemaParseError(f"node {node_label!r}: unknown fields {sorted(unknown)}")
    missing = _NODE_FIELDS - set(raw)
    if missing:
        raise SchemaParseError(f"node {node_label!r}: missing fields {sorted(missing)}")
    try:
        level = Level(raw["level"])
    except ValueError:
        raise SchemaParseError(f"node {node_label!r}: unknown level {raw['level']!r}") from None
    try:
        origin = Origin(raw["origin"])
    except ValueError:
        raise SchemaParseError(f"node {node_label!r}: unknown origin {raw['origin']!r}") from None
    name = raw["name"]
    if not isinstance(name, str) or not name.strip():
        raise SchemaParseError(f"node {node_label!r}: name must be a nonempty string")
    parent = raw["parent"]
    if parent is not None and not isinstance(parent, str):
        raise SchemaParseError(f"node {node_label!r}: parent must be a string or null")
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise SchemaParseError(f"node #{index}: id must be a nonempty string")
    return DimensionNode(node_id=raw["id"], level=level, name=name, parent_id=parent, origin=origin)


def load_schema(source: str | Path) -> Schema:
    """Load and validate a schema file.

    A file marked ``"canonical": true`` must additionally carry exactly the
    canonical per-level node counts.
    """
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaParseError(f"{path}: top level must be an object")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise SchemaParseError(f"{path}: unknown top-level fields {sorted(unknown)}")
    if "version" not in doc or not isinstance(doc["version"], str):
        raise SchemaParseError(f"{path}: missing or non-string version")
    if "nodes" not in doc or not isinstance(doc["nodes"], list):
        raise SchemaParseError(f"{path}: missing node array")
    nodes = tuple(_parse_node(raw, i) for i, raw in enumerate(doc["nodes"]))
    schema = Schema(
        version=doc["version"],
        nodes=nodes,
        culture_tag=doc.get("culture_tag"),
        display_abbreviations=dict(doc.get("display_abbreviations", {})),
        localized_names={k: dict(v) for k, v in doc.get("localized_names", {}).items()},
    )
    violations = validate(schema)
    if violations:
        raise SchemaValidationError(f"{path}: " + "; ".join(violations))
    if doc.get("canonical"):
        counts = schema.level_counts()
        actual = {k: counts.get(k, 0) for k in CANONICAL_COUNTS}
        if actual != CANONICAL_COUNTS:
            raise SchemaValidationError(
                f"{path}: file declared canonical but counts are {actual}, expected {CANONICAL_COUNTS}"
            )
    return schema


def save_schema(schema: Schema, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(schema.to_dict(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def validate(schema: Schema) -> list[str]:
    """Structural invariant check; returns one description per violation."""
    violations: list[str] = []
    seen: dict[str, int] = {}
    for node in schema.nodes:
        seen[node.node_id] = seen.get(node.node_id, 0) + 1
    for node_id, count in seen.items():
        if count > 1:
            violations.append(f"{node_id}: node_id appears {count} times (uniqueness)")

    by_id = {n.node_id: n for n in schema.nodes}
    for node in schema.nodes:
        if node.level == Level.LAYER:
            if node.parent_id is not None:
                violations.append(f"{node.node_id}: LAYER node must not have a parent")
            continue
        if node.parent_id is None:
            violations.append(f"{node.node_id}: non-LAYER node has no parent")
            continue
        parent = by_id.get(node.parent_id)
        if parent is None:
            violations.append(f"{node.node_id}: parent {node.parent_id!r} does not exist")
            continue
        expected_parent_level = _LEVEL_ORDER[_LEVEL_ORDER.index(node.level) - 1]
        if parent.level != expected_parent_level:
            violations.append(
                f"{node.node_id}: parent level {parent.level.value} is not one step above {node.level.value}"
            )
    for node in schema.nodes:
        if node.level == Level.SUB_DIMENSION and node.origin != Origin.EXPANDED:
            violations.append(f"{node.node_id}: SUB_DIMENSION must have origin EXPANDED")
        if node.level != Level.SUB_DIMENSION and node.origin == Origin.EXPANDED:
            violations.append(f"{node.node_id}: only SUB_DIMENSION nodes may have origin EXPANDED")

    # Cycle guard: parent chains must reach a layer within the level depth.
    for node in schema.nodes:
        current = node
        for _ in range(len(_LEVEL_ORDER) + 1):
            if current.parent_id is None:
                break
            nxt = by_id.get(current.parent_id)
            if nxt is None or nxt.node_id == node.node_id:
                break
            current = nxt
        else:
            violations.append(f"{node.node_id}: parent chain does not reach a layer (cycle?)")
    return violations


def _sort_key(schema: Schema, node: DimensionNode) -> tuple:
    layer = schema.ancestor_at(node.node_id, Level.LAYER)
    category = schema.ancestor_at(node.node_id, Level.CATEGORY)
    aspect = schema.ancestor_at(node.node_id, Level.TOPIC_ASPECT)
    return (
        schema.order_index(layer.node_id) if layer else -1,
        schema.order_index(category.node_id) if category else -1,
        schema.order_index(aspect.node_id) if aspect else -1,
        node.name.lower(),
        node.node_id,
    )


def _in_subtree(schema: Schema, node: DimensionNode, root_id: str) -> bool:
    if node.node_id == root_id:
        return True
    return any(a.node_id == root_id for a in schema.ancestors(node.node_id))


def leaf_dimensions(schema: Schema, under: str | None = None) -> list[DimensionNode]:
    """All DIMENSION nodes in deterministic (layer, category, aspect, name) order.

    ``under`` restricts to a subtree and accepts a node id or unique name.
    """
    root_id = schema.resolve(under).node_id if under is not None else None
    dims = [n for n in schema.nodes if n.level == Level.DIMENSION]
    if root_id is not None:
        dims = [n for n in dims if _in_subtree(schema, n, root_id)]
    return sorted(dims, key=lambda n: _sort_key(schema, n))


def retrieval_leaves(schema: Schema, include_sub_dimensions: bool = False) -> list[DimensionNode]:
    """Leaves used for retrieval planning; optionally includes expanded sub-dimensions."""
    leaves = leaf_dimensions(schema)
    if include_sub_dimensions:
        subs = [n for n in schema.nodes if n.level == Level.SUB_DIMENSION]
        leaves = leaves + sorted(subs, key=lambda n: _sort_key(schema, n))
    return leaves


def build_query(
    dimension: DimensionNode,
    culture: str,
    language: str = "en",
    template: str | None = None,
    schema: Schema | None = None,
) -> QuerySpec:
    """Turn a leaf dimension into a search query for the target culture."""
    if dimension.level not in _LEAF_LEVELS:
        raise PreconditionError(f"{dimension.node_id}: build_query needs a DIMENSION or SUB_DIMENSION node")
    if not culture.strip():
        raise PreconditionError("culture must be nonempty")
    if template is None:
        template = QUERY_TEMPLATES.get(language, QUERY_TEMPLATES["en"])
    name = dimension.name
    if schema is not None:
        name = schema.localized_name(dimension.node_id, language)
    text = template.format(dimension=name, culture=culture)
    if not text.strip():
        raise PreconditionError("query template produced an empty query")
    return QuerySpec(dimension_id=dimension.node_id, culture=culture, language=language, query_text=text)


def sub_dimension_id(dimension_id: str, label: str) -> str:
    """Sub-dimension ids are namespaced by the parent dimension."""
    return f"sub.{dimension_id.removeprefix('dim.')}.{slugify(label)}"


def expand_schema(schema: Schema, keywords: list[tuple[str, str]]) -> Schema:
    """Attach one EXPANDED sub-dimension per unique (dimension_id, label).

    The input schema is unchanged; duplicates (including nodes already
    present) are dropped, making expansion idempotent.
    """
    new_nodes: list[DimensionNode] = []
    seen: set[str] = {n.node_id for n in schema.nodes}
    for dimension_id, label in keywords:
        if not label or not label.strip():
            raise PreconditionError(f"{dimension_id}: sub-dimension label must be nonempty")
        parent = schema.node(dimension_id)
        if parent.level != Level.DIMENSION:
            raise PreconditionError(f"{dimension_id}: expansion target must be DIMENSION level")
        node_id = sub_dimension_id(dimension_id, label)
        if node_id in seen:
            continue
        seen.add(node_id)
        new_nodes.append(
            DimensionNode(
                node_id=node_id,
                level=Level.SUB_DIMENSION,
                name=label.strip(),
                parent_id=dimension_id,
                origin=Origin.EXPANDED,
            )
        )
    if not new_nodes:
        return schema
    return replace(schema, nodes=schema.nodes + tuple(new_nodes))
