"""culturebench: build culture-specific knowledge bases, generate typed evaluation
questions from them, and score language models with exact matching plus
judge-based grading, reporting per-dimension accuracy."""

__version__ = "0.1.0"

from .schema import (  # noqa: F401
    DimensionNode,
    Level,
    Origin,
    QuerySpec,
    Schema,
    build_query,
    expand_schema,
    leaf_dimensions,
    load_canonical_schema,
    load_schema,
    save_schema,
    validate,
)
