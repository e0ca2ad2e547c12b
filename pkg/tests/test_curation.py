from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culturebench.curation import (
    ClusterAssignment,
    apply_cluster_labels,
    cluster_dimension,
    cluster_kb,
    dedup,
    derive_keywords,
    kb_stats,
)
from culturebench.errors import PreconditionError, StageError
from culturebench.providers import MockEmbedder
from culturebench.storage import substream

from helpers import make_instance

NEAR_DUP_PAIRS = [
    ("Spanish families gather for long lunches every Sunday afternoon in their village homes.",
     "Spanish families gather for long lunches every Sunday evening in their village homes."),
    ("The siesta tradition shapes shop opening hours across many smaller Spanish towns today.",
     "The siesta tradition shapes shop opening hours across many smaller Spanish cities today."),
    ("Breakfast in Spain is typically light with coffee and a small sweet pastry.",
     "Breakfast in Spain is typically light with coffee and a small fresh pastry."),
]
DISTINCT = [
    "Flamenco music carries deep emotional weight in Andalusian performance culture.",
    "Paella originates from the Valencia region and uses short grain rice.",
    "Spanish television schedules prime time shows surprisingly late at night.",
    "Regional languages appear on bilingual street signage in several autonomous communities.",
]

FESTIVAL_VOCAB = [
    "Fireworks light the festival sky while bonfires burn during the celebration parade.",
    "Costumed dancers join the festival parade as fireworks echo over the celebration crowd.",
    "Drummers lead the festival procession and bonfires close the celebration at midnight.",
    "Giant puppets march in the festival parade before the celebration fireworks begin.",
    "Families watch the festival bonfires and stay for the closing celebration fireworks.",
]
CUISINE_VOCAB = [
    "Saffron rice simmers in the kitchen while garlic flavors the traditional recipe.",
    "Olive oil and garlic start almost every traditional recipe in the kitchen.",
    "Cured ham and fresh seafood arrive in the kitchen for the traditional recipe.",
    "The kitchen fills with garlic aroma as the traditional rice recipe cooks.",
    "Cooks taste the traditional recipe of rice and seafood in the busy kitchen.",
]


# ---------------------------------------------------------------------------
# Dedup


def test_dedup_exact_duplicates_merge():
    a = make_instance("Tapas are shared among friends at the bar.")
    b = make_instance("Tapas are shared among friends at the bar.")
    out = dedup([a, b], 1.0)
    assert out == [a]


def test_dedup_threshold_one_keeps_non_identical():
    statements = [p for pair in NEAR_DUP_PAIRS for p in pair]
    instances = [make_instance(s) for s in statements]
    out = dedup(instances, 1.0, embed=MockEmbedder())
    assert out == instances


def test_dedup_near_duplicates_at_0_9():
    """Fixture of 10 instances with 3 near-duplicate pairs; oracle is brute-force
    pairwise cosine over the same embeddings with greedy keep-first merging."""
    statements = [p[0] for p in NEAR_DUP_PAIRS] + [p[1] for p in NEAR_DUP_PAIRS] + DISTINCT
    instances = [make_instance(s) for s in statements]
    embed = MockEmbedder()

    vectors = np.array(embed.embed(statements))
    kept_idx: list[int] = []
    for i in range(len(statements)):
        if all(float(np.dot(vectors[i], vectors[j])) < 0.9 for j in kept_idx):
            kept_idx.append(i)
    expected = [instances[i] for i in kept_idx]
    assert len(expected) == 7

    out = dedup(instances, 0.9, embed=embed)
    assert out == expected


def test_dedup_scoped_by_dimension_and_language():
    a = make_instance("Identical statement text.", dimension_id="dim.alcohol")
    b = make_instance("Identical statement text.", dimension_id="dim.pork")
    c = make_instance("Identical statement text.", dimension_id="dim.alcohol", language="es")
    assert dedup([a, b, c], 1.0) == [a, b, c]


def test_dedup_rejects_bad_threshold():
    with pytest.raises(PreconditionError):
        dedup([], 1.5)


def test_dedup_idempotent_on_randomized_fixture():
    rng = substream(13, "dedup-fixture")
    vocab = ["siesta", "tapas", "flamenco", "paella", "fiesta", "plaza", "iglesia", "mercado", "costumbre", "familia"]
    statements = [
        " ".join(rng.choice(vocab) for _ in range(rng.randint(4, 9))) + f" marker{i % 37}."
        for i in range(200)
    ]
    instances = [make_instance(s) for s in statements]
    embed = MockEmbedder()
    once = dedup(instances, 0.92, embed=embed)
    twice = dedup(once, 0.92, embed=embed)
    assert once == twice


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from([p for pair in NEAR_DUP_PAIRS for p in pair] + DISTINCT), max_size=12))
def test_dedup_idempotence_property(statements):
    instances = [make_instance(s) for s in statements]
    embed = MockEmbedder()
    once = dedup(instances, 0.9, embed=embed)
    assert dedup(once, 0.9, embed=embed) == once


# ---------------------------------------------------------------------------
# Clustering


def test_cluster_singleton():
    inst = make_instance("A single statement about festivals.")
    [assignment] = cluster_dimension([inst], MockEmbedder(), chat=None)
    assert assignment.cluster_index == 0
    assert assignment.cluster_label


def test_cluster_two_vocabularies_pure():
    instances = [make_instance(s, dimension_id="dim.celebration-of-festivals") for s in FESTIVAL_VOCAB + CUISINE_VOCAB]
    assignments = cluster_dimension(instances, MockEmbedder(), chat=None, seed=7)
    by_kb = {a.kb_id: a for a in assignments}
    assert len(assignments) == len(instances)
    assert len({a.cluster_index for a in assignments}) == 2
    # exhaustive purity check: every cluster draws from exactly one vocabulary
    clusters: dict[int, set[str]] = {}
    for inst in instances:
        source = "fest" if inst.statement in FESTIVAL_VOCAB else "cuisine"
        clusters.setdefault(by_kb[inst.kb_id].cluster_index, set()).add(source)
    assert all(len(sources) == 1 for sources in clusters.values())


def test_cluster_partition_invariant():
    instances = [make_instance(s, dimension_id="dim.eating-habits") for s in FESTIVAL_VOCAB + CUISINE_VOCAB + DISTINCT]
    assignments = cluster_dimension(instances, MockEmbedder(), chat=None, seed=3)
    assert sorted(a.kb_id for a in assignments) == sorted(i.kb_id for i in instances)
    assert len({a.kb_id for a in assignments}) == len(instances)


def test_cluster_alcohol_examples_group_sensibly():
    statements = [
        "Alcohol is deeply integrated into daily life and social activities in Spain, such as drinking beer "
        "with friends at bars or enjoying wine with meals.",
        "The legal drinking age in Spain is 18, with strict drink-driving laws (blood alcohol limit: 0.5 g/L).",
        "Spaniards practice moderate drinking, with binge drinking being uncommon.",
        "Beer and wine are the most popular alcoholic beverages, with craft beer gaining popularity.",
    ]
    instances = [make_instance(s, dimension_id="dim.alcohol") for s in statements]
    assignments = cluster_dimension(instances, MockEmbedder(), chat=None, seed=7)
    assert len(assignments) == 4
    k = len({a.cluster_index for a in assignments})
    assert 2 <= k <= 3
    labels = {a.cluster_label for a in assignments}
    assert all(label and len(label.split()) <= 6 for label in labels)
    # labels unique per dimension
    by_index = {a.cluster_index: a.cluster_label for a in assignments}
    assert len(set(by_index.values())) == len(by_index)


def test_cluster_rejects_mixed_dimensions():
    a = make_instance("One statement here.", dimension_id="dim.alcohol")
    b = make_instance("Another statement here.", dimension_id="dim.pork")
    with pytest.raises(PreconditionError):
        cluster_dimension([a, b], MockEmbedder(), chat=None)


class _BrokenEmbed:
    provider_id = "mock:broken"

    def embed(self, texts):
        raise RuntimeError("vector service down")


def test_cluster_embedding_failure_names_dimension():
    instances = [make_instance(s, dimension_id="dim.religion") for s in FESTIVAL_VOCAB[:3]]
    with pytest.raises(StageError, match="dim.religion"):
        cluster_dimension(instances, _BrokenEmbed(), chat=None)


def test_cluster_kb_covers_all_dimensions(fixture_kb):
    embed = MockEmbedder()
    assignments = cluster_kb(fixture_kb, embed, chat=None, seed=7)
    verified_ids = {i.kb_id for i in fixture_kb}
    assert {a.kb_id for a in assignments} == verified_ids
    labeled = apply_cluster_labels(fixture_kb, assignments)
    assert all(i.cluster_label for i in labeled)


# ---------------------------------------------------------------------------
# Keywords


def test_derive_keywords_three_labels_one_dimension():
    assignments = [
        ClusterAssignment("k1", "dim.alcohol", 0, "Legal Norms"),
        ClusterAssignment("k2", "dim.alcohol", 1, "Social Drinking"),
        ClusterAssignment("k3", "dim.alcohol", 2, "Popular Beverages"),
    ]
    assert derive_keywords(assignments) == [
        ("dim.alcohol", "Legal Norms"),
        ("dim.alcohol", "Popular Beverages"),
        ("dim.alcohol", "Social Drinking"),
    ]


def test_derive_keywords_same_label_across_dimensions_kept():
    assignments = [
        ClusterAssignment("k1", "dim.alcohol", 0, "Norms"),
        ClusterAssignment("k2", "dim.pork", 0, "Norms"),
    ]
    assert derive_keywords(assignments) == [("dim.alcohol", "Norms"), ("dim.pork", "Norms")]


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(6))))
def test_derive_keywords_permutation_invariant(order):
    base = [
        ClusterAssignment(f"k{i}", f"dim.d{i % 3}", i, f"Label {i % 4}")
        for i in range(6)
    ]
    shuffled = [base[i] for i in order]
    assert derive_keywords(shuffled) == derive_keywords(base)


# ---------------------------------------------------------------------------
# Stats


def test_kb_stats_empty():
    stats = kb_stats([])
    assert stats.total_instances == 0
    assert stats.dimensions_covered == 0
    assert stats.per_dimension_counts == {}
    assert stats.per_source_counts == {}


def test_kb_stats_counts_by_construction():
    instances = (
        [make_instance(f"Statement a{i} text.", dimension_id="dim.alcohol", source_category="MEDIA") for i in range(5)]
        + [make_instance(f"Statement b{i} text.", dimension_id="dim.pork", source_category="FORUM") for i in range(4)]
        + [make_instance(f"Statement c{i} text.", dimension_id="dim.religion", source_category="MEDIA") for i in range(3)]
    )
    stats = kb_stats(instances)
    assert stats.per_dimension_counts == {"dim.alcohol": 5, "dim.pork": 4, "dim.religion": 3}
    assert stats.per_source_counts == {"MEDIA": 8, "FORUM": 4}
    assert stats.total_instances == 12
    assert sum(stats.per_dimension_counts.values()) == stats.total_instances
    assert sum(stats.per_source_counts.values()) == stats.total_instances
    assert stats.dimensions_covered == 3


def test_cluster_kb_parallel_matches_sequential(fixture_kb):
    embed = MockEmbedder()
    sequential = cluster_kb(fixture_kb, embed, chat=None, seed=7, max_workers=1)
    parallel = cluster_kb(fixture_kb, embed, chat=None, seed=7, max_workers=4)
    assert sequential == parallel
