"""Knowledge-base curation: de-duplication, per-dimension clustering, statistics.

Clustering runs on verified instances only, one independent task per
dimension; the cluster labels double as keywords for schema expansion.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score

from . import prompts
from .errors import PreconditionError, StageError
from .extraction import QC_VERIFIED, KnowledgeInstance
from .providers.base import ChatProvider, ChatRequest, run_parallel
from .providers.mock import normalize_text, tf_label
from .storage import substream

MAX_CLUSTERS_PER_DIMENSION = 8
DEFAULT_DEDUP_THRESHOLD = 0.92


@dataclass(frozen=True)
class ClusterAssignment:
    kb_id: str
    dimension_id: str
    cluster_index: int
    cluster_label: str

    def to_dict(self) -> dict:
        return {
            "kb_id": self.kb_id,
            "dimension_id": self.dimension_id,
            "cluster_index": self.cluster_index,
            "cluster_label": self.cluster_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterAssignment":
        return cls(
            kb_id=d["kb_id"],
            dimension_id=d["dimension_id"],
            cluster_index=d["cluster_index"],
            cluster_label=d["cluster_label"],
        )


@dataclass(frozen=True)
class KBStats:
    per_dimension_counts: dict[str, int]
    per_source_counts: dict[str, int]
    total_instances: int
    dimensions_covered: int

    def to_dict(self) -> dict:
        return {
            "per_dimension_counts": dict(sorted(self.per_dimension_counts.items())),
            "per_source_counts": dict(sorted(self.per_source_counts.items())),
            "total_instances": self.total_instances,
            "dimensions_covered": self.dimensions_covered,
        }


def dedup(
    instances: list[KnowledgeInstance],
    similarity_threshold: float = DEFAULT_DEDUP_THRESHOLD,
    embed=None,
) -> list[KnowledgeInstance]:
    """Merge near-duplicates within each (dimension, language) group.

    Byte-identical statements (after whitespace/case normalization) always
    merge; otherwise pairs at cosine similarity >= threshold merge, keeping
    the earlier instance. Output preserves input order.
    """
    if not 0.0 <= similarity_threshold <= 1.0:
        raise PreconditionError("similarity_threshold must be in [0, 1]")
    survivors: list[KnowledgeInstance] = []
    kept_by_group: dict[tuple[str, str], list[tuple[str, np.ndarray | None]]] = {}
    vectors: dict[int, np.ndarray] = {}
    if embed is not None and instances:
        raw = embed.embed([inst.statement for inst in instances])
        for i, vec in enumerate(raw):
            arr = np.asarray(vec, dtype=float)
            norm = np.linalg.norm(arr)
            vectors[i] = arr / norm if norm > 0 else arr
    for i, inst in enumerate(instances):
        group = (inst.dimension_id, inst.language)
        kept = kept_by_group.setdefault(group, [])
        norm_stmt = normalize_text(inst.statement)
        duplicate = False
        for kept_stmt, kept_vec in kept:
            if kept_stmt == norm_stmt:
                duplicate = True
                break
            if (
                similarity_threshold < 1.0
                and kept_vec is not None
                and i in vectors
                and float(np.dot(kept_vec, vectors[i])) >= similarity_threshold
            ):
                duplicate = True
                break
        if not duplicate:
            kept.append((norm_stmt, vectors.get(i)))
            survivors.append(inst)
    return survivors


def _choose_k(matrix: np.ndarray, k_policy, seed: int) -> int:
    n = matrix.shape[0]
    if k_policy is not None:
        return max(1, min(n, int(k_policy(n))))
    best_k, best_score = 1, -1.0
    for k in range(2, min(MAX_CLUSTERS_PER_DIMENSION, n - 1) + 1):
        km = KMeans(n_clusters=k, random_state=seed, n_init=10)
        labels = km.fit_predict(matrix)
        if len(set(labels)) < 2:
            continue
        score = silhouette_score(matrix, labels)
        if score > best_score:
            best_k, best_score = k, score
    return best_k


def _label_for(members: list[KnowledgeInstance], chat: ChatProvider | None) -> str:
    statements = [m.statement for m in members]
    if chat is None:
        return tf_label(statements)
    prompt = prompts.CLUSTER_LABEL_TEMPLATE.format(statements="\n".join(statements))
    response = chat.chat(ChatRequest(user_text=prompt, temperature=0.0))
    label = response.text.strip().splitlines()[0].strip() if response.text.strip() else ""
    words = label.split()
    if not words:
        return tf_label(statements)
    return " ".join(words[:6])


def cluster_dimension(
    instances: list[KnowledgeInstance],
    embed,
    chat: ChatProvider | None = None,
    k_policy=None,
    seed: int = 0,
) -> list[ClusterAssignment]:
    """Partition one dimension's verified instances into labeled sub-categories.

    k is chosen by maximizing silhouette over 2..min(8, n-1) unless a policy
    overrides it; a single instance yields one singleton cluster. Labels are
    unique within the dimension (disambiguated with a numeric suffix).
    """
    if not instances:
        return []
    dimension_ids = {inst.dimension_id for inst in instances}
    if len(dimension_ids) != 1:
        raise PreconditionError(f"cluster_dimension got instances from {len(dimension_ids)} dimensions")
    dimension_id = instances[0].dimension_id

    if len(instances) == 1:
        label = _label_for(instances, chat)
        return [ClusterAssignment(instances[0].kb_id, dimension_id, 0, label)]

    try:
        matrix = np.asarray(embed.embed([inst.statement for inst in instances]), dtype=float)
    except Exception as exc:
        raise StageError(f"embedding failed for dimension {dimension_id}: {exc}") from exc

    km_seed = substream(seed, "cluster", dimension_id).randrange(2**31)
    k = _choose_k(matrix, k_policy, km_seed)
    if k == 1:
        labels = np.zeros(len(instances), dtype=int)
    else:
        labels = KMeans(n_clusters=k, random_state=km_seed, n_init=10).fit_predict(matrix)

    # Renumber clusters by first appearance so indices are input-order stable.
    remap: dict[int, int] = {}
    for raw in labels:
        remap.setdefault(int(raw), len(remap))

    members: dict[int, list[KnowledgeInstance]] = {}
    for inst, raw in zip(instances, labels):
        members.setdefault(remap[int(raw)], []).append(inst)

    used: set[str] = set()
    label_by_cluster: dict[int, str] = {}
    for idx in sorted(members):
        label = _label_for(members[idx], chat)
        base, n = label, 2
        while label in used:
            label = f"{base} ({n})"
            n += 1
        used.add(label)
        label_by_cluster[idx] = label

    return [
        ClusterAssignment(inst.kb_id, dimension_id, remap[int(raw)], label_by_cluster[remap[int(raw)]])
        for inst, raw in zip(instances, labels)
    ]


def cluster_kb(
    instances: list[KnowledgeInstance],
    embed,
    chat: ChatProvider | None = None,
    k_policy=None,
    seed: int = 0,
    max_workers: int = 1,
) -> list[ClusterAssignment]:
    """Cluster every dimension of the KB (verified instances only).

    Per-dimension tasks are independent; results are assembled in dimension
    order so the output is deterministic at any worker count.
    """
    verified = [inst for inst in instances if inst.qc_status == QC_VERIFIED]
    by_dimension: dict[str, list[KnowledgeInstance]] = {}
    for inst in verified:
        by_dimension.setdefault(inst.dimension_id, []).append(inst)
    ordered = sorted(by_dimension)
    results = run_parallel(
        lambda dim: cluster_dimension(by_dimension[dim], embed, chat, k_policy, seed),
        ordered,
        max_workers=max_workers,
    )
    assignments: list[ClusterAssignment] = []
    for chunk in results:
        assignments.extend(chunk)
    return assignments


def apply_cluster_labels(
    instances: list[KnowledgeInstance], assignments: list[ClusterAssignment]
) -> list[KnowledgeInstance]:
    label_by_id = {a.kb_id: a.cluster_label for a in assignments}
    return [
        replace(inst, cluster_label=label_by_id[inst.kb_id]) if inst.kb_id in label_by_id else inst
        for inst in instances
    ]


def derive_keywords(assignments: list[ClusterAssignment]) -> list[tuple[str, str]]:
    """Unique (dimension_id, label) pairs ready for schema expansion.

    Labels are namespaced by dimension, so the output is permutation-invariant
    and identical labels under different dimensions both survive.
    """
    unique = {(a.dimension_id, a.cluster_label) for a in assignments}
    return sorted(unique)


def kb_stats(instances: list[KnowledgeInstance]) -> KBStats:
    per_dimension: dict[str, int] = {}
    per_source: dict[str, int] = {}
    for inst in instances:
        per_dimension[inst.dimension_id] = per_dimension.get(inst.dimension_id, 0) + 1
        per_source[inst.source_category] = per_source.get(inst.source_category, 0) + 1
    return KBStats(
        per_dimension_counts=per_dimension,
        per_source_counts=per_source,
        total_instances=len(instances),
        dimensions_covered=len(per_dimension),
    )
