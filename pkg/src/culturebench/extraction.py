"""Knowledge extraction: filtered pages -> verified cultural statements.

Each chat call summarizes one document for one dimension into sectioned
features (title, description, source quote); sections missing their source
quote are dropped, and every surviving instance is verified against its
source page before entering the knowledge base.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Callable

from . import prompts
from .acquisition import RawDocument
from .errors import PreconditionError
from .providers.base import ChatProvider, ChatRequest
from .providers.mock import normalize_text
from .schema import DimensionNode
from .storage import digest

QC_PENDING = "PENDING"
QC_VERIFIED = "VERIFIED"
QC_REJECTED = "REJECTED"

REJECT_REASONS = ("NOT_ENTAILED", "QUOTE_MISSING", "WRONG_DIMENSION")


@dataclass(frozen=True)
class KnowledgeInstance:
    kb_id: str
    culture: str
    language: str
    dimension_id: str
    statement: str
    source_url: str
    source_quote: str
    source_category: str
    cluster_label: str | None = None
    qc_status: str = QC_PENDING
    qc_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "kb_id": self.kb_id,
            "culture": self.culture,
            "language": self.language,
            "dimension_id": self.dimension_id,
            "statement": self.statement,
            "source_url": self.source_url,
            "source_quote": self.source_quote,
            "source_category": self.source_category,
            "cluster_label": self.cluster_label,
            "qc_status": self.qc_status,
            "qc_reason": self.qc_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeInstance":
        return cls(
            kb_id=d["kb_id"],
            culture=d["culture"],
            language=d["language"],
            dimension_id=d["dimension_id"],
            statement=d["statement"],
            source_url=d["source_url"],
            source_quote=d["source_quote"],
            source_category=d["source_category"],
            cluster_label=d.get("cluster_label"),
            qc_status=d.get("qc_status", QC_PENDING),
            qc_reason=d.get("qc_reason"),
        )


@dataclass(frozen=True)
class QcVerdict:
    status: str  # VERIFIED or REJECTED
    reason: str | None = None
    rationale: str = ""


def kb_instance_id(culture: str, language: str, dimension_id: str, statement: str) -> str:
    """Stable id; re-running extraction over the same content is idempotent."""
    return digest(culture, language, dimension_id, normalize_text(statement))


# ---------------------------------------------------------------------------
# Section parsing

_TITLE_LABELS = ("title", "título", "titulo")
_DESC_LABELS = ("description of the feature", "description", "descripción", "descripcion")
_SOURCE_LABELS = ("source of information", "fuente de información", "fuente de informacion")

_LABEL_RE = re.compile(
    r"^\s*(?:[#*\-\[•]\s*)*(título|titulo|title|description of the feature|description|"
    r"descripción|descripcion|source of information|fuente de información|fuente de informacion)"
    r"\s*\]?\s*[:：]\s*(.*)$",
    re.IGNORECASE,
)


def _label_kind(label: str) -> str:
    label = label.lower()
    if label in _TITLE_LABELS:
        return "title"
    if label in _DESC_LABELS:
        return "description"
    return "source"


def parse_sections(model_text: str) -> list[tuple[str, str, str]]:
    """Parse sectioned summary output into (title, description, source_quote) tuples.

    Tolerant: fields are keyed by label name and may arrive in any order; a
    new section starts whenever a field that the current section already has
    appears again. Unparseable text yields an empty list.
    """
    sections: list[dict[str, str]] = []
    current: dict[str, str] = {}
    current_field: str | None = None
    for line in model_text.splitlines():
        match = _LABEL_RE.match(line)
        if match:
            kind = _label_kind(match.group(1))
            if kind in current and current[kind].strip():
                sections.append(current)
                current = {}
            current[kind] = match.group(2).strip()
            current_field = kind
        elif line.strip() and current_field:
            # Continuation of the previous field (multi-line descriptions).
            current[current_field] = (current[current_field] + " " + line.strip()).strip()
        elif not line.strip():
            current_field = None
    if current:
        sections.append(current)

    out: list[tuple[str, str, str]] = []
    for section in sections:
        title = section.get("title", "").strip()
        description = section.get("description", "").strip()
        source = section.get("source", "").strip().strip('"“”').strip()
        if not (title or description):
            continue
        out.append((title, description, source))
    return out


def render_sections(sections: list[tuple[str, str, str]]) -> str:
    """Inverse of :func:`parse_sections` for the English layout."""
    blocks = []
    for title, description, source in sections:
        blocks.append(
            f"Title: {title}\nDescription of the feature: {description}\nSource of information: \"{source}\""
        )
    return "\n\n".join(blocks)


# ---------------------------------------------------------------------------
# Extraction


def extract_knowledge(
    doc: RawDocument,
    dimension: DimensionNode,
    chat: ChatProvider,
    warn: Callable[[str], None] | None = None,
) -> list[KnowledgeInstance]:
    """One summarization call per (document, dimension); provenance stays 1-to-1."""
    if not doc.body_text.strip():
        raise PreconditionError(f"{doc.doc_id}: document body is empty")
    prompt = prompts.knowledge_summary_prompt(doc.language, dimension.name, doc.culture, doc.body_text)
    request = ChatRequest(user_text=prompt, language=doc.language, temperature=0.0)
    response = chat.chat(request)
    sections = parse_sections(response.text)
    if not sections:
        if warn:
            warn(f"{doc.doc_id}: no parseable sections in summary output")
        return []
    instances: list[KnowledgeInstance] = []
    for title, description, source_quote in sections:
        if not source_quote:
            continue  # the prompt's required field is absent; drop the section
        statement = description or title
        if not statement:
            continue
        instances.append(
            KnowledgeInstance(
                kb_id=kb_instance_id(doc.culture, doc.language, dimension.node_id, statement),
                culture=doc.culture,
                language=doc.language,
                dimension_id=dimension.node_id,
                statement=statement,
                source_url=doc.url,
                source_quote=source_quote,
                source_category=doc.source_category,
                qc_status=QC_PENDING,
            )
        )
    return instances


# ---------------------------------------------------------------------------
# Verification

_VERIFY_VERDICT_RE = re.compile(r"VERDICT:\s*(ENTAILED|NOT_ENTAILED|WRONG_DIMENSION)", re.IGNORECASE)


def verify_instance(
    instance: KnowledgeInstance,
    doc: RawDocument,
    chat: ChatProvider,
    dimension_name: str | None = None,
) -> QcVerdict:
    """Check statement-source consistency.

    A cheap containment pre-check on the quote runs first; only containment
    failures short-circuit (REJECTED(QUOTE_MISSING) without a chat call).
    """
    if instance.source_url != doc.url:
        raise PreconditionError(
            f"{instance.kb_id}: instance source_url {instance.source_url!r} does not match document {doc.url!r}"
        )
    if normalize_text(instance.source_quote) not in normalize_text(doc.body_text):
        return QcVerdict(status=QC_REJECTED, reason="QUOTE_MISSING", rationale="quote not found in source body")
    prompt = prompts.VERIFY_TEMPLATE.format(
        dimension=dimension_name or instance.dimension_id,
        statement=instance.statement,
        quote=instance.source_quote,
        body=doc.body_text,
    )
    request = ChatRequest(user_text=prompt, system_text=prompts.VERIFY_SYSTEM, language=doc.language, temperature=0.0)
    response = chat.chat(request)
    match = _VERIFY_VERDICT_RE.search(response.text)
    if not match:
        response = chat.chat(request)
        match = _VERIFY_VERDICT_RE.search(response.text)
        if not match:
            return QcVerdict(status=QC_REJECTED, reason="NOT_ENTAILED", rationale="no parseable verdict after retry")
    verdict = match.group(1).upper()
    rationale = response.text.split("\n", 1)[1].strip() if "\n" in response.text else ""
    if verdict == "ENTAILED":
        return QcVerdict(status=QC_VERIFIED, rationale=rationale)
    return QcVerdict(status=QC_REJECTED, reason=verdict, rationale=rationale)


def apply_verdict(instance: KnowledgeInstance, verdict: QcVerdict) -> KnowledgeInstance:
    return replace(instance, qc_status=verdict.status, qc_reason=verdict.reason)


def sort_instances(instances: list[KnowledgeInstance]) -> list[KnowledgeInstance]:
    """Stage-end stable sort by kb_id for deterministic persistence."""
    return sorted(instances, key=lambda i: i.kb_id)
