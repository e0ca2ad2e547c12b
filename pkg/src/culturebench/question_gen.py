"""Evaluation-dataset generation: retrieval-augmented question synthesis plus QC.

Items come in four content types (factual, conceptual, misleading, multi-hop)
and four formats (multiple-choice, true/false, short answer, essay). Every
generated item is quality-checked for consistency among question, answer, and
its source knowledge before it counts toward the plan.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum

from . import prompts
from .errors import IntegrityError, ParseFailure, PreconditionError, SamplingError, StageError
from .extraction import QC_PENDING, QC_REJECTED, QC_VERIFIED, KnowledgeInstance
from .providers.base import ChatProvider, ChatRequest
from .schema import Level, Schema
from .storage import digest, substream


class ContentType(str, Enum):
    FACTUAL = "FACTUAL"
    CONCEPTUAL = "CONCEPTUAL"
    MISLEADING = "MISLEADING"
    MULTI_HOP = "MULTI_HOP"


class FormatType(str, Enum):
    MULTIPLE_CHOICE = "MULTIPLE_CHOICE"
    TRUE_FALSE = "TRUE_FALSE"
    SHORT_ANSWER = "SHORT_ANSWER"
    ESSAY = "ESSAY"


OBJECTIVE_FORMATS = {FormatType.MULTIPLE_CHOICE, FormatType.TRUE_FALSE}


def is_objective(format_type: FormatType) -> bool:
    return format_type in OBJECTIVE_FORMATS


# Context sizes: multi-hop synthesizes multiple cultural elements, so it reads more.
DEFAULT_CONTEXT_K = {
    ContentType.FACTUAL: 3,
    ContentType.CONCEPTUAL: 3,
    ContentType.MISLEADING: 3,
    ContentType.MULTI_HOP: 5,
}

# Misleading items stay objective; its exemplars are choice-based.
DEFAULT_FORMATS = {
    ContentType.FACTUAL: (FormatType.MULTIPLE_CHOICE, FormatType.TRUE_FALSE, FormatType.SHORT_ANSWER),
    ContentType.CONCEPTUAL: (FormatType.MULTIPLE_CHOICE, FormatType.TRUE_FALSE),
    ContentType.MISLEADING: (FormatType.MULTIPLE_CHOICE, FormatType.TRUE_FALSE),
    ContentType.MULTI_HOP: (FormatType.MULTIPLE_CHOICE, FormatType.SHORT_ANSWER, FormatType.ESSAY),
}


@dataclass(frozen=True)
class QuestionItem:
    item_id: str
    culture: str
    language: str
    content_type: ContentType
    format: FormatType
    question_text: str
    options: tuple[tuple[str, str], ...]  # (label, text); empty for non-choice formats
    reference_answer: str
    knowledge_ids: tuple[str, ...]
    dimension_id: str
    qc_status: str = QC_PENDING
    qc_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "culture": self.culture,
            "language": self.language,
            "content_type": self.content_type.value,
            "format": self.format.value,
            "question_text": self.question_text,
            "options": [[label, text] for label, text in self.options],
            "reference_answer": self.reference_answer,
            "knowledge_ids": list(self.knowledge_ids),
            "dimension_id": self.dimension_id,
            "qc_status": self.qc_status,
            "qc_reason": self.qc_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionItem":
        return cls(
            item_id=d["item_id"],
            culture=d["culture"],
            language=d["language"],
            content_type=ContentType(d["content_type"]),
            format=FormatType(d["format"]),
            question_text=d["question_text"],
            options=tuple((label, text) for label, text in d.get("options", [])),
            reference_answer=d["reference_answer"],
            knowledge_ids=tuple(d["knowledge_ids"]),
            dimension_id=d["dimension_id"],
            qc_status=d.get("qc_status", QC_PENDING),
            qc_reason=d.get("qc_reason"),
        )


def item_violations(item: QuestionItem) -> list[str]:
    """Well-formedness checks applied at persistence time."""
    out = []
    if not item.question_text.strip():
        out.append(f"{item.item_id}: empty question_text")
    if not item.knowledge_ids:
        out.append(f"{item.item_id}: no linked knowledge")
    if item.format == FormatType.MULTIPLE_CHOICE:
        labels = [label for label, _ in item.options]
        if len(item.options) < 2:
            out.append(f"{item.item_id}: multiple-choice item needs >= 2 options")
        if len(set(labels)) != len(labels):
            out.append(f"{item.item_id}: duplicate option labels")
        if item.reference_answer not in labels:
            out.append(f"{item.item_id}: reference_answer not among option labels")
    elif item.format == FormatType.TRUE_FALSE:
        if item.reference_answer not in ("true", "false"):
            out.append(f"{item.item_id}: true/false answer must be 'true' or 'false'")
        if item.options:
            out.append(f"{item.item_id}: true/false item must not carry options")
    else:
        if item.options:
            out.append(f"{item.item_id}: subjective item must not carry options")
        if not item.reference_answer.strip():
            out.append(f"{item.item_id}: subjective item needs a reference answer")
    return out


@dataclass(frozen=True)
class GenerationPlan:
    """How many items to generate and with what knobs, per (culture, language) run.

    Content-type counts are always equal (total is split four ways).
    """

    total_items: int
    seed: int = 0
    context_k: dict = field(default_factory=lambda: dict(DEFAULT_CONTEXT_K))
    formats: dict = field(default_factory=lambda: dict(DEFAULT_FORMATS))
    retry_factor: int = 6

    def __post_init__(self):
        if self.total_items < 0:
            raise PreconditionError("total_items must be >= 0")
        if self.total_items % len(ContentType) != 0:
            raise PreconditionError(
                f"total_items must be divisible by {len(ContentType)} to keep content-type counts equal"
            )

    @property
    def per_type(self) -> int:
        return self.total_items // len(ContentType)

    def to_dict(self) -> dict:
        return {
            "total_items": self.total_items,
            "seed": self.seed,
            "context_k": {ct.value: k for ct, k in self.context_k.items()},
            "formats": {ct.value: [f.value for f in fmts] for ct, fmts in self.formats.items()},
            "retry_factor": self.retry_factor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationPlan":
        kwargs: dict = {"total_items": d["total_items"], "seed": d.get("seed", 0)}
        if "context_k" in d:
            kwargs["context_k"] = {ContentType(ct): int(k) for ct, k in d["context_k"].items()}
        if "formats" in d:
            kwargs["formats"] = {
                ContentType(ct): tuple(FormatType(f) for f in fmts) for ct, fmts in d["formats"].items()
            }
        if "retry_factor" in d:
            kwargs["retry_factor"] = int(d["retry_factor"])
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Context sampling


def sample_context(
    kb: list[KnowledgeInstance],
    dimension_id: str | None,
    k: int,
    rng,
    schema: Schema | None = None,
    fallback_sink: list | None = None,
) -> list[KnowledgeInstance]:
    """Draw k distinct verified instances, seeded-uniform, from the given scope.

    When the dimension holds fewer than k instances the scope widens to its
    topic aspect (recorded through ``fallback_sink``); a scope with zero
    instances raises :class:`SamplingError`.
    """
    if k < 1:
        raise PreconditionError("k must be >= 1")
    verified = [inst for inst in kb if inst.qc_status == QC_VERIFIED]
    if dimension_id is None:
        scope = verified
        scope_name = "kb"
    else:
        scope = [inst for inst in verified if inst.dimension_id == dimension_id]
        scope_name = dimension_id
        if len(scope) < k and schema is not None:
            aspect = schema.ancestor_at(dimension_id, Level.TOPIC_ASPECT)
            if aspect is not None:
                sibling_ids = {n.node_id for n in schema.nodes if n.parent_id == aspect.node_id}
                sibling_ids.add(dimension_id)
                widened = [inst for inst in verified if inst.dimension_id in sibling_ids]
                if len(widened) > len(scope):
                    if fallback_sink is not None:
                        fallback_sink.append(
                            {"dimension_id": dimension_id, "fallback_scope": aspect.node_id, "k": k}
                        )
                    scope = widened
                    scope_name = aspect.node_id
    if not scope:
        raise SamplingError(f"no verified instances in scope {scope_name!r}")
    if len(scope) <= k:
        return list(scope)
    return rng.sample(scope, k)


# ---------------------------------------------------------------------------
# Model-output parsing

_OPTION_RE = re.compile(r"^\s*\(?([A-Z])[).:\]]\s*(.+?)\s*$")
_TRUE_TOKENS = {"true", "t", "yes", "verdadero", "cierto", "sí", "si", "是", "对", "正确", "真"}
_FALSE_TOKENS = {"false", "f", "no", "falso", "否", "不对", "错误", "假", "不是"}


def _normalize_tf(answer: str) -> str | None:
    token = answer.strip().strip(".。!¡?¿").lower()
    if token in _TRUE_TOKENS:
        return "true"
    if token in _FALSE_TOKENS:
        return "false"
    first = token.split()[0].strip(".,:;") if token.split() else ""
    if first in _TRUE_TOKENS:
        return "true"
    if first in _FALSE_TOKENS:
        return "false"
    return None


def parse_generated(model_text: str, format_type: FormatType) -> tuple[str, tuple[tuple[str, str], ...], str]:
    """Split generator output into (question_text, options, reference_answer).

    Raises :class:`ParseFailure` when a section is missing or, for objective
    formats, when the answer cannot be normalized against the options.
    """
    match = re.search(r"Question:\s*(.*?)\s*Reference Answer:\s*(.*)", model_text, flags=re.DOTALL | re.IGNORECASE)
    if not match:
        raise ParseFailure("missing 'Question:' or 'Reference Answer:' section")
    question_block, answer_raw = match.group(1).strip(), match.group(2).strip()
    if not question_block or not answer_raw:
        raise ParseFailure("empty question or answer section")

    if format_type == FormatType.MULTIPLE_CHOICE:
        stem_lines: list[str] = []
        options: list[tuple[str, str]] = []
        for line in question_block.splitlines():
            m = _OPTION_RE.match(line)
            if m and (options or m.group(1) == "A"):
                options.append((m.group(1), m.group(2)))
            elif not options:
                stem_lines.append(line)
        if len(options) < 2:
            raise ParseFailure("multiple-choice output needs at least two lettered options")
        labels = [label for label, _ in options]
        answer = _normalize_choice_answer(answer_raw, options)
        if answer is None or answer not in labels:
            raise ParseFailure(f"answer {answer_raw!r} does not resolve to an option label")
        question_text = "\n".join(stem_lines).strip()
        if not question_text:
            raise ParseFailure("multiple-choice output lacks a question stem")
        return question_text, tuple(options), answer

    if format_type == FormatType.TRUE_FALSE:
        answer = _normalize_tf(answer_raw)
        if answer is None:
            raise ParseFailure(f"answer {answer_raw!r} does not normalize to true/false")
        return question_block, (), answer

    return question_block, (), answer_raw


def _normalize_choice_answer(answer_raw: str, options: list[tuple[str, str]]) -> str | None:
    labels = {label for label, _ in options}
    stripped = answer_raw.strip()
    m = re.match(r"^\(?([A-Z])[).:\]]?(?:\s|$)", stripped)
    if m and m.group(1) in labels:
        return m.group(1)
    if stripped.upper() in labels:
        return stripped.upper()
    norm_answer = " ".join(stripped.lower().split())
    text_matches = [label for label, text in options if " ".join(text.lower().split()) == norm_answer]
    if len(text_matches) == 1:
        return text_matches[0]
    contains = [label for label, text in options if " ".join(text.lower().split()) in norm_answer]
    if len(contains) == 1:
        return contains[0]
    return None


# ---------------------------------------------------------------------------
# Generation


def format_context(context: list[KnowledgeInstance]) -> str:
    return "\n".join(f"{i + 1}. {inst.statement}" for i, inst in enumerate(context))


def item_id_for(culture: str, language: str, content_type: ContentType, knowledge_ids, question_text: str) -> str:
    return digest(culture, language, content_type.value, ",".join(sorted(knowledge_ids)), question_text)


def generate_question(
    context: list[KnowledgeInstance],
    content_type: ContentType,
    format_type: FormatType,
    language: str,
    chat: ChatProvider,
    temperature: float = 0.7,
) -> QuestionItem:
    """One retrieval-augmented generation call; retries once on unparseable output."""
    if not context:
        raise PreconditionError("context must be nonempty")
    culture = context[0].culture
    last_error: ParseFailure | None = None
    for retry in (False, True):
        prompt = prompts.generation_prompt(
            content_type.value, format_type.value, language, format_context(context), retry=retry
        )
        response = chat.chat(ChatRequest(user_text=prompt, language=language, temperature=temperature))
        try:
            question_text, options, answer = parse_generated(response.text, format_type)
        except ParseFailure as exc:
            last_error = exc
            continue
        knowledge_ids = tuple(inst.kb_id for inst in context)
        return QuestionItem(
            item_id=item_id_for(culture, language, content_type, knowledge_ids, question_text),
            culture=culture,
            language=language,
            content_type=content_type,
            format=format_type,
            question_text=question_text,
            options=options,
            reference_answer=answer,
            knowledge_ids=knowledge_ids,
            dimension_id=context[0].dimension_id,
            qc_status=QC_PENDING,
        )
    raise ParseFailure(f"generation output unparseable after retry: {last_error}")


# ---------------------------------------------------------------------------
# Question quality control

_QC_VERDICT_RE = re.compile(r"VERDICT:\s*(VERIFIED|REJECTED\((UNANSWERABLE|WRONG_ANSWER|CONTRADICTION|LEAKS_CONCEPT)\))")


@dataclass(frozen=True)
class QuestionQcVerdict:
    status: str
    reason: str | None = None
    rationale: str = ""


def answer_payload(item: QuestionItem) -> str:
    """The answer content shown to the QC judge (option text for choices)."""
    if item.format == FormatType.MULTIPLE_CHOICE:
        for label, text in item.options:
            if label == item.reference_answer:
                return f"{label}) {text}"
        return item.reference_answer
    if item.format == FormatType.TRUE_FALSE:
        return item.reference_answer.capitalize()
    return item.reference_answer


def qc_question(item: QuestionItem, kb: dict[str, KnowledgeInstance], chat: ChatProvider) -> QuestionQcVerdict:
    """Judge the (question, answer, knowledge) triple for logical consistency."""
    try:
        statements = [kb[kb_id].statement for kb_id in item.knowledge_ids]
    except KeyError as exc:
        raise PreconditionError(f"{item.item_id}: knowledge id {exc.args[0]!r} does not resolve") from exc
    question_block = item.question_text
    if item.options:
        question_block += "\n" + "\n".join(f"{label}) {text}" for label, text in item.options)
    prompt = prompts.QC_TEMPLATE.format(
        question=question_block,
        answer=answer_payload(item),
        knowledge="\n".join(f"- {s}" for s in statements),
    )
    request = ChatRequest(user_text=prompt, system_text=prompts.QC_SYSTEM, language=item.language, temperature=0.0)
    for _ in range(2):
        response = chat.chat(request)
        match = _QC_VERDICT_RE.search(response.text)
        if match:
            rationale = response.text.split("\n", 1)[1].strip() if "\n" in response.text else ""
            if match.group(1) == "VERIFIED":
                return QuestionQcVerdict(status=QC_VERIFIED, rationale=rationale)
            return QuestionQcVerdict(status=QC_REJECTED, reason=match.group(2), rationale=rationale)
    return QuestionQcVerdict(status=QC_REJECTED, reason="UNDECIDED", rationale="no parseable verdict after retry")


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass(frozen=True)
class Dataset:
    items: tuple[QuestionItem, ...]
    manifest: dict

    def to_manifest_dict(self) -> dict:
        return dict(self.manifest)


class DatasetShortfallError(StageError):
    def __init__(self, shortfall: dict[str, int]):
        super().__init__(f"retry budget exhausted; unfilled buckets: {shortfall}")
        self.shortfall = shortfall


def build_dataset(
    kb: list[KnowledgeInstance],
    plan: GenerationPlan,
    chat: ChatProvider,
    schema: Schema,
    culture: str,
    language: str,
    qc_chat: ChatProvider | None = None,
    kb_version: str = "",
    created_at: str = "1970-01-01T00:00:00Z",
    reject_sink: list | None = None,
    temperature: float = 0.7,
) -> Dataset:
    """Generate until each content-type bucket holds its planned verified count.

    Rejected or unparseable generations are regenerated with fresh contexts up
    to ``plan.retry_factor`` attempts per planned item; an exhausted budget
    raises :class:`DatasetShortfallError` naming the shortfall.
    """
    qc_chat = qc_chat or chat
    verified = [inst for inst in kb if inst.qc_status == QC_VERIFIED]
    kb_by_id = {inst.kb_id: inst for inst in verified}
    dimension_ids = sorted({inst.dimension_id for inst in verified})
    if plan.total_items > 0 and not dimension_ids:
        raise PreconditionError("knowledge base has no verified instances")

    accepted: dict[ContentType, list[QuestionItem]] = {ct: [] for ct in ContentType}
    seen_ids: set[str] = set()
    shortfall: dict[str, int] = {}
    for content_type in ContentType:
        target = plan.per_type
        budget = max(plan.retry_factor * target, target)
        attempt = 0
        while len(accepted[content_type]) < target and attempt < budget:
            rng = substream(plan.seed, "gen", culture, language, content_type.value, str(attempt))
            attempt += 1
            dimension_id = rng.choice(dimension_ids)
            k = plan.context_k.get(content_type, 3)
            try:
                context = sample_context(verified, dimension_id, k, rng, schema=schema)
            except SamplingError:
                continue
            formats = plan.formats.get(content_type, DEFAULT_FORMATS[content_type])
            format_type = rng.choice(list(formats))
            try:
                item = generate_question(context, content_type, format_type, language, chat, temperature=temperature)
            except ParseFailure as exc:
                if reject_sink is not None:
                    reject_sink.append({"content_type": content_type.value, "attempt": attempt, "error": str(exc)})
                continue
            if item.item_id in seen_ids:
                continue
            verdict = qc_question(item, kb_by_id, qc_chat)
            if verdict.status != QC_VERIFIED:
                if reject_sink is not None:
                    reject_sink.append(
                        {"content_type": content_type.value, "attempt": attempt, "rejected": verdict.reason}
                    )
                continue
            violations = item_violations(item)
            if violations:
                raise IntegrityError("; ".join(violations))
            seen_ids.add(item.item_id)
            accepted[content_type].append(replace(item, qc_status=QC_VERIFIED))
        if len(accepted[content_type]) < target:
            shortfall[content_type.value] = target - len(accepted[content_type])
    if shortfall:
        raise DatasetShortfallError(shortfall)

    items = tuple(sorted((item for bucket in accepted.values() for item in bucket), key=lambda i: i.item_id))
    manifest = {
        "dataset_id": digest(culture, language, str(plan.seed), kb_version, str(plan.total_items)),
        "culture": culture,
        "language": language,
        "seed": plan.seed,
        "plan": plan.to_dict(),
        "kb_version": kb_version,
        "schema_version": schema.version,
        "counts": {ct.value: len(accepted[ct]) for ct in ContentType},
        "created_at": created_at,
    }
    return Dataset(items=items, manifest=manifest)


def review_sample(dataset: Dataset, kb: dict[str, KnowledgeInstance], n: int, seed: int) -> list[dict]:
    """Seeded random sample for offline human review (question, answer, knowledge)."""
    rng = substream(seed, "review")
    items = list(dataset.items)
    picked = items if len(items) <= n else rng.sample(items, n)
    rows = []
    for item in sorted(picked, key=lambda i: i.item_id):
        rows.append(
            {
                "item_id": item.item_id,
                "content_type": item.content_type.value,
                "format": item.format.value,
                "question": item.question_text,
                "options": [f"{label}) {text}" for label, text in item.options],
                "reference_answer": item.reference_answer,
                "knowledge": [kb[k].statement for k in item.knowledge_ids if k in kb],
            }
        )
    return rows
