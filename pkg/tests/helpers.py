"""Shared builders for synthetic knowledge instances, items, and records."""
from __future__ import annotations

from culturebench.evaluation import EvalRecord, JUDGE, OBJECTIVE_MATCH
from culturebench.extraction import QC_VERIFIED, KnowledgeInstance, kb_instance_id
from culturebench.question_gen import ContentType, FormatType, QuestionItem


def make_instance(
    statement: str,
    dimension_id: str = "dim.alcohol",
    culture: str = "Spanish",
    language: str = "en",
    qc_status: str = QC_VERIFIED,
    source_url: str = "https://example.org/page",
    source_category: str = "OTHER",
    source_quote: str | None = None,
) -> KnowledgeInstance:
    return KnowledgeInstance(
        kb_id=kb_instance_id(culture, language, dimension_id, statement),
        culture=culture,
        language=language,
        dimension_id=dimension_id,
        statement=statement,
        source_url=source_url,
        source_quote=source_quote if source_quote is not None else statement,
        source_category=source_category,
        qc_status=qc_status,
    )


def make_item(
    item_id: str,
    dimension_id: str = "dim.alcohol",
    content_type: ContentType = ContentType.FACTUAL,
    format_type: FormatType = FormatType.MULTIPLE_CHOICE,
    language: str = "en",
    question_text: str = "Which statement is accurate?",
    options: tuple = (("A", "first option"), ("B", "second option")),
    reference_answer: str = "A",
    knowledge_ids: tuple = ("kb-1",),
) -> QuestionItem:
    if format_type != FormatType.MULTIPLE_CHOICE:
        options = ()
    if format_type == FormatType.TRUE_FALSE and reference_answer not in ("true", "false"):
        reference_answer = "true"
    if format_type in (FormatType.SHORT_ANSWER, FormatType.ESSAY) and reference_answer in ("A", "B"):
        reference_answer = "a short reference answer"
    return QuestionItem(
        item_id=item_id,
        culture="Spanish",
        language=language,
        content_type=content_type,
        format=format_type,
        question_text=question_text,
        options=options,
        reference_answer=reference_answer,
        knowledge_ids=knowledge_ids,
        dimension_id=dimension_id,
        qc_status=QC_VERIFIED,
    )


def make_record(item_id: str, correct: bool, grading_mode: str = OBJECTIVE_MATCH) -> EvalRecord:
    return EvalRecord(item_id=item_id, correct=correct, grading_mode=grading_mode)


__all__ = ["make_instance", "make_item", "make_record", "JUDGE", "OBJECTIVE_MATCH"]
