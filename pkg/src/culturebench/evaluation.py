"""Model evaluation: prompting (with optional knowledge injection), grading, accuracy.

Objective formats (multiple-choice, true/false) are graded by direct answer
matching through a deterministic parsing cascade; subjective formats go to a
judge model that scores a test answer incorrect whenever it conflicts with
the reference knowledge. Accuracy is the plain fraction of correct records,
and grouped breakdowns must recompose exactly to the overall number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from . import prompts
from .errors import (
    IntegrityError,
    MetricUndefinedError,
    PreconditionError,
    ProviderError,
)
from .extraction import KnowledgeInstance
from .providers.base import ChatProvider, ChatRequest, run_parallel
from .question_gen import Dataset, FormatType, QuestionItem, is_objective
from .schema import Level, Schema

GROUPING_KEYS = ("language", "layer", "category", "topic_aspect", "content_type", "format")

OBJECTIVE_MATCH = "OBJECTIVE_MATCH"
JUDGE = "JUDGE"


@dataclass(frozen=True)
class EvalRunConfig:
    model_id: str
    dataset_ref: str
    injection_count: int = 0
    judge_model_id: str = ""
    seed: int = 0
    max_items: int | None = None
    max_output_tokens: int = 1024
    allow_self_judge: bool = False

    def __post_init__(self):
        if self.injection_count < 0:
            raise PreconditionError("injection_count must be >= 0")
        if (
            self.judge_model_id
            and self.judge_model_id == self.model_id
            and not self.allow_self_judge
        ):
            raise PreconditionError(
                "judge model must differ from the candidate model (set allow_self_judge to override)"
            )

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "dataset_ref": self.dataset_ref,
            "injection_count": self.injection_count,
            "judge_model_id": self.judge_model_id,
            "seed": self.seed,
            "max_items": self.max_items,
            "max_output_tokens": self.max_output_tokens,
            "allow_self_judge": self.allow_self_judge,
        }


@dataclass(frozen=True)
class ModelResponse:
    item_id: str
    raw_text: str
    parsed_answer: str | None
    parse_ok: bool
    transport_ok: bool = True


@dataclass(frozen=True)
class EvalRecord:
    item_id: str
    correct: bool
    grading_mode: str  # OBJECTIVE_MATCH or JUDGE
    judge_rationale: str | None = None
    conflict_flag: bool | None = None
    flag: str | None = None  # UNDECIDED / PARSE_FAILED / TRANSPORT_FAILED
    parsed_answer: str | None = None
    k_injected: int = 0

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "correct": self.correct,
            "grading_mode": self.grading_mode,
            "judge_rationale": self.judge_rationale,
            "conflict_flag": self.conflict_flag,
            "flag": self.flag,
            "parsed_answer": self.parsed_answer,
            "k_injected": self.k_injected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        return cls(
            item_id=d["item_id"],
            correct=bool(d["correct"]),
            grading_mode=d["grading_mode"],
            judge_rationale=d.get("judge_rationale"),
            conflict_flag=d.get("conflict_flag"),
            flag=d.get("flag"),
            parsed_answer=d.get("parsed_answer"),
            k_injected=int(d.get("k_injected", 0)),
        )


@dataclass(frozen=True)
class EvalRun:
    config: EvalRunConfig
    records: tuple[EvalRecord, ...]
    prompt_log: tuple[dict, ...] = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def accuracy(self) -> float:
        return accuracy(list(self.records))

    def summary_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n": self.n,
            "accuracy": self.accuracy,
            "correct": sum(1 for r in self.records if r.correct),
        }


# ---------------------------------------------------------------------------
# Prompt construction


def question_block(item: QuestionItem) -> str:
    text = item.question_text
    if item.options:
        text += "\n" + "\n".join(f"{label}) {opt}" for label, opt in item.options)
    return text


def build_prompt(item: QuestionItem, injection: list[KnowledgeInstance]) -> str:
    """Bare question for k=0; a Reference block with exactly the injected statements otherwise."""
    question = question_block(item)
    instruction = prompts.ANSWER_INSTRUCTIONS[item.format.value]
    if injection:
        body = prompts.INJECTION_TEMPLATE.format(
            references="\n".join(f"- {inst.statement}" for inst in injection),
            question=question,
        )
        return f"{body}\n{instruction}"
    return f"Question:\n{question}\n\n{instruction}"


def select_injection(
    item: QuestionItem, kb: dict[str, KnowledgeInstance], k: int
) -> tuple[list[KnowledgeInstance], int]:
    """The item's own linked knowledge in stored order, truncated to k.

    Returns (instances, shortfall); a shortfall means fewer than k linked
    instances were available and all of them were used.
    """
    available = [kb[kid] for kid in item.knowledge_ids if kid in kb]
    take = min(k, len(available))
    return available[:take], max(0, k - len(available))


# ---------------------------------------------------------------------------
# Objective answer parsing

_TRUE_TOKENS = {"true", "t", "yes", "verdadero", "cierto", "sí", "si", "是", "对", "正确", "真"}
_FALSE_TOKENS = {"false", "f", "no", "falso", "否", "不对", "错误", "假", "不是"}
# Whole-text scans drop the one-letter abbreviations and bare "si": too many
# incidental hits in prose ("can't" tokenizes to t, Spanish "si" means "if").
_TRUE_SCAN = _TRUE_TOKENS - {"t", "si"}
_FALSE_SCAN = _FALSE_TOKENS - {"f"}

_LEADING_LETTER_RE = re.compile(r"^\s*[*\"'“]*\(?([A-Za-z])[).:\]—–-]")
_AMBIGUOUS_PAIR_RE = re.compile(r"\(?\b([A-Z])\)?\s+(?:or|and|o|y|或)\s+\(?([A-Z])\b\)?")
_ANSWER_PHRASE_RE = re.compile(
    r"(?:(?:answer|option|choice|respuesta|opci[oó]n)\s*(?:is|es|would\s+be|should\s+be|correcta\s+es|:)?"
    r"|答案是|选择|therefore,?|thus,?|choose|select|pick|go(?:ing)?\s+with)\s*"
    r"(?:la\s+|el\s+|the\s+letter\s+|letter\s+|the\s+)?[*\"'“(\[]*([A-Za-z])[)\]]?(?![\w'])",
    re.IGNORECASE,
)
_LETTER_IS_CORRECT_RE = re.compile(
    r"^\s*\(?([A-Za-z])\)?\s+(?:is|would\s+be|seems|es)\s+(?:the\s+)?(?:correct|right|best|la\s+correcta)",
    re.IGNORECASE,
)


def _normalize(text: str) -> str:
    return " ".join(re.sub(r"[^\w\s]", " ", text.lower()).split())


def parse_objective(raw_text: str, format_type: FormatType, options: tuple[tuple[str, str], ...] = ()) -> str | None:
    """Deterministic cascade from raw model text to a normalized label.

    Multiple-choice: exact label, leading letter with punctuation, an
    "answer is X" phrase, then unique option-text containment. True/false:
    multilingual yes/true and no/false token sets. Ambiguous text (two
    different options matched) resolves to None, never a guess.
    """
    if not is_objective(format_type):
        raise PreconditionError("parse_objective only handles objective formats")
    text = raw_text.strip()
    if not text:
        return None

    if format_type == FormatType.TRUE_FALSE:
        return _parse_true_false(text)

    labels = [label for label, _ in options]
    if not labels:
        return None
    label_set = set(labels)

    bare = text.strip("*\"'“” .()[]")
    if bare.upper() in label_set:
        return bare.upper()

    # Two different labels joined by and/or is a hedge, not an answer.
    for m in _AMBIGUOUS_PAIR_RE.finditer(text):
        first, second = m.group(1).upper(), m.group(2).upper()
        if first != second and first in label_set and second in label_set:
            return None

    m = _LEADING_LETTER_RE.match(text)
    if m and m.group(1).upper() in label_set:
        return m.group(1).upper()

    m = _LETTER_IS_CORRECT_RE.match(text)
    if m and m.group(1).upper() in label_set:
        return m.group(1).upper()

    phrase_hits = {m.group(1).upper() for m in _ANSWER_PHRASE_RE.finditer(text)}
    phrase_hits &= label_set
    if len(phrase_hits) == 1:
        return phrase_hits.pop()
    if len(phrase_hits) > 1:
        return None

    norm_text = _normalize(text)
    contained = [label for label, option_text in options if _normalize(option_text) and _normalize(option_text) in norm_text]
    if len(contained) == 1:
        return contained[0]
    return None


def _parse_true_false(text: str) -> str | None:
    bare = text.strip("*\"'“” .!()").lower()
    if bare in _TRUE_TOKENS:
        return "true"
    if bare in _FALSE_TOKENS:
        return "false"
    # "true or false" echoes of the question stem carry no verdict.
    text = re.sub(r"(?i)(?:true\s+or\s+false|false\s+or\s+true|verdadero\s+o\s+falso)", " ", text)
    if not text.strip():
        return None
    first_token = re.split(r"[\s,.:;!?]+", text.strip().lower(), maxsplit=1)[0].strip("*\"'()")
    if first_token in _TRUE_TOKENS:
        return "true"
    if first_token in _FALSE_TOKENS:
        return "false"
    m = re.search(r"(?:answer\s*(?:is|:)|respuesta\s*(?:es|:)|答案是)\s*[*\"'“]*(\w+)", text, re.IGNORECASE)
    if m:
        token = m.group(1).lower()
        if token in _TRUE_TOKENS:
            return "true"
        if token in _FALSE_TOKENS:
            return "false"
    tokens = set(re.findall(r"[\w]+", text.lower()))
    has_true = bool(tokens & _TRUE_SCAN) or any(t in text for t in ("是", "对", "正确", "真"))
    has_false = bool(tokens & _FALSE_SCAN) or any(t in text for t in ("否", "不对", "错误", "假"))
    if has_true and not has_false:
        return "true"
    if has_false and not has_true:
        return "false"
    return None


# ---------------------------------------------------------------------------
# Model querying and grading

_JUDGE_VERDICT_RE = re.compile(r"VERDICT:\s*(CORRECT|INCORRECT)")


def ask_model(
    item: QuestionItem,
    injection: list[KnowledgeInstance],
    chat: ChatProvider,
    config: EvalRunConfig,
) -> ModelResponse:
    """Send the (optionally knowledge-injected) prompt; failures never abort the run."""
    prompt = build_prompt(item, injection)
    try:
        response = chat.chat(
            ChatRequest(user_text=prompt, language=item.language, max_output_tokens=config.max_output_tokens)
        )
        raw = response.text
    except ProviderError:
        return ModelResponse(item_id=item.item_id, raw_text="", parsed_answer=None, parse_ok=False, transport_ok=False)
    if is_objective(item.format):
        parsed = parse_objective(raw, item.format, item.options)
        return ModelResponse(item_id=item.item_id, raw_text=raw, parsed_answer=parsed, parse_ok=parsed is not None)
    return ModelResponse(item_id=item.item_id, raw_text=raw, parsed_answer=raw.strip(), parse_ok=True)


def judge_subjective(
    question: str,
    reference_answer: str,
    test_answer: str,
    chat: ChatProvider,
) -> tuple[bool, str, bool | None, str | None]:
    """Returns (correct, rationale, conflict_flag, flag) per the conflict rule."""
    prompt = prompts.JUDGE_TEMPLATE.format(
        question=question, reference_answer=reference_answer, test_answer=test_answer
    )
    request = ChatRequest(user_text=prompt, system_text=prompts.JUDGE_SYSTEM, temperature=0.0)
    for _ in range(2):
        response = chat.chat(request)
        match = _JUDGE_VERDICT_RE.search(response.text)
        if match:
            correct = match.group(1) == "CORRECT"
            rationale = response.text.split("\n", 1)[1].strip() if "\n" in response.text else ""
            return correct, rationale, (not correct) or None, None
    return False, "unparseable judge verdict after retry", None, "UNDECIDED"


def grade_item(
    item: QuestionItem,
    response: ModelResponse,
    judge_chat: ChatProvider | None,
    k_injected: int = 0,
) -> EvalRecord:
    """Grade one response: direct match for objective items, judge for subjective."""
    if is_objective(item.format):
        if not response.transport_ok:
            flag = "TRANSPORT_FAILED"
        elif not response.parse_ok:
            flag = "PARSE_FAILED"
        else:
            flag = None
        correct = response.parse_ok and response.parsed_answer == item.reference_answer
        return EvalRecord(
            item_id=item.item_id,
            correct=correct,
            grading_mode=OBJECTIVE_MATCH,
            flag=flag,
            parsed_answer=response.parsed_answer,
            k_injected=k_injected,
        )
    if not response.transport_ok:
        return EvalRecord(
            item_id=item.item_id,
            correct=False,
            grading_mode=JUDGE,
            flag="TRANSPORT_FAILED",
            parsed_answer=None,
            k_injected=k_injected,
        )
    if judge_chat is None:
        raise PreconditionError(f"{item.item_id}: subjective item requires a judge provider")
    correct, rationale, conflict, flag = judge_subjective(
        item.question_text, item.reference_answer, response.raw_text, judge_chat
    )
    return EvalRecord(
        item_id=item.item_id,
        correct=correct,
        grading_mode=JUDGE,
        judge_rationale=rationale,
        conflict_flag=conflict,
        flag=flag,
        parsed_answer=response.parsed_answer,
        k_injected=k_injected,
    )


def evaluate_dataset(
    dataset: Dataset,
    kb: dict[str, KnowledgeInstance],
    model_chat: ChatProvider,
    config: EvalRunConfig,
    judge_chat: ChatProvider | None = None,
    completed_item_ids: set[str] | None = None,
    record_sink=None,
    max_workers: int = 1,
) -> EvalRun:
    """Run the candidate model over the dataset and grade every item.

    ``completed_item_ids`` supports resumption: those items are skipped and
    must already live in the caller's run log. Items are evaluated under
    bounded parallelism but records keep dataset order, so the run log is
    deterministic at any worker count. New records stream through
    ``record_sink`` in that order.
    """
    completed = completed_item_ids or set()
    items = [item for item in dataset.items if item.item_id not in completed]
    if config.max_items is not None:
        pending_budget = config.max_items - len(completed)
        items = items[: max(pending_budget, 0)]
    prompt_log: list[dict] = []
    planned: list[tuple[QuestionItem, list[KnowledgeInstance]]] = []
    for item in items:
        injection, shortfall = select_injection(item, kb, config.injection_count)
        prompt_log.append(
            {
                "item_id": item.item_id,
                "k_requested": config.injection_count,
                "k_injected": len(injection),
                "shortfall": shortfall,
                "prompt": build_prompt(item, injection),
            }
        )
        planned.append((item, injection))

    def run_one(task: tuple[QuestionItem, list[KnowledgeInstance]]) -> EvalRecord:
        item, injection = task
        response = ask_model(item, injection, model_chat, config)
        return grade_item(item, response, judge_chat, k_injected=len(injection))

    records = run_parallel(run_one, planned, max_workers=max_workers)
    if record_sink is not None:
        for record in records:
            record_sink(record)
    return EvalRun(config=config, records=tuple(records), prompt_log=tuple(prompt_log))


# ---------------------------------------------------------------------------
# Metrics


def accuracy(records: list[EvalRecord]) -> float:
    """Fraction of records graded correct; undefined (error) on empty input."""
    if not records:
        raise MetricUndefinedError("accuracy over zero records is undefined")
    return sum(1 for r in records if r.correct) / len(records)


def _group_of(item: QuestionItem, schema: Schema, by: str) -> tuple[str, str]:
    if by == "language":
        return item.language, item.language
    if by == "content_type":
        return item.content_type.value, item.content_type.value
    if by == "format":
        return item.format.value, item.format.value
    level = {"layer": Level.LAYER, "category": Level.CATEGORY, "topic_aspect": Level.TOPIC_ASPECT}[by]
    try:
        node = schema.ancestor_at(item.dimension_id, level)
    except Exception as exc:
        raise IntegrityError(f"{item.item_id}: dimension {item.dimension_id!r} not in schema: {exc}") from exc
    if node is None:
        raise IntegrityError(f"{item.item_id}: dimension {item.dimension_id!r} has no {by} ancestor")
    return node.node_id, node.name


def group_accuracy(
    records: list[EvalRecord],
    dataset: Dataset,
    schema: Schema,
    by: str,
) -> list[dict]:
    """One row per group: {group_id, group, n, accuracy}; rows sorted by group id.

    Groups resolve through each item's dimension walked up the schema (for
    layer/category/topic_aspect) or directly off the item metadata.
    """
    if by not in GROUPING_KEYS:
        raise PreconditionError(f"unknown grouping key {by!r}; expected one of {GROUPING_KEYS}")
    items_by_id = {item.item_id: item for item in dataset.items}
    groups: dict[str, dict] = {}
    for record in records:
        item = items_by_id.get(record.item_id)
        if item is None:
            raise IntegrityError(f"record {record.item_id!r} has no matching dataset item")
        group_id, group_name = _group_of(item, schema, by)
        bucket = groups.setdefault(group_id, {"group_id": group_id, "group": group_name, "n": 0, "correct": 0})
        bucket["n"] += 1
        bucket["correct"] += 1 if record.correct else 0
    rows = []
    for group_id in sorted(groups):
        bucket = groups[group_id]
        rows.append(
            {
                "group_id": bucket["group_id"],
                "group": bucket["group"],
                "n": bucket["n"],
                "accuracy": bucket["correct"] / bucket["n"],
            }
        )
    return rows


def injection_sweep(
    dataset: Dataset,
    kb: dict[str, KnowledgeInstance],
    ks: list[int],
    model_chat: ChatProvider,
    config: EvalRunConfig,
    judge_chat: ChatProvider | None = None,
) -> list[EvalRun]:
    """One run per k over identical items and seed; returns runs in ks order."""
    if not ks:
        raise PreconditionError("ks must be nonempty")
    if any(k < 0 for k in ks):
        raise PreconditionError("every k must be >= 0")
    runs = []
    for k in ks:
        run_config = replace(config, injection_count=k)
        runs.append(evaluate_dataset(dataset, kb, model_chat, run_config, judge_chat=judge_chat))
    return runs
