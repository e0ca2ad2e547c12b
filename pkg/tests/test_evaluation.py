from __future__ import annotations

import pytest

from culturebench.errors import IntegrityError, MetricUndefinedError, PreconditionError
from culturebench.evaluation import (
    JUDGE,
    OBJECTIVE_MATCH,
    EvalRecord,
    EvalRunConfig,
    accuracy,
    ask_model,
    build_prompt,
    evaluate_dataset,
    grade_item,
    group_accuracy,
    injection_sweep,
    judge_subjective,
    parse_objective,
    select_injection,
)
from culturebench.providers import ChatResponse, MockChatProvider, ScriptedJudge, ScriptedKnowledgeModel
from culturebench.question_gen import ContentType, Dataset, FormatType
from culturebench.storage import substream

from helpers import make_instance, make_item, make_record

OPTIONS4 = (("A", "Ice sculptures"), ("B", "Fireworks and bonfires"), ("C", "Water fountains"), ("D", "Sandcastles"))


# ---------------------------------------------------------------------------
# Prompt construction


def _kb(statements, dim="dim.alcohol"):
    instances = [make_instance(s, dimension_id=dim) for s in statements]
    return instances, {i.kb_id: i for i in instances}


def test_build_prompt_k0_has_no_reference_block():
    item = make_item("i1")
    prompt = build_prompt(item, [])
    assert "Reference:" not in prompt
    assert item.question_text in prompt


def test_build_prompt_k2_lists_exactly_two_statements():
    instances, _ = _kb(["First gold statement text.", "Second gold statement text.", "Third gold statement text."])
    item = make_item("i1", knowledge_ids=tuple(i.kb_id for i in instances))
    prompt = build_prompt(item, instances[:2])
    assert prompt.count("- ") >= 2
    assert "First gold statement text." in prompt
    assert "Second gold statement text." in prompt
    assert "Third gold statement text." not in prompt
    assert prompt.index("Reference:") < prompt.index("Question:")


def test_select_injection_shortfall():
    instances, kb = _kb(["Only statement available here."])
    item = make_item("i1", knowledge_ids=(instances[0].kb_id,))
    injected, shortfall = select_injection(item, kb, 3)
    assert len(injected) == 1
    assert shortfall == 2


def test_select_injection_stored_order_truncation():
    instances, kb = _kb(["Statement one here.", "Statement two here.", "Statement three here."])
    item = make_item("i1", knowledge_ids=tuple(i.kb_id for i in instances))
    injected, shortfall = select_injection(item, kb, 2)
    assert [i.statement for i in injected] == ["Statement one here.", "Statement two here."]
    assert shortfall == 0


# ---------------------------------------------------------------------------
# Objective parsing


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("B", "B"),
        ("B) Fireworks and bonfires", "B"),
        ("(C)", "C"),
        ("the answer is (C)", "C"),
        ("The answer is B.", "B"),
        ("Fireworks and bonfires", "B"),
        ("I would choose option D because sand is fun.", "D"),
        ("A — ice sculptures are the centerpiece.", "A"),
        ("", None),
        ("no committal answer here", None),
        ("Ice sculptures or water fountains, hard to say.", None),  # matches two options
        ("Either A or B could be argued.", None),
    ],
)
def test_parse_objective_choice_cases(raw, expected):
    assert parse_objective(raw, FormatType.MULTIPLE_CHOICE, OPTIONS4) == expected


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("True.", "true"),
        ("FALSE", "false"),
        ("Verdadero", "true"),
        ("I believe the statement is false because dinner is late.", "false"),
        ("True or false? impossible to tell.", None),
    ],
)
def test_parse_objective_true_false_cases(raw, expected):
    assert parse_objective(raw, FormatType.TRUE_FALSE) == expected


def test_parse_objective_rejects_subjective_format():
    with pytest.raises(PreconditionError):
        parse_objective("text", FormatType.ESSAY)


# ---------------------------------------------------------------------------
# Model querying and grading


class _EchoChat:
    provider_id = "mock:echo"

    def __init__(self, text):
        self.text = text

    def chat(self, request):
        return ChatResponse(text=self.text, provider_id=self.provider_id)


class _DownChat:
    provider_id = "mock:down"

    def chat(self, request):
        from culturebench.errors import ProviderTransportError

        raise ProviderTransportError("socket closed")


def _mc_item(item_id="i1"):
    return make_item(item_id, options=OPTIONS4, reference_answer="B")


def test_ask_model_echo_letter():
    config = EvalRunConfig(model_id="m", dataset_ref="d")
    response = ask_model(_mc_item(), [], _EchoChat("B"), config)
    assert response.parsed_answer == "B"
    assert response.parse_ok


def test_ask_model_prose_answer():
    config = EvalRunConfig(model_id="m", dataset_ref="d")
    response = ask_model(_mc_item(), [], _EchoChat("after thought, the answer is (C)"), config)
    assert response.parsed_answer == "C"


def test_ask_model_empty_response_scores_incorrect():
    config = EvalRunConfig(model_id="m", dataset_ref="d")
    response = ask_model(_mc_item(), [], _EchoChat(""), config)
    record = grade_item(_mc_item(), response, None)
    assert not record.correct
    assert record.flag == "PARSE_FAILED"
    assert not response.parse_ok


def test_transport_failure_counted_and_flagged():
    config = EvalRunConfig(model_id="m", dataset_ref="d")
    response = ask_model(_mc_item(), [], _DownChat(), config)
    record = grade_item(_mc_item(), response, None)
    assert not record.correct
    assert record.flag == "TRANSPORT_FAILED"


def test_judge_restatement_correct():
    correct, rationale, conflict, flag = judge_subjective(
        "What role does lunch play?",
        "Lunch is the main meal of the day and eaten late.",
        "The day's principal meal is lunch, taken late in the afternoon.",
        ScriptedJudge(),
    )
    assert correct
    assert conflict is None
    assert flag is None


def test_judge_opposite_incorrect_with_conflict():
    correct, rationale, conflict, flag = judge_subjective(
        "What role does lunch play?",
        "Lunch is the main meal of the day and eaten late.",
        "Lunch is not the main meal of the day.",
        ScriptedJudge(),
    )
    assert not correct
    assert conflict is True


def test_judge_empty_answer_incorrect():
    correct, *_ = judge_subjective("q", "The reference content.", "", ScriptedJudge())
    assert not correct


def test_judge_unparseable_retry_then_undecided():
    correct, rationale, conflict, flag = judge_subjective("q", "ref", "test", _EchoChat("shrug"))
    assert not correct
    assert flag == "UNDECIDED"


def test_grading_mode_partition():
    objective = grade_item(_mc_item(), ask_model(_mc_item(), [], _EchoChat("B"), EvalRunConfig("m", "d")), None)
    assert objective.grading_mode == OBJECTIVE_MATCH
    essay = make_item("i2", format_type=FormatType.ESSAY)
    response = ask_model(essay, [], _EchoChat("some discussion"), EvalRunConfig("m", "d"))
    judged = grade_item(essay, response, ScriptedJudge())
    assert judged.grading_mode == JUDGE


def test_subjective_item_requires_judge():
    essay = make_item("i2", format_type=FormatType.ESSAY)
    response = ask_model(essay, [], _EchoChat("words"), EvalRunConfig("m", "d"))
    with pytest.raises(PreconditionError):
        grade_item(essay, response, None)


def test_self_judge_guard():
    with pytest.raises(PreconditionError):
        EvalRunConfig(model_id="same", dataset_ref="d", judge_model_id="same")
    EvalRunConfig(model_id="same", dataset_ref="d", judge_model_id="same", allow_self_judge=True)


# ---------------------------------------------------------------------------
# Accuracy


def test_accuracy_all_correct():
    records = [make_record(f"i{n}", True) for n in range(5)]
    assert accuracy(records) == 1.0


def test_accuracy_six_of_ten():
    records = [make_record(f"i{n}", n < 6) for n in range(10)]
    # brute-force oracle
    assert accuracy(records) == sum(1 for r in records if r.correct) / len(records) == 0.6


def test_accuracy_empty_errors():
    with pytest.raises(MetricUndefinedError):
        accuracy([])


# ---------------------------------------------------------------------------
# Grouped accuracy


def _dataset_for_groups(spec):
    """spec: list of (dimension_id, n, n_correct, content_type, format)."""
    items, records = [], []
    counter = 0
    for dim, n, n_correct, content_type, fmt in spec:
        for j in range(n):
            item_id = f"g{counter:04d}"
            counter += 1
            items.append(
                make_item(item_id, dimension_id=dim, content_type=content_type, format_type=fmt)
            )
            records.append(make_record(item_id, j < n_correct))
    dataset = Dataset(items=tuple(items), manifest={"dataset_id": "grp", "language": "en"})
    return dataset, records


def test_group_accuracy_single_group_equals_overall(canonical):
    dataset, records = _dataset_for_groups(
        [("dim.climate", 8, 5, ContentType.FACTUAL, FormatType.MULTIPLE_CHOICE)]
    )
    [row] = group_accuracy(records, dataset, canonical, "category")
    assert row["group"] == "Geography & Customs"
    assert row["n"] == 8
    assert row["accuracy"] == accuracy(records)


def test_group_accuracy_weighted_recomposition(canonical):
    dataset, records = _dataset_for_groups(
        [
            ("dim.climate", 10, 5, ContentType.FACTUAL, FormatType.MULTIPLE_CHOICE),
            ("dim.eating-habits", 30, 30, ContentType.FACTUAL, FormatType.MULTIPLE_CHOICE),
        ]
    )
    rows = group_accuracy(records, dataset, canonical, "category")
    assert {r["group"]: r["accuracy"] for r in rows} == {
        "Geography & Customs": 0.5,
        "Personal Choices & Habits": 1.0,
    }
    overall = accuracy(records)
    assert overall == 0.875
    recomposed = sum(r["n"] / len(records) * r["accuracy"] for r in rows)
    assert abs(recomposed - overall) <= 1e-12


def test_group_accuracy_every_key_decomposes(canonical):
    rng = substream(99, "groups")
    dims = ["dim.climate", "dim.eating-habits", "dim.religion", "dim.communal-living", "dim.measurement-system"]
    spec = []
    for i, dim in enumerate(dims):
        n = rng.randint(3, 15)
        spec.append((dim, n, rng.randint(0, n), list(ContentType)[i % 4], list(FormatType)[i % 4]))
    dataset, records = _dataset_for_groups(spec)
    overall = accuracy(records)
    for key in ("language", "layer", "category", "topic_aspect", "content_type", "format"):
        rows = group_accuracy(records, dataset, canonical, key)
        recomposed = sum(r["n"] / len(records) * r["accuracy"] for r in rows)
        assert abs(recomposed - overall) <= 1e-12, key


def test_group_accuracy_unknown_dimension_is_integrity_error(canonical):
    dataset, records = _dataset_for_groups(
        [("dim.not-in-schema", 2, 1, ContentType.FACTUAL, FormatType.MULTIPLE_CHOICE)]
    )
    with pytest.raises(IntegrityError):
        group_accuracy(records, dataset, canonical, "category")


def test_group_accuracy_rejects_unknown_key(canonical):
    dataset, records = _dataset_for_groups(
        [("dim.climate", 2, 1, ContentType.FACTUAL, FormatType.MULTIPLE_CHOICE)]
    )
    with pytest.raises(PreconditionError):
        group_accuracy(records, dataset, canonical, "model")


# ---------------------------------------------------------------------------
# Injection sweep with the scripted gold-knowledge-sensitive model


def _scripted_setup():
    """Items needing 1, 1, 2, and 3 gold statements respectively."""
    statements = [f"Gold statement number {i} about a custom." for i in range(6)]
    instances = [make_instance(s) for s in statements]
    kb = {i.kb_id: i for i in instances}
    layout = [(0, 1), (1, 1), (2, 2), (4, 3)]  # (first statement index, how many linked)
    items, rules = [], []
    for n, (start, count) in enumerate(layout):
        linked = instances[start : start + count] if start + count <= 6 else instances[start:] + instances[: count - (6 - start)]
        question = f"Scripted question number {n}, which statement holds?"
        # option text paraphrases the gold so only injection can reveal it
        options = ((f"A", f"Paraphrased claim {n} holds."), ("B", "An unrelated wrong claim."))
        items.append(
            make_item(
                f"s{n}",
                question_text=question,
                options=options,
                reference_answer="A",
                knowledge_ids=tuple(i.kb_id for i in linked),
            )
        )
        rules.append((question, [i.statement for i in linked], "A", "B"))
    dataset = Dataset(items=tuple(sorted(items, key=lambda i: i.item_id)), manifest={"dataset_id": "scripted", "language": "en"})
    return dataset, kb, rules


def test_injection_sweep_counts_and_monotonicity():
    dataset, kb, rules = _scripted_setup()
    model = ScriptedKnowledgeModel(rules)
    config = EvalRunConfig(model_id="scripted", dataset_ref="scripted", judge_model_id="mock:judge")
    runs = injection_sweep(dataset, kb, [0, 1, 2, 3], model, config, judge_chat=ScriptedJudge())
    assert len(runs) == 4
    accuracies = [run.accuracy for run in runs]
    assert accuracies == sorted(accuracies)  # non-decreasing in k
    assert accuracies[0] == 0.0
    assert accuracies[-1] == 1.0
    # prompt-injection exactness: every prompt holds min(k, available) statements
    items_by_id = {i.item_id: i for i in dataset.items}
    for run in runs:
        k = run.config.injection_count
        for entry in run.prompt_log:
            available = len(items_by_id[entry["item_id"]].knowledge_ids)
            assert entry["k_injected"] == min(k, available)
            assert entry["prompt"].count("- Gold statement") == entry["k_injected"]


def test_injection_sweep_k0_equals_plain_evaluate():
    dataset, kb, rules = _scripted_setup()
    model = ScriptedKnowledgeModel(rules)
    config = EvalRunConfig(model_id="scripted", dataset_ref="scripted")
    [sweep_run] = injection_sweep(dataset, kb, [0], model, config)
    plain = evaluate_dataset(dataset, kb, model, config)
    assert sweep_run.records == plain.records


def test_injection_sweep_rejects_bad_ks():
    dataset, kb, rules = _scripted_setup()
    model = ScriptedKnowledgeModel(rules)
    config = EvalRunConfig(model_id="scripted", dataset_ref="scripted")
    with pytest.raises(PreconditionError):
        injection_sweep(dataset, kb, [], model, config)
    with pytest.raises(PreconditionError):
        injection_sweep(dataset, kb, [0, -1], model, config)


def test_evaluate_dataset_resume_skips_completed():
    dataset, kb, rules = _scripted_setup()
    model = ScriptedKnowledgeModel(rules)
    config = EvalRunConfig(model_id="scripted", dataset_ref="scripted", injection_count=3)
    full = evaluate_dataset(dataset, kb, model, config)
    done = {r.item_id for r in full.records[:2]}
    partial = evaluate_dataset(dataset, kb, model, config, completed_item_ids=done)
    assert {r.item_id for r in partial.records} == {r.item_id for r in full.records} - done


def test_evaluate_dataset_deterministic(fixture_kb, canonical, mock_chat):
    from culturebench.question_gen import GenerationPlan, build_dataset

    plan = GenerationPlan(total_items=12, seed=3)
    dataset = build_dataset(fixture_kb, plan, mock_chat, canonical, culture="Spanish", language="en")
    kb = {i.kb_id: i for i in fixture_kb}
    config = EvalRunConfig(model_id="mock:candidate", dataset_ref="x", injection_count=1, judge_model_id="mock:judge", seed=3)
    a = evaluate_dataset(dataset, kb, MockChatProvider(), config, judge_chat=ScriptedJudge())
    b = evaluate_dataset(dataset, kb, MockChatProvider(), config, judge_chat=ScriptedJudge())
    assert a.records == b.records
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]


def test_eval_record_roundtrip():
    record = EvalRecord(item_id="i", correct=True, grading_mode=JUDGE, judge_rationale="ok", conflict_flag=None)
    assert EvalRecord.from_dict(record.to_dict()) == record


def test_evaluate_dataset_parallel_matches_sequential():
    dataset, kb, rules = _scripted_setup()
    model = ScriptedKnowledgeModel(rules)
    config = EvalRunConfig(model_id="scripted", dataset_ref="scripted", injection_count=2)
    sequential = evaluate_dataset(dataset, kb, model, config, max_workers=1)
    parallel = evaluate_dataset(dataset, kb, model, config, max_workers=4)
    assert sequential.records == parallel.records
    assert sequential.prompt_log == parallel.prompt_log
