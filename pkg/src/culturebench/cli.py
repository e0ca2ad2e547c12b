"""Command-line entry point: build-kb, curate, gen-dataset, evaluate, report.

Wires configuration, providers, and pipeline stages together. Every stage
writes a manifest (inputs, config digest, seed, counts) into the workspace,
and all randomness flows from the single configured seed. When the config
selects mock providers a deterministic tick clock replaces wall time, so two
identical invocations produce byte-identical artifacts.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import acquisition, curation, evaluation, extraction, question_gen, reporting
from .errors import ConfigError, CultureBenchError, PreconditionError
from .extraction import KnowledgeInstance
from .providers import (
    CallLog,
    HttpChatProvider,
    HttpEmbeddingProvider,
    HttpSearchProvider,
    MockChatProvider,
    MockEmbedder,
    MockFetcher,
    MockSearchProvider,
    ProviderConfig,
    ScriptedJudge,
)
from .question_gen import Dataset, GenerationPlan, QuestionItem
from .schema import Schema, load_canonical_schema, load_schema, slugify
from .storage import (
    Manifest,
    SystemClock,
    TickClock,
    canonical_json,
    digest,
    file_digest,
    isoformat,
    read_json,
    read_jsonl,
    write_jsonl,
    write_manifest,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

DEFAULT_STAGES = {
    "top_k": 5,
    "dedup_threshold": curation.DEFAULT_DEDUP_THRESHOLD,
    "body_budget": acquisition.DEFAULT_BODY_BUDGET,
    "include_sub_dimensions": False,
    "seed_urls_path": None,
    "injection_ks": [0],
    "max_workers": 1,
    "per_host_delay": 1.0,
    "generation_temperature": 0.7,
    # Cap on verified instances kept per dimension; None keeps everything.
    "per_dimension_target": None,
}


def log(stage: str, message: str, **fields) -> None:
    record = {"level": "info", "stage": stage, "msg": message}
    record.update(fields)
    print(canonical_json(record), file=sys.stderr)


@dataclass
class ToolkitConfig:
    raw: dict
    path: Path
    schema_path: str
    culture: str
    language: str
    workspace_dir: Path
    seed: int
    providers: dict
    stages: dict
    evaluation: dict = field(default_factory=dict)
    plan: dict | None = None

    @property
    def config_digest(self) -> str:
        return digest(canonical_json(self.raw))

    @property
    def mock_only(self) -> bool:
        return all(section.get("kind", "mock") == "mock" for section in self.providers.values())

    def stage_dir(self) -> Path:
        return self.workspace_dir / slugify(self.culture) / self.language

    def load_schema(self) -> Schema:
        if self.schema_path == "canonical":
            return load_canonical_schema()
        return load_schema(self.schema_path)


def validate_config(path: str | Path) -> tuple[ToolkitConfig | None, list[str]]:
    """Parse a config file and check every cross-reference before any network call."""
    path = Path(path)
    violations: list[str] = []
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        return None, [f"cannot read config: {exc}"]
    except json.JSONDecodeError as exc:
        return None, [f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
    if not isinstance(raw, dict):
        return None, ["config top level must be an object"]

    schema_path = raw.get("schema_path", "canonical")
    if schema_path != "canonical" and not Path(schema_path).exists():
        violations.append(f"schema_path does not exist: {schema_path}")
    culture = raw.get("culture", "")
    if not str(culture).strip():
        violations.append("culture must be a nonempty string")
    language = raw.get("language", "")
    if not str(language).strip():
        violations.append("language must be a nonempty string")

    providers = raw.get("providers", {})
    for name in ("chat", "search", "embed"):
        section = providers.get(name, {"kind": "mock"})
        kind = section.get("kind", "mock")
        if kind not in ("mock", "http"):
            violations.append(f"providers.{name}.kind must be 'mock' or 'http', got {kind!r}")
        if kind == "http":
            if not section.get("endpoint"):
                violations.append(f"providers.{name}: http provider requires an endpoint")
            credential_ref = section.get("credential_ref", "")
            if credential_ref and credential_ref not in os.environ:
                violations.append(f"providers.{name}: environment variable {credential_ref!r} is not set")
        rpm = section.get("requests_per_minute", 60)
        if not isinstance(rpm, int) or rpm < 1:
            violations.append(f"providers.{name}.requests_per_minute must be a positive integer")
        fixture = section.get("fixture_path")
        if fixture and not Path(fixture).exists():
            violations.append(f"providers.{name}.fixture_path does not exist: {fixture}")

    stages = dict(DEFAULT_STAGES)
    stages.update(raw.get("stages", {}))
    if not isinstance(stages["top_k"], int) or stages["top_k"] < 1:
        violations.append("stages.top_k must be a positive integer")
    if not 0.0 <= float(stages["dedup_threshold"]) <= 1.0:
        violations.append("stages.dedup_threshold must be in [0, 1]")
    ks = stages["injection_ks"]
    if not isinstance(ks, list) or not ks or any((not isinstance(k, int)) or k < 0 for k in ks):
        violations.append("stages.injection_ks must be a nonempty list of integers >= 0")
    if stages["seed_urls_path"] and not Path(stages["seed_urls_path"]).exists():
        violations.append(f"stages.seed_urls_path does not exist: {stages['seed_urls_path']}")
    target = stages.get("per_dimension_target")
    if target is not None and (not isinstance(target, int) or target < 1):
        violations.append("stages.per_dimension_target must be a positive integer or null")

    plan = raw.get("plan")
    if plan is not None:
        try:
            GenerationPlan.from_dict(plan)
        except (PreconditionError, KeyError, ValueError) as exc:
            violations.append(f"plan: {exc}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        violations.append("seed must be an integer")

    if violations:
        return None, violations
    config = ToolkitConfig(
        raw=raw,
        path=path,
        schema_path=str(schema_path),
        culture=str(culture),
        language=str(language),
        workspace_dir=Path(raw.get("workspace_dir", "workspace")),
        seed=seed,
        providers={name: dict(providers.get(name, {"kind": "mock"})) for name in ("chat", "search", "embed")},
        stages=stages,
        evaluation=dict(raw.get("evaluation", {})),
        plan=plan,
    )
    return config, []


# ---------------------------------------------------------------------------
# Provider wiring


def _provider_config(section: dict) -> ProviderConfig:
    return ProviderConfig(
        endpoint=section.get("endpoint", ""),
        credential_ref=section.get("credential_ref", ""),
        requests_per_minute=section.get("requests_per_minute", 60),
        max_retries=section.get("max_retries", 3),
        timeout=section.get("timeout", 30.0),
        model=section.get("model", ""),
    )


@dataclass
class Runtime:
    config: ToolkitConfig
    clock: object
    call_log: CallLog
    chat: object
    search: object
    embed: object
    fetcher: object

    def now(self) -> str:
        return isoformat(self.clock.now())


def build_runtime(config: ToolkitConfig) -> Runtime:
    clock = TickClock() if config.mock_only else SystemClock()
    call_log = CallLog(sink_path=config.stage_dir() / "call_log.jsonl")
    chat_section = config.providers["chat"]
    search_section = config.providers["search"]
    embed_section = config.providers["embed"]

    if chat_section.get("kind", "mock") == "mock":
        chat = MockChatProvider(call_log=call_log)
    else:
        chat = HttpChatProvider(_provider_config(chat_section), call_log=call_log)

    fixture_path = search_section.get("fixture_path")
    if search_section.get("kind", "mock") == "mock":
        from .providers.mock import load_fixture_corpus

        pages = load_fixture_corpus(fixture_path) if fixture_path else None
        search = MockSearchProvider(pages=pages, call_log=call_log)
        fetcher = MockFetcher(pages=pages, call_log=call_log)
    else:
        search = HttpSearchProvider(_provider_config(search_section), call_log=call_log)
        fetcher = acquisition.PoliteFetcher(
            timeout=search_section.get("timeout", 30.0),
            per_host_delay=config.stages.get("per_host_delay", 1.0),
        )

    if embed_section.get("kind", "mock") == "mock":
        embed = MockEmbedder(call_log=call_log)
    else:
        embed = HttpEmbeddingProvider(_provider_config(embed_section), call_log=call_log)
    return Runtime(config=config, clock=clock, call_log=call_log, chat=chat, search=search, embed=embed, fetcher=fetcher)


def model_provider(model_id: str, runtime: Runtime):
    if model_id.startswith("mock"):
        if "judge" in model_id:
            return ScriptedJudge(call_log=runtime.call_log)
        return MockChatProvider(call_log=runtime.call_log)
    section = dict(runtime.config.providers["chat"])
    section["model"] = model_id
    return HttpChatProvider(_provider_config(section), call_log=runtime.call_log)


# ---------------------------------------------------------------------------
# Stages


def _manifest(config: ToolkitConfig, runtime: Runtime, stage: str, inputs, outputs, counts, **extra) -> None:
    base = config.stage_dir()
    relative_outputs = [str(Path(p).relative_to(base)) for p in outputs]
    if (base / "call_log.jsonl").exists():
        relative_outputs.append("call_log.jsonl")
    manifest = Manifest(
        stage=stage,
        created_at=runtime.now(),
        seed=config.seed,
        config_digest=config.config_digest,
        inputs=[str(p) for p in inputs],
        outputs=relative_outputs,
        counts=counts,
        extra=extra,
    )
    write_manifest(base / f"{stage}.manifest.json", manifest)


def stage_fetch(config: ToolkitConfig, runtime: Runtime) -> dict:
    schema = config.load_schema()
    base = config.stage_dir()
    specs = acquisition.plan_retrieval(
        schema, config.culture, config.language, include_sub_dimensions=config.stages["include_sub_dimensions"]
    )
    seeds_by_dim: dict[str, list[str]] = {}
    seeds_path = config.stages.get("seed_urls_path")
    if seeds_path:
        for url, dim in acquisition.load_seed_urls(seeds_path):
            seeds_by_dim.setdefault(dim or "", []).append(url)

    warnings: list[str] = []
    accepted: list[acquisition.RawDocument] = []
    rejected: list[dict] = []
    dimension_names = {n.node_id: n.name for n in schema.nodes}
    for spec in specs:
        docs = acquisition.fetch_documents(
            spec,
            fetcher=runtime.fetcher,
            search=runtime.search,
            top_k=config.stages["top_k"],
            seed_urls=seeds_by_dim.get(spec.dimension_id, []),
            fetched_at=runtime.now(),
            body_budget=config.stages["body_budget"],
            warn=warnings.append,
        )
        for doc in docs:
            verdict = acquisition.llm_filter(doc, runtime.chat, dimension_name=dimension_names.get(doc.dimension_id))
            if verdict.accepted:
                accepted.append(doc)
            else:
                rejected.append({"doc_id": doc.doc_id, "url": doc.url, "reason": verdict.reason})
    accepted = acquisition.sort_documents(accepted)
    docs_path = base / "docs" / "documents.jsonl"
    rejects_path = base / "docs" / "rejected.jsonl"
    write_jsonl(docs_path, [d.to_dict() for d in accepted])
    write_jsonl(rejects_path, sorted(rejected, key=lambda r: r["doc_id"]))
    for message in warnings:
        log("fetch", message)
    counts = {"queries": len(specs), "accepted_docs": len(accepted), "rejected_docs": len(rejected)}
    _manifest(config, runtime, "fetch", [config.path], [docs_path, rejects_path], counts)
    log("fetch", "stage complete", **counts)
    return counts


def stage_extract(config: ToolkitConfig, runtime: Runtime) -> dict:
    schema = config.load_schema()
    base = config.stage_dir()
    docs_path = base / "docs" / "documents.jsonl"
    if not docs_path.exists():
        raise ConfigError(f"missing {docs_path}; run build-kb --stage fetch first")
    docs = [acquisition.RawDocument.from_dict(d) for d in read_jsonl(docs_path)]
    instances: list[KnowledgeInstance] = []
    warnings: list[str] = []
    for doc in docs:
        node = schema.node(doc.dimension_id)
        extracted = extraction.extract_knowledge(doc, node, runtime.chat, warn=warnings.append)
        for inst in extracted:
            verdict = extraction.verify_instance(inst, doc, runtime.chat, dimension_name=node.name)
            instances.append(extraction.apply_verdict(inst, verdict))
    # Idempotent re-runs: identical kb_ids collapse to the first occurrence.
    unique: dict[str, KnowledgeInstance] = {}
    for inst in instances:
        unique.setdefault(inst.kb_id, inst)
    instances = extraction.sort_instances(list(unique.values()))
    target = config.stages.get("per_dimension_target")
    if target is not None:
        kept: list[KnowledgeInstance] = []
        per_group: dict[tuple[str, str], int] = {}
        for inst in instances:
            key = (inst.dimension_id, inst.language)
            if inst.qc_status == extraction.QC_VERIFIED:
                if per_group.get(key, 0) >= int(target):
                    continue
                per_group[key] = per_group.get(key, 0) + 1
            kept.append(inst)
        instances = kept
    kb_path = base / "kb" / "instances.jsonl"
    write_jsonl(kb_path, [inst.to_dict() for inst in instances])
    for message in warnings:
        log("extract", message)
    verified = sum(1 for i in instances if i.qc_status == extraction.QC_VERIFIED)
    counts = {"documents": len(docs), "instances": len(instances), "verified": verified}
    _manifest(config, runtime, "extract", [str(docs_path)], [kb_path], counts)
    log("extract", "stage complete", **counts)
    return counts


def stage_curate(config: ToolkitConfig, runtime: Runtime) -> dict:
    base = config.stage_dir()
    kb_path = base / "kb" / "instances.jsonl"
    if not kb_path.exists():
        raise ConfigError(f"missing {kb_path}; run build-kb first")
    instances = [KnowledgeInstance.from_dict(d) for d in read_jsonl(kb_path)]
    verified = [i for i in instances if i.qc_status == extraction.QC_VERIFIED]
    deduped = curation.dedup(verified, config.stages["dedup_threshold"], embed=runtime.embed)
    assignments = curation.cluster_kb(
        deduped, runtime.embed, chat=runtime.chat, seed=config.seed,
        max_workers=int(config.stages.get("max_workers", 1)),
    )
    labeled = curation.apply_cluster_labels(deduped, assignments)
    labeled = extraction.sort_instances(labeled)
    keywords = curation.derive_keywords(assignments)
    stats = curation.kb_stats(labeled)

    curated_path = base / "kb" / "curated.jsonl"
    assignments_path = base / "clusters" / "assignments.jsonl"
    keywords_path = base / "clusters" / "keywords.jsonl"
    expanded_schema_path = base / "clusters" / "expanded_schema.json"
    stats_path = base / "kb" / "stats.json"
    write_jsonl(curated_path, [i.to_dict() for i in labeled])
    write_jsonl(assignments_path, [a.to_dict() for a in sorted(assignments, key=lambda a: (a.dimension_id, a.kb_id))])
    write_jsonl(keywords_path, [{"dimension_id": d, "label": l} for d, l in keywords])
    from .schema import expand_schema, save_schema
    from dataclasses import replace as dc_replace

    expanded = expand_schema(config.load_schema(), keywords)
    expanded = dc_replace(expanded, culture_tag=config.culture)
    save_schema(expanded, expanded_schema_path)
    from .storage import write_json

    write_json(stats_path, stats.to_dict())
    stats_tables = reporting.kb_stats_tables(stats)
    table_paths = []
    for table in stats_tables:
        path = base / "kb" / f"{table.name}.csv"
        path.write_text(reporting.table_to_csv(table), encoding="utf-8", newline="\n")
        table_paths.append(path)

    counts = {
        "input_verified": len(verified),
        "after_dedup": len(deduped),
        "clusters": len({(a.dimension_id, a.cluster_index) for a in assignments}),
        "keywords": len(keywords),
    }
    outputs = [curated_path, assignments_path, keywords_path, expanded_schema_path, stats_path, *table_paths]
    _manifest(config, runtime, "curate", [str(kb_path)], outputs, counts)
    log("curate", "stage complete", **counts)
    return counts


def _load_kb_for_generation(base: Path) -> tuple[list[KnowledgeInstance], str]:
    curated = base / "kb" / "curated.jsonl"
    raw = base / "kb" / "instances.jsonl"
    kb_path = curated if curated.exists() else raw
    if not kb_path.exists():
        raise ConfigError(f"missing knowledge base at {curated} or {raw}; run build-kb first")
    return [KnowledgeInstance.from_dict(d) for d in read_jsonl(kb_path)], file_digest(kb_path)


def stage_gen_dataset(config: ToolkitConfig, runtime: Runtime, plan_path: str | None) -> dict:
    base = config.stage_dir()
    if plan_path:
        plan = GenerationPlan.from_dict(read_json(plan_path))
    elif config.plan is not None:
        plan = GenerationPlan.from_dict(config.plan)
    else:
        raise ConfigError("no generation plan: pass --plan or add a 'plan' section to the config")
    if "seed" not in (config.plan or {}) and not plan_path:
        plan = GenerationPlan.from_dict({**plan.to_dict(), "seed": config.seed})
    kb, kb_version = _load_kb_for_generation(base)
    schema = config.load_schema()
    rejects: list[dict] = []
    dataset = question_gen.build_dataset(
        kb,
        plan,
        runtime.chat,
        schema,
        culture=config.culture,
        language=config.language,
        kb_version=kb_version,
        created_at=runtime.now(),
        reject_sink=rejects,
        temperature=float(config.stages.get("generation_temperature", 0.7)),
    )
    items_path = base / "datasets" / "items.jsonl"
    manifest_path = base / "datasets" / "manifest.json"
    write_jsonl(items_path, [item.to_dict() for item in dataset.items])
    from .storage import write_json

    write_json(manifest_path, dataset.manifest)
    counts = {"items": len(dataset.items), "rejected_attempts": len(rejects)}
    counts.update({f"type_{k}": v for k, v in dataset.manifest["counts"].items()})
    _manifest(config, runtime, "gen-dataset", [config.path], [items_path, manifest_path], counts)
    log("gen-dataset", "stage complete", **counts)
    return counts


def _load_dataset(manifest_path: Path) -> Dataset:
    manifest = read_json(manifest_path)
    items_path = manifest_path.parent / "items.jsonl"
    items = tuple(QuestionItem.from_dict(d) for d in read_jsonl(items_path))
    return Dataset(items=items, manifest=manifest)


def stage_evaluate(config: ToolkitConfig, runtime: Runtime, args) -> dict:
    base = config.stage_dir()
    manifest_path = Path(args.dataset) if args.dataset else base / "datasets" / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"dataset manifest not found: {manifest_path}")
    dataset = _load_dataset(manifest_path)
    kb, _ = _load_kb_for_generation(base)
    kb_by_id = {inst.kb_id: inst for inst in kb}

    model_id = args.model or config.evaluation.get("model_id", "mock:candidate")
    judge_id = config.evaluation.get("judge_model_id", "mock:judge")
    ks = [int(k) for k in str(args.inject).split(",")] if args.inject is not None else [0]
    model_chat = model_provider(model_id, runtime)
    judge_chat = model_provider(judge_id, runtime)

    all_counts = {}
    for k in ks:
        run_config = evaluation.EvalRunConfig(
            model_id=model_id,
            dataset_ref=dataset.manifest["dataset_id"],
            injection_count=k,
            judge_model_id=judge_id,
            seed=config.seed,
            max_items=args.max_items or config.evaluation.get("max_items"),
            allow_self_judge=bool(config.evaluation.get("allow_self_judge", False)),
        )
        run_id = digest(model_id, dataset.manifest["dataset_id"], str(k), str(config.seed), length=12)
        run_dir = base / "runs" / run_id
        records_path = run_dir / "records.jsonl"
        completed: set[str] = set()
        existing = []
        if records_path.exists():
            existing = read_jsonl(records_path)
            completed = {r["item_id"] for r in existing}
        run = evaluation.evaluate_dataset(
            dataset, kb_by_id, model_chat, run_config, judge_chat=judge_chat,
            completed_item_ids=completed, max_workers=int(config.stages.get("max_workers", 1)),
        )
        all_records = [evaluation.EvalRecord.from_dict(r) for r in existing] + list(run.records)
        write_jsonl(records_path, [r.to_dict() for r in all_records])
        full_run = evaluation.EvalRun(config=run_config, records=tuple(all_records), prompt_log=run.prompt_log)
        from .storage import write_json

        write_json(run_dir / "summary.json", full_run.summary_dict())
        outputs = [records_path, run_dir / "summary.json"]
        if args.audit_prompts:
            prompts_path = run_dir / "prompts.jsonl"
            write_jsonl(prompts_path, list(run.prompt_log))
            outputs.append(prompts_path)
        counts = {"n": full_run.n, "correct": sum(1 for r in all_records if r.correct), "resumed": len(existing)}
        _manifest(
            config, runtime, f"evaluate-{run_id}", [str(manifest_path)], outputs, counts,
            model_id=model_id, injection_count=k,
        )
        log("evaluate", "run complete", run_id=run_id, accuracy=full_run.accuracy, **counts)
        all_counts[f"k{k}"] = counts["n"]
    return all_counts


def stage_report(config: ToolkitConfig, runtime: Runtime, args) -> dict:
    base = config.stage_dir()
    runs_dir = Path(args.runs) if args.runs else base / "runs"
    out_dir = Path(args.out) if args.out else base / "reports"
    manifest_path = base / "datasets" / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"dataset manifest not found: {manifest_path}")
    dataset = _load_dataset(manifest_path)
    schema = config.load_schema()

    runs: list[evaluation.EvalRun] = []
    if runs_dir.exists():
        for run_dir in sorted(runs_dir.iterdir()):
            summary_path = run_dir / "summary.json"
            records_path = run_dir / "records.jsonl"
            if not (summary_path.exists() and records_path.exists()):
                continue
            summary = read_json(summary_path)
            run_config = evaluation.EvalRunConfig(**summary["config"])
            records = tuple(evaluation.EvalRecord.from_dict(d) for d in read_jsonl(records_path))
            runs.append(evaluation.EvalRun(config=run_config, records=records))
    matching = [r for r in runs if r.config.dataset_ref == dataset.manifest["dataset_id"]]

    sweep_groups: dict[str, list[evaluation.EvalRun]] = {}
    for run in matching:
        sweep_groups.setdefault(run.config.model_id, []).append(run)
    sweep_runs = None
    for model_id in sorted(sweep_groups):
        group = sweep_groups[model_id]
        if len({r.config.injection_count for r in group}) > 1:
            sweep_runs = sorted(group, key=lambda r: r.config.injection_count)
            break

    stats = None
    curated_path = base / "kb" / "curated.jsonl"
    if curated_path.exists():
        kb = [KnowledgeInstance.from_dict(d) for d in read_jsonl(curated_path)]
        stats = curation.kb_stats(kb)

    report = reporting.make_report(
        runs=[(run, dataset) for run in matching],
        schema=schema,
        kb_stats=stats,
        sweep_runs=sweep_runs,
        created_at=runtime.now(),
    )
    written = reporting.export(report, out_dir, audit=bool(args.audit_prompts))
    counts = {"runs": len(matching), "tables": len(report.tables), "files": len(written)}
    _manifest(config, runtime, "report", [str(manifest_path), str(runs_dir)], written, counts)
    log("report", "stage complete", **counts)
    return counts


def stage_review_sample(config: ToolkitConfig, runtime: Runtime, args) -> dict:
    base = config.stage_dir()
    dataset = _load_dataset(base / "datasets" / "manifest.json")
    kb, _ = _load_kb_for_generation(base)
    kb_by_id = {inst.kb_id: inst for inst in kb}
    rows = question_gen.review_sample(dataset, kb_by_id, n=args.n, seed=config.seed)
    out_path = Path(args.out) if args.out else base / "reports" / "review_sample.jsonl"
    write_jsonl(out_path, rows)
    counts = {"sampled": len(rows)}
    _manifest(config, runtime, "review-sample", [config.path], [out_path], counts)
    log("review-sample", "stage complete", **counts)
    return counts


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 2 with a structured line
        print(canonical_json({"level": "error", "stage": "cli", "msg": message}), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="culturebench", description="Culture-knowledge benchmark toolkit")
    parser.add_argument("--config", required=True, help="path to the toolkit config file (JSON)")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-kb", help="fetch pages and extract knowledge instances")
    build.add_argument("--stage", choices=("fetch", "extract", "all"), default="all")

    sub.add_parser("curate", help="dedup, cluster, and derive schema keywords")

    gen = sub.add_parser("gen-dataset", help="generate the evaluation dataset")
    gen.add_argument("--plan", default=None, help="generation plan file (JSON)")

    ev = sub.add_parser("evaluate", help="run a model over the dataset and grade it")
    ev.add_argument("--model", default=None, help="candidate model id (mock:candidate or a provider model)")
    ev.add_argument("--dataset", default=None, help="dataset manifest path")
    ev.add_argument("--inject", default=None, help="knowledge statements per prompt (int or comma list)")
    ev.add_argument("--max-items", type=int, default=None)
    ev.add_argument("--audit-prompts", action="store_true", help="persist the full prompt log")

    rep = sub.add_parser("report", help="render tables from runs")
    rep.add_argument("--runs", default=None, help="directory of run outputs")
    rep.add_argument("--out", default=None, help="output directory")
    rep.add_argument("--audit-prompts", action="store_true")

    review = sub.add_parser("review-sample", help="export a random item sample for human review")
    review.add_argument("--n", type=int, default=50)
    review.add_argument("--out", default=None)

    sub.add_parser("validate-config", help="check the config file and exit")
    return parser


def run_command(argv: list[str]) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    config, violations = validate_config(args.config)
    if args.command == "validate-config":
        for violation in violations:
            print(canonical_json({"level": "error", "stage": "config", "msg": violation}), file=sys.stderr)
        if config is not None:
            log("config", "config is valid", digest=config.config_digest)
        return EXIT_OK if config is not None else EXIT_USAGE
    if config is None:
        for violation in violations:
            print(canonical_json({"level": "error", "stage": "config", "msg": violation}), file=sys.stderr)
        return EXIT_USAGE

    runtime = build_runtime(config)
    try:
        if args.command == "build-kb":
            if args.stage in ("fetch", "all"):
                stage_fetch(config, runtime)
            if args.stage in ("extract", "all"):
                stage_extract(config, runtime)
        elif args.command == "curate":
            stage_curate(config, runtime)
        elif args.command == "gen-dataset":
            stage_gen_dataset(config, runtime, args.plan)
        elif args.command == "evaluate":
            stage_evaluate(config, runtime, args)
        elif args.command == "report":
            stage_report(config, runtime, args)
        elif args.command == "review-sample":
            stage_review_sample(config, runtime, args)
        else:  # pragma: no cover - argparse enforces the choices
            return EXIT_USAGE
    except ConfigError as exc:
        print(canonical_json({"level": "error", "stage": args.command, "msg": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except CultureBenchError as exc:
        print(
            canonical_json({"level": "error", "stage": args.command, "msg": str(exc), "kind": type(exc).__name__}),
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    raise SystemExit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
