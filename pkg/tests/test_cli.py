from __future__ import annotations

import json
from pathlib import Path

import pytest

from culturebench.cli import EXIT_OK, EXIT_USAGE, run_command, validate_config
from culturebench.storage import read_json, read_jsonl


def write_config(tmp_path: Path, **overrides) -> Path:
    config = {
        "schema_path": "canonical",
        "culture": "Spanish",
        "language": "en",
        "workspace_dir": str(tmp_path / "workspace"),
        "seed": 7,
        "providers": {
            "chat": {"kind": "mock"},
            "search": {"kind": "mock"},
            "embed": {"kind": "mock"},
        },
        "stages": {"top_k": 5},
        "plan": {"total_items": 8},
        "evaluation": {"model_id": "mock:candidate", "judge_model_id": "mock:judge"},
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline_workspace(tmp_path_factory):
    """One full pipeline run shared by the read-only CLI assertions."""
    tmp_path = tmp_path_factory.mktemp("cliws")
    config_path = write_config(tmp_path)
    assert run_command(["--config", str(config_path), "build-kb"]) == EXIT_OK
    assert run_command(["--config", str(config_path), "curate"]) == EXIT_OK
    assert run_command(["--config", str(config_path), "gen-dataset"]) == EXIT_OK
    assert run_command(["--config", str(config_path), "evaluate", "--inject", "0"]) == EXIT_OK
    assert run_command(["--config", str(config_path), "report"]) == EXIT_OK
    return tmp_path, config_path


# ---------------------------------------------------------------------------
# Config validation


def test_validate_config_fixture_is_valid(tmp_path):
    config, violations = validate_config(write_config(tmp_path))
    assert violations == []
    assert config is not None
    assert config.culture == "Spanish"
    assert config.mock_only


def test_validate_config_missing_env_var_names_it(tmp_path):
    path = write_config(
        tmp_path,
        providers={
            "chat": {"kind": "http", "endpoint": "https://api.example.org", "credential_ref": "CB_MISSING_SECRET"},
            "search": {"kind": "mock"},
            "embed": {"kind": "mock"},
        },
    )
    config, violations = validate_config(path)
    assert config is None
    assert any("CB_MISSING_SECRET" in v for v in violations)


def test_validate_config_negative_top_k(tmp_path):
    path = write_config(tmp_path, stages={"top_k": -1})
    config, violations = validate_config(path)
    assert config is None
    assert any("top_k" in v for v in violations)


def test_validate_config_parse_error_has_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "culture": \n}', encoding="utf-8")
    config, violations = validate_config(path)
    assert config is None
    assert any("line" in v for v in violations)


def test_validate_config_command_exit_codes(tmp_path):
    good = write_config(tmp_path)
    assert run_command(["--config", str(good), "validate-config"]) == EXIT_OK
    bad = write_config(tmp_path, stages={"top_k": 0})
    assert run_command(["--config", str(bad), "validate-config"]) == EXIT_USAGE


# ---------------------------------------------------------------------------
# Usage errors


def test_unknown_command_is_usage_error(tmp_path):
    assert run_command(["--config", str(write_config(tmp_path)), "no-such-command"]) == EXIT_USAGE


def test_unknown_flag_is_usage_error(tmp_path):
    assert run_command(["--config", str(write_config(tmp_path)), "curate", "--bogus"]) == EXIT_USAGE


def test_evaluate_without_dataset_is_usage_error(tmp_path):
    config_path = write_config(tmp_path)
    assert run_command(["--config", str(config_path), "evaluate"]) == EXIT_USAGE


def test_gen_dataset_without_plan_is_usage_error(tmp_path):
    config_path = write_config(tmp_path)
    raw = json.loads(config_path.read_text(encoding="utf-8"))
    del raw["plan"]
    config_path.write_text(json.dumps(raw), encoding="utf-8")
    assert run_command(["--config", str(config_path), "gen-dataset"]) == EXIT_USAGE


# ---------------------------------------------------------------------------
# Pipeline behavior


def test_pipeline_produces_complete_workspace(pipeline_workspace):
    tmp_path, _ = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    for relative in (
        "docs/documents.jsonl",
        "kb/instances.jsonl",
        "kb/curated.jsonl",
        "clusters/assignments.jsonl",
        "clusters/keywords.jsonl",
        "datasets/items.jsonl",
        "datasets/manifest.json",
        "reports/main_results.csv",
    ):
        assert (base / relative).exists(), relative
    manifest = read_json(base / "datasets" / "manifest.json")
    assert manifest["counts"] == {"FACTUAL": 2, "CONCEPTUAL": 2, "MISLEADING": 2, "MULTI_HOP": 2}


def test_pipeline_mock_only_never_goes_live(pipeline_workspace):
    tmp_path, _ = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    call_log = read_jsonl(base / "call_log.jsonl")
    assert call_log
    assert all(record["provider_id"].startswith("mock:") for record in call_log)


def test_pipeline_no_orphan_outputs(pipeline_workspace):
    tmp_path, _ = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    reachable: set[str] = set()
    for manifest_path in base.glob("*.manifest.json"):
        reachable.update(read_json(manifest_path)["outputs"])
    for path in base.rglob("*"):
        if path.is_dir() or path.name.endswith(".manifest.json"):
            continue
        assert str(path.relative_to(base)) in reachable, path


def test_repeated_invocation_same_config_digest(pipeline_workspace):
    tmp_path, config_path = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    digest_before = read_json(base / "curate.manifest.json")["config_digest"]
    assert run_command(["--config", str(config_path), "curate"]) == EXIT_OK
    digest_after = read_json(base / "curate.manifest.json")["config_digest"]
    assert digest_before == digest_after
    manifests = [read_json(p) for p in base.glob("*.manifest.json")]
    assert len({m["config_digest"] for m in manifests}) == 1


def test_evaluate_resumes_completed_items(pipeline_workspace, tmp_path):
    workspace_tmp, config_path = pipeline_workspace
    base = workspace_tmp / "workspace" / "spanish" / "en"
    assert run_command(["--config", str(config_path), "evaluate", "--inject", "2", "--max-items", "3"]) == EXIT_OK
    run_dirs = sorted(d for d in (base / "runs").iterdir() if d.is_dir())
    partial = [d for d in run_dirs if len(read_jsonl(d / "records.jsonl")) == 3]
    assert partial
    assert run_command(["--config", str(config_path), "evaluate", "--inject", "2"]) == EXIT_OK
    records = read_jsonl(partial[0] / "records.jsonl")
    assert len(records) == 8
    assert len({r["item_id"] for r in records}) == 8
    summary = read_json(partial[0] / "summary.json")
    assert summary["n"] == 8


def test_review_sample_command(pipeline_workspace):
    tmp_path, config_path = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    assert run_command(["--config", str(config_path), "review-sample", "--n", "4"]) == EXIT_OK
    rows = read_jsonl(base / "reports" / "review_sample.jsonl")
    assert len(rows) == 4
    assert all(row["question"] and row["knowledge"] for row in rows)


def test_audit_prompts_flag_writes_prompt_log(pipeline_workspace):
    tmp_path, config_path = pipeline_workspace
    base = tmp_path / "workspace" / "spanish" / "en"
    assert run_command(["--config", str(config_path), "evaluate", "--inject", "1", "--audit-prompts"]) == EXIT_OK
    prompt_logs = list((base / "runs").glob("*/prompts.jsonl"))
    assert prompt_logs
    entries = read_jsonl(prompt_logs[0])
    assert all(entry["k_injected"] <= 1 for entry in entries)
    assert all("prompt" in entry for entry in entries)


def test_per_dimension_target_caps_kb(tmp_path):
    config_path = write_config(tmp_path, stages={"top_k": 5, "per_dimension_target": 2})
    assert run_command(["--config", str(config_path), "build-kb"]) == EXIT_OK
    base = tmp_path / "workspace" / "spanish" / "en"
    from collections import Counter

    instances = read_jsonl(base / "kb" / "instances.jsonl")
    verified_per_dim = Counter(
        (row["dimension_id"], row["language"]) for row in instances if row["qc_status"] == "VERIFIED"
    )
    assert verified_per_dim
    assert max(verified_per_dim.values()) <= 2


def test_per_dimension_target_validated(tmp_path):
    config_path = write_config(tmp_path, stages={"top_k": 5, "per_dimension_target": 0})
    config, violations = validate_config(config_path)
    assert config is None
    assert any("per_dimension_target" in v for v in violations)
