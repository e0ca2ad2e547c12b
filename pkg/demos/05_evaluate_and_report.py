# Evaluation and reporting: grade a mock candidate model with exact matching
# plus judge-based scoring, sweep over injected knowledge counts, and render
# the accuracy tables.

import importlib.util
from pathlib import Path

from culturebench.evaluation import EvalRunConfig, group_accuracy, injection_sweep
from culturebench.providers import MockChatProvider, ScriptedJudge
from culturebench.question_gen import GenerationPlan, build_dataset
from culturebench.reporting import render_injection_curve, render_main_table, table_to_csv
from culturebench.schema import load_canonical_schema

spec = importlib.util.spec_from_file_location("kb_demo", Path(__file__).parent / "02_build_knowledge_base.py")
kb_demo = importlib.util.module_from_spec(spec)
spec.loader.exec_module(kb_demo)
verified = kb_demo.verified
schema = load_canonical_schema()

print("\n--- evaluation ---")
plan = GenerationPlan(total_items=24, seed=7)
dataset = build_dataset(
    verified, plan, MockChatProvider(), schema, culture="Spanish", language="en", kb_version="demo"
)
kb = {inst.kb_id: inst for inst in verified}

# The mock candidate answers from whatever knowledge the prompt carries, so
# accuracy climbs as more gold statements are injected (k = 0..3).
config = EvalRunConfig(model_id="mock:candidate", dataset_ref=dataset.manifest["dataset_id"], judge_model_id="mock:judge")
runs = injection_sweep(dataset, kb, [0, 1, 2, 3], MockChatProvider(), config, judge_chat=ScriptedJudge())

print(table_to_csv(render_injection_curve(runs)))

baseline = runs[0]
print("Overall accuracy at k=0:", round(baseline.accuracy, 3))
print("\nAccuracy by content type:")
for row in group_accuracy(list(baseline.records), dataset, schema, "content_type"):
    print(f"  {row['group']:12s} n={row['n']:3d} acc={row['accuracy']:.3f}")
print("\nAccuracy by layer:")
for row in group_accuracy(list(baseline.records), dataset, schema, "layer"):
    print(f"  {row['group']:35s} n={row['n']:3d} acc={row['accuracy']:.3f}")

print("\nMain results table (category columns from the schema's display metadata):")
print(table_to_csv(render_main_table([(baseline, dataset)], schema)))
