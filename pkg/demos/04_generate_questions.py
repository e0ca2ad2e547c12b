# Retrieval-augmented question generation: four content types (factual,
# conceptual, misleading, multi-hop) in four formats, each item QC-checked for
# consistency among question, answer, and source knowledge.

import importlib.util
from pathlib import Path

from culturebench.providers import MockChatProvider
from culturebench.question_gen import ContentType, GenerationPlan, build_dataset
from culturebench.schema import load_canonical_schema

spec = importlib.util.spec_from_file_location("kb_demo", Path(__file__).parent / "02_build_knowledge_base.py")
kb_demo = importlib.util.module_from_spec(spec)
spec.loader.exec_module(kb_demo)
verified = kb_demo.verified
schema = load_canonical_schema()

print("\n--- question generation ---")
plan = GenerationPlan(total_items=16, seed=7)
dataset = build_dataset(
    verified, plan, MockChatProvider(), schema, culture="Spanish", language="en", kb_version="demo"
)
print("Generated items:", len(dataset.items))
print("Per content type:", dataset.manifest["counts"])

for content_type in ContentType:
    item = next(i for i in dataset.items if i.content_type == content_type)
    print(f"\n[{content_type.value} / {item.format.value}]")
    print(" ", item.question_text.splitlines()[0])
    for label, text in item.options:
        print(f"    {label}) {text}")
    print("  reference answer:", item.reference_answer)
    print("  linked knowledge:", len(item.knowledge_ids), "instances")
