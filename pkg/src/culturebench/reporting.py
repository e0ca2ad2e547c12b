"""Plot-ready tables from KB statistics and evaluation runs.

Reports are derived artifacts, always recomputable from run logs. Every
grouped table is recomposition-checked at render time (group accuracies,
weighted by size, must reproduce the overall accuracy exactly), and export
refuses to write a table that fails the check. CSV exports carry display
formatting (3 decimals); JSON exports carry full-precision values and
round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

from .curation import KBStats
from .errors import IntegrityError, PreconditionError
from .evaluation import EvalRun, group_accuracy
from .question_gen import Dataset
from .schema import Level, Schema
from .storage import digest, write_json

RECOMPOSITION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def to_dict(self) -> dict:
        return {"name": self.name, "columns": list(self.columns), "rows": [list(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "Table":
        return cls(name=d["name"], columns=tuple(d["columns"]), rows=tuple(tuple(r) for r in d["rows"]))


@dataclass
class Report:
    kb_stats: KBStats | None = None
    run_summaries: list[dict] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)
    comparisons: list[Table] = field(default_factory=list)
    audit_tables: list[Table] = field(default_factory=list)
    created_at: str = "1970-01-01T00:00:00Z"


def check_recomposition(rows: list[dict], overall: float, total_n: int) -> None:
    """Sum of (n_g/N) * acc_g must reproduce the overall accuracy."""
    if not rows:
        return
    n = sum(row["n"] for row in rows)
    if n != total_n:
        raise IntegrityError(f"group sizes sum to {n}, expected {total_n}")
    recomposed = sum((row["n"] / total_n) * row["accuracy"] for row in rows)
    if abs(recomposed - overall) > RECOMPOSITION_TOLERANCE:
        raise IntegrityError(f"recomposition {recomposed!r} deviates from overall {overall!r}")


def _category_columns(schema: Schema) -> list[tuple[str, str]]:
    """(node_id, abbreviation) for every category, in schema file order."""
    out = []
    for node in schema.nodes:
        if node.level == Level.CATEGORY:
            abbrev = schema.display_abbreviations.get(node.node_id)
            if not abbrev:
                abbrev = "".join(w[0].upper() for w in node.name.split() if w[0].isalpha())
            out.append((node.node_id, abbrev))
    return out


def render_main_table(runs: list[tuple[EvalRun, Dataset]], schema: Schema) -> Table:
    """One row per (model, language): overall accuracy plus the category columns.

    All runs must share a dataset manifest; grouped values are
    recomposition-checked against each run's overall accuracy.
    """
    if not runs:
        raise PreconditionError("render_main_table needs at least one run")
    dataset_ids = {dataset.manifest.get("dataset_id") for _, dataset in runs}
    if len(dataset_ids) > 1:
        raise IntegrityError(f"runs mix dataset manifests: {sorted(str(d) for d in dataset_ids)}")
    categories = _category_columns(schema)
    columns = ("Model", "Lang", "Acc") + tuple(abbrev for _, abbrev in categories)
    rows = []
    for run, dataset in runs:
        overall = run.accuracy
        group_rows = group_accuracy(list(run.records), dataset, schema, "category")
        check_recomposition(group_rows, overall, run.n)
        by_id = {row["group_id"]: row["accuracy"] for row in group_rows}
        label = run.config.model_id
        if run.config.injection_count:
            label = f"{label} (k={run.config.injection_count})"
        rows.append(
            (label, dataset.manifest.get("language", ""), overall)
            + tuple(by_id.get(node_id) for node_id, _ in categories)
        )
    return Table(name="main_results", columns=columns, rows=tuple(rows))


def render_injection_curve(runs: list[EvalRun]) -> Table:
    """Accuracy versus injected-knowledge count, one row per k."""
    if not runs:
        raise PreconditionError("render_injection_curve needs at least one run")
    dataset_refs = {run.config.dataset_ref for run in runs}
    if len(dataset_refs) > 1:
        raise IntegrityError(f"sweep runs mix datasets: {sorted(dataset_refs)}")
    ks = [run.config.injection_count for run in runs]
    if len(set(ks)) != len(ks):
        raise IntegrityError(f"duplicate injection counts in sweep: {sorted(ks)}")
    ordered = sorted(runs, key=lambda r: r.config.injection_count)
    rows = tuple((run.config.injection_count, run.n, run.accuracy) for run in ordered)
    return Table(name="injection_curve", columns=("k", "n", "accuracy"), rows=rows)


def render_group_table(run: EvalRun, dataset: Dataset, schema: Schema, by: str) -> Table:
    group_rows = group_accuracy(list(run.records), dataset, schema, by)
    check_recomposition(group_rows, run.accuracy, run.n)
    rows = tuple((row["group"], row["n"], row["accuracy"]) for row in group_rows)
    return Table(name=f"accuracy_by_{by}", columns=(by, "n", "accuracy"), rows=rows)


def render_comparison(
    run_a: EvalRun, run_b: EvalRun, dataset: Dataset, schema: Schema, by: str = "category"
) -> Table:
    """Per-group accuracy delta (b minus a) between two runs over one dataset."""
    rows_a = {r["group_id"]: r for r in group_accuracy(list(run_a.records), dataset, schema, by)}
    rows_b = {r["group_id"]: r for r in group_accuracy(list(run_b.records), dataset, schema, by)}
    rows = []
    for group_id in sorted(set(rows_a) | set(rows_b)):
        a = rows_a.get(group_id)
        b = rows_b.get(group_id)
        name = (a or b)["group"]
        acc_a = a["accuracy"] if a else None
        acc_b = b["accuracy"] if b else None
        delta = (acc_b - acc_a) if (a and b) else None
        rows.append((name, acc_a, acc_b, delta))
    return Table(
        name=f"comparison_by_{by}",
        columns=(by, run_a.config.model_id, run_b.config.model_id, "delta"),
        rows=tuple(rows),
    )


def kb_stats_tables(stats: KBStats) -> list[Table]:
    dim_rows = tuple(sorted(stats.per_dimension_counts.items()))
    source_rows = tuple(sorted(stats.per_source_counts.items()))
    return [
        Table(name="kb_dimensions", columns=("dimension_id", "count"), rows=dim_rows),
        Table(name="kb_sources", columns=("source_category", "count"), rows=source_rows),
    ]


def make_report(
    runs: list[tuple[EvalRun, Dataset]],
    schema: Schema,
    kb_stats: KBStats | None = None,
    sweep_runs: list[EvalRun] | None = None,
    group_keys: tuple[str, ...] = ("layer", "category", "content_type", "format"),
    created_at: str = "1970-01-01T00:00:00Z",
) -> Report:
    report = Report(kb_stats=kb_stats, created_at=created_at)
    if kb_stats is not None:
        report.tables.extend(kb_stats_tables(kb_stats))
    if runs:
        report.tables.append(render_main_table(runs, schema))
        for run, dataset in runs:
            summary = {
                "config_digest": digest(str(sorted(run.config.to_dict().items()))),
                "model_id": run.config.model_id,
                "language": dataset.manifest.get("language", ""),
                "n": run.n,
                "accuracy": run.accuracy,
            }
            report.run_summaries.append(summary)
            run_tag = run.config.model_id
            if run.config.injection_count:
                run_tag = f"{run_tag}_k{run.config.injection_count}"
            run_tag = re.sub(r"[^\w.-]+", "_", run_tag)
            for key in group_keys:
                table = render_group_table(run, dataset, schema, key)
                report.tables.append(
                    Table(name=f"{run_tag}.{table.name}", columns=table.columns, rows=table.rows)
                )
    if sweep_runs:
        report.tables.append(render_injection_curve(sweep_runs))
    return report


# ---------------------------------------------------------------------------
# Export


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def export(report: Report, out_dir: str | Path, formats: tuple[str, ...] = ("csv", "json"), audit: bool = False) -> list[Path]:
    """Write every table in the requested formats; returns the written paths.

    Re-exporting an unchanged report is byte-identical. Audit tables (raw
    prompts) are only written when ``audit`` is set.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = list(report.tables) + list(report.comparisons)
    if audit:
        tables += list(report.audit_tables)
    written: list[Path] = []
    for table in tables:
        if "csv" in formats:
            path = out_dir / f"{table.name}.csv"
            path.write_text(table_to_csv(table), encoding="utf-8", newline="\n")
            written.append(path)
        if "json" in formats:
            path = out_dir / f"{table.name}.json"
            write_json(path, table.to_dict())
            written.append(path)
    summary = {
        "created_at": report.created_at,
        "run_summaries": report.run_summaries,
        "kb_stats": report.kb_stats.to_dict() if report.kb_stats else None,
        "tables": sorted(t.name for t in tables),
    }
    summary_path = out_dir / "report.json"
    write_json(summary_path, summary)
    written.append(summary_path)
    return written


def import_table(path: str | Path) -> Table:
    import json

    return Table.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
