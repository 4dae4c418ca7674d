"""Score a model across all six context conditions on both knowledge splits.

The matrix has six rows — original context, original+distractor,
conflicting, conflicting+distractor, no context, irrelevant context — each
split into known/unknown knowledge.  Row targets differ: original and
distractor rows expect the true answer, conflicting rows expect the
substituted answer, the no-context row is definitional (known=1, unknown=0
by construction of the partition), and the irrelevant row expects the true
answer on the known split but answer *consistency* with the model's own
closed-book answer on the unknown split.

Multi-variant rows average per question over variants first, then across
questions; the standard average additionally pools all records
(micro-average), so it always lies between the two split scores.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Dataset, QARecord, TaskKind
from .metrics import exact_match, normalize_answer
from .perturb import PerturbationVariant, VariantKind
from .prompts import PromptTemplate
from .providers.base import GenerateQuery, Provider, ScoreQuery
from .split import KnowledgePartition, argmax_lowest_index

__all__ = [
    "Row",
    "Split",
    "CellScore",
    "DesiderataReport",
    "MissingVariants",
    "ReportFormat",
    "REPORT_COLUMNS",
    "normalize_answer",
    "exact_match",
    "evaluate_cell",
    "run_all",
    "render_report",
    "report_to_json",
    "save_report",
    "load_report",
]


class Row(Enum):
    STANDARD = "St"
    STANDARD_DISTRACTOR = "Dist"
    CONFLICTING = "Conf"
    CONFLICTING_DISTRACTOR = "Conf.Dist"
    NO_CONTEXT = "NoCtx"
    IRRELEVANT = "Irr"


class Split(Enum):
    KNOWN = "KK"
    UNKNOWN = "UK"


ROW_VARIANT_KIND = {
    Row.STANDARD_DISTRACTOR: VariantKind.DISTRACTED,
    Row.CONFLICTING: VariantKind.CONFLICTING,
    Row.CONFLICTING_DISTRACTOR: VariantKind.CONFLICTING_DISTRACTED,
    Row.IRRELEVANT: VariantKind.IRRELEVANT,
}

REPORT_COLUMNS = (
    "K.Am",
    "St.KK",
    "St.UK",
    "St.Avg",
    "Dist.KK",
    "Dist.UK",
    "Conf.KK",
    "Conf.UK",
    "Conf.Dist.KK",
    "Conf.Dist.UK",
    "Irr.KK",
    "Irr.UK",
)

CELL_KEYS = (
    "St.KK", "St.UK",
    "Dist.KK", "Dist.UK",
    "Conf.KK", "Conf.UK",
    "Conf.Dist.KK", "Conf.Dist.UK",
    "NoCtx.KK", "NoCtx.UK",
    "Irr.KK", "Irr.UK",
)


class MissingVariants(Exception):
    def __init__(self, kind: VariantKind):
        super().__init__(
            f"no persisted variants of kind {kind.value!r}; "
            f"generate them first (perturb --kinds ...)"
        )
        self.kind = kind


@dataclass(frozen=True)
class CellScore:
    """One matrix cell: the fraction of correct answers over n scored pairs.

    ``value`` is None (rendered "-") when the cell had nothing to score.
    """

    row: Row
    split: Split
    value: float | None
    n: int

    @property
    def key(self) -> str:
        return f"{self.row.value}.{self.split.value}"


@dataclass
class DesiderataReport:
    model_id: str
    dataset_name: str
    knowledge_amount: float
    cells: dict[str, CellScore]
    standard_avg: CellScore
    metadata: dict = field(default_factory=dict)


# --- querying ----------------------------------------------------------------


def _ask_model(
    model: Provider,
    template: PromptTemplate,
    items: Sequence[tuple[QARecord, str, tuple[str, ...] | None]],
    parallelism: int,
    max_answer_tokens: int,
) -> list[str | int]:
    """One model answer per (record, context, options) item, in input order."""

    def ask(item):
        record, context, options = item
        prompt = template.render(record.question, context)
        if options is not None:
            result = model.score(ScoreQuery(prompt=prompt, options=options))
            return argmax_lowest_index(result.option_probs)
        result = model.generate(
            GenerateQuery(prompt=prompt, max_answer_tokens=max_answer_tokens)
        )
        return result.answer_text

    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(ask, items))
    return [ask(item) for item in items]


def _is_correct(
    row: Row,
    split: Split,
    record: QARecord,
    variant: PerturbationVariant | None,
    answer: str | int,
    partition: KnowledgePartition,
) -> bool:
    mc = record.task_kind == TaskKind.MULTIPLE_CHOICE
    if row in (Row.CONFLICTING, Row.CONFLICTING_DISTRACTOR):
        if mc:
            return answer == variant.target_option_index(record)
        return exact_match(str(answer), [variant.expected_answer])
    if row == Row.IRRELEVANT and split == Split.UNKNOWN:
        closed_book = partition.closed_book_answers[record.id]
        if mc:
            return answer == closed_book
        return exact_match(str(answer), [str(closed_book)])
    if mc:
        return answer == record.correct_option_index
    return exact_match(str(answer), record.gold_answers)


def _macro_average(per_record: Mapping[str, list[bool]], order: Sequence[str]):
    per_question = [
        sum(flags) / len(flags) for rid in order if (flags := per_record.get(rid))
    ]
    if not per_question:
        return None
    return sum(per_question) / len(per_question)


def evaluate_cell(
    row: Row,
    split: Split,
    dataset: Dataset,
    partition: KnowledgePartition,
    model: Provider,
    template: PromptTemplate | None = None,
    variants: Sequence[PerturbationVariant] | None = None,
    parallelism: int = 1,
    max_answer_tokens: int = 32,
) -> CellScore:
    """Score one (row, split) cell.

    ``variants`` must carry the row's pre-generated perturbations for
    variant-backed rows; the standard row evaluates records directly and
    the no-context row is read off the partition.
    """
    template = template or PromptTemplate()
    split_ids = partition.known_ids if split == Split.KNOWN else partition.unknown_ids
    records = [r for r in dataset if r.id in split_ids]

    if row == Row.NO_CONTEXT:
        if not records:
            return CellScore(row, split, None, 0)
        value = 1.0 if split == Split.KNOWN else 0.0
        return CellScore(row, split, value, len(records))

    if row == Row.STANDARD:
        items = [(r, r.context, r.options) for r in records]
        variants_per_item: list[PerturbationVariant | None] = [None] * len(items)
    else:
        kind = ROW_VARIANT_KIND[row]
        if variants is None:
            raise MissingVariants(kind)
        by_record = {r.id: r for r in records}
        ordering = {r.id: i for i, r in enumerate(dataset)}
        selected = sorted(
            (v for v in variants if v.kind == kind and v.source_id in by_record),
            key=lambda v: (ordering[v.source_id], v.variant_index),
        )
        items = [
            (by_record[v.source_id], v.context, v.options_for(by_record[v.source_id]))
            for v in selected
        ]
        variants_per_item = list(selected)

    if not items:
        return CellScore(row, split, None, 0)

    answers = _ask_model(model, template, items, parallelism, max_answer_tokens)
    per_record: dict[str, list[bool]] = {}
    for (record, _, _), variant, answer in zip(items, variants_per_item, answers):
        ok = _is_correct(row, split, record, variant, answer, partition)
        per_record.setdefault(record.id, []).append(ok)
    value = _macro_average(per_record, [r.id for r in dataset])
    return CellScore(row, split, value, len(items))


def run_all(
    dataset: Dataset,
    model: Provider,
    partition: KnowledgePartition,
    template: PromptTemplate | None = None,
    variants_by_kind: Mapping[VariantKind, Sequence[PerturbationVariant] | None] | None = None,
    parallelism: int = 1,
    max_answer_tokens: int = 32,
    skip_rows: frozenset[Row] = frozenset(),
    metadata: dict | None = None,
) -> DesiderataReport:
    """Fill all twelve cells plus the knowledge amount and standard average.

    Rows in ``skip_rows`` (e.g. distractor rows when the model exposes no
    scoring endpoint for the search) are left undefined and listed in the
    report metadata, rendered as "-" with a footnote.  The standard
    average is the micro-average over all records, known and unknown
    pooled, so it equals K.Am*St.KK + (1-K.Am)*St.UK up to rounding.
    """
    template = template or PromptTemplate()
    variants_by_kind = variants_by_kind or {}
    cells: dict[str, CellScore] = {}
    correct_total = 0
    n_total = 0
    incomplete: list[str] = []

    for row in Row:
        kind = ROW_VARIANT_KIND.get(row)
        for split in Split:
            key = f"{row.value}.{split.value}"
            if row in skip_rows:
                cells[key] = CellScore(row, split, None, 0)
                incomplete.append(key)
                continue
            cell = evaluate_cell(
                row,
                split,
                dataset,
                partition,
                model,
                template,
                variants=variants_by_kind.get(kind) if kind else None,
                parallelism=parallelism,
                max_answer_tokens=max_answer_tokens,
            )
            cells[key] = cell
            if row == Row.STANDARD and cell.value is not None:
                correct_total += cell.value * cell.n
                n_total += cell.n

    standard_avg = CellScore(
        Row.STANDARD,
        Split.KNOWN,  # placeholder; the average pools both splits
        (correct_total / n_total) if n_total else None,
        n_total,
    )
    meta = dict(metadata or {})
    meta["created_at"] = _timestamp()
    if incomplete:
        meta["incomplete"] = incomplete
    return DesiderataReport(
        model_id=model.model_id,
        dataset_name=dataset.name,
        knowledge_amount=partition.knowledge_amount,
        cells=cells,
        standard_avg=standard_avg,
        metadata=meta,
    )


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = int(epoch) if epoch else int(time.time())
    return datetime.fromtimestamp(moment, tz=timezone.utc).isoformat()


# --- rendering ----------------------------------------------------------------


class ReportFormat(str, Enum):
    MARKDOWN = "markdown"
    CSV = "csv"
    JSON = "json"


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{value * 100:.1f}"


def _column_values(report: DesiderataReport) -> dict[str, str]:
    values = {"K.Am": _pct(report.knowledge_amount), "St.Avg": _pct(report.standard_avg.value)}
    for key, cell in report.cells.items():
        values[key] = _pct(cell.value)
    return values


def render_report(report: DesiderataReport, format: ReportFormat = ReportFormat.MARKDOWN) -> str:
    """Render the canonical column set; undefined cells become "-"."""
    if format == ReportFormat.JSON:
        return report_to_json(report)
    values = _column_values(report)
    if format == ReportFormat.CSV:
        header = ",".join(REPORT_COLUMNS)
        row = ",".join(values[c] for c in REPORT_COLUMNS)
        return f"{header}\n{row}\n"
    columns = ("Dataset", "Model") + REPORT_COLUMNS
    data = (report.dataset_name, report.model_id) + tuple(
        values[c] for c in REPORT_COLUMNS
    )
    lines = [
        "| " + " | ".join(columns) + " |",
        "|" + "|".join(["---"] * len(columns)) + "|",
        "| " + " | ".join(data) + " |",
    ]
    incomplete = report.metadata.get("incomplete")
    if incomplete:
        lines.append("")
        lines.append(f"Cells not evaluated: {', '.join(incomplete)}")
    return "\n".join(lines) + "\n"


def report_to_json(report: DesiderataReport) -> str:
    obj = {
        "model_id": report.model_id,
        "dataset_name": report.dataset_name,
        "knowledge_amount": report.knowledge_amount,
        "cells": {
            key: {"value": cell.value, "n": cell.n}
            for key, cell in sorted(report.cells.items())
        },
        "standard_avg": {"value": report.standard_avg.value, "n": report.standard_avg.n},
        "columns": {c: v for c, v in _column_values(report).items() if c in REPORT_COLUMNS},
        "metadata": report.metadata,
    }
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def save_report(report: DesiderataReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_to_json(report), encoding="utf-8")


def load_report(path: str | Path) -> DesiderataReport:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    cells = {}
    for key, payload in obj["cells"].items():
        row_label, split_label = key.rsplit(".", 1)
        cells[key] = CellScore(
            Row(row_label), Split(split_label), payload["value"], payload["n"]
        )
    return DesiderataReport(
        model_id=obj["model_id"],
        dataset_name=obj["dataset_name"],
        knowledge_amount=obj["knowledge_amount"],
        cells=cells,
        standard_avg=CellScore(
            Row.STANDARD,
            Split.KNOWN,
            obj["standard_avg"]["value"],
            obj["standard_avg"]["n"],
        ),
        metadata=obj.get("metadata", {}),
    )
