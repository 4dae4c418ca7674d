"""Known/unknown knowledge partitioning via closed-book probing.

A question counts as known knowledge for a model iff the model answers it
correctly with no context: exact match against any gold answer for
free-form records, option-index match for multiple choice.  The partition
is model-specific and the probe stores every closed-book answer so the
irrelevant-context consistency check can reuse them.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .corpus import Dataset, QARecord, TaskKind
from .metrics import exact_match
from .prompts import PromptTemplate
from .providers.base import GenerateQuery, Provider, ScoreQuery


@dataclass(frozen=True)
class KnowledgePartition:
    """Per-model assignment of every record to known or unknown knowledge."""

    model_id: str
    known_ids: frozenset[str]
    unknown_ids: frozenset[str]
    closed_book_answers: dict[str, str | int]
    knowledge_amount: float
    dataset_fingerprint: str | None = None
    template_fingerprint: str | None = None

    def split_of(self, record_id: str) -> str:
        return "known" if record_id in self.known_ids else "unknown"


def argmax_lowest_index(values) -> int:
    """Index of the maximum, ties resolved to the lowest index."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def closed_book_answer(
    record: QARecord, model: Provider, template: PromptTemplate
) -> str | int:
    """One probe: the model's answer with an empty context segment."""
    prompt = template.render_closed_book(record.question)
    if record.task_kind == TaskKind.MULTIPLE_CHOICE:
        result = model.score(ScoreQuery(prompt=prompt, options=record.options))
        return argmax_lowest_index(result.option_probs)
    result = model.generate(GenerateQuery(prompt=prompt))
    return result.answer_text


def is_known(record: QARecord, answer: str | int) -> bool:
    if record.task_kind == TaskKind.MULTIPLE_CHOICE:
        return answer == record.correct_option_index
    return exact_match(str(answer), record.gold_answers)


def probe(
    dataset: Dataset,
    model: Provider,
    template: PromptTemplate | None = None,
    parallelism: int = 1,
    dataset_fp: str | None = None,
) -> KnowledgePartition:
    """Probe every record closed-book and assemble the partition.

    Probes may run in parallel; the partition is assembled after all of
    them complete, so the result is independent of completion order.  Any
    provider failure propagates — callers must not persist a partial
    partition.
    """
    template = template or PromptTemplate()
    records = list(dataset)
    if parallelism > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            answers = list(
                pool.map(lambda r: closed_book_answer(r, model, template), records)
            )
    else:
        answers = [closed_book_answer(r, model, template) for r in records]

    known: set[str] = set()
    unknown: set[str] = set()
    closed_book: dict[str, str | int] = {}
    for record, answer in zip(records, answers):
        closed_book[record.id] = answer
        (known if is_known(record, answer) else unknown).add(record.id)
    total = len(records)
    amount = round(len(known) / total, 3) if total else 0.0
    return KnowledgePartition(
        model_id=model.model_id,
        known_ids=frozenset(known),
        unknown_ids=frozenset(unknown),
        closed_book_answers=closed_book,
        knowledge_amount=amount,
        dataset_fingerprint=dataset_fp,
        template_fingerprint=template.fingerprint(),
    )


# --- persistence ---------------------------------------------------------------


def partition_to_json(partition: KnowledgePartition) -> str:
    obj = {
        "model_id": partition.model_id,
        "known_ids": sorted(partition.known_ids),
        "unknown_ids": sorted(partition.unknown_ids),
        "closed_book_answers": {
            k: partition.closed_book_answers[k]
            for k in sorted(partition.closed_book_answers)
        },
        "knowledge_amount": partition.knowledge_amount,
        "dataset_fingerprint": partition.dataset_fingerprint,
        "template_fingerprint": partition.template_fingerprint,
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def save_partition(partition: KnowledgePartition, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(partition_to_json(partition), encoding="utf-8")
    tmp.replace(path)


def load_partition(path: str | Path) -> KnowledgePartition:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return KnowledgePartition(
        model_id=obj["model_id"],
        known_ids=frozenset(obj["known_ids"]),
        unknown_ids=frozenset(obj["unknown_ids"]),
        closed_book_answers=dict(obj["closed_book_answers"]),
        knowledge_amount=obj["knowledge_amount"],
        dataset_fingerprint=obj.get("dataset_fingerprint"),
        template_fingerprint=obj.get("template_fingerprint"),
    )
