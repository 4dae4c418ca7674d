"""Ingestion and canonical persistence of context-based QA datasets.

Three input layouts are supported: SQuAD-v1-style nested JSON, a generic
JSONL layout (``id``/``question``/``context``/``answers``), and a 4-option
MCQA JSONL layout (``id``/``question``/``context``/``options``/``correct``).
Whatever the source, records are normalised into :class:`QARecord` and
persisted as canonical JSONL: a single header line carrying the schema
version, then one record per line, UTF-8, stable field order.  The canonical
form is a fixed point of parse/serialize.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

SCHEMA_VERSION = 1
MC_OPTION_COUNT = 4


class CorpusError(Exception):
    """Base class for dataset ingestion failures."""


class MalformedInput(CorpusError):
    """Input file does not conform to the declared format.

    ``locator`` pins the failure to a line or record so the offending
    input can be found without re-running under a debugger.
    """

    def __init__(self, message: str, locator: str | None = None):
        self.locator = locator
        super().__init__(f"{message} (at {locator})" if locator else message)


class EmptyDataset(CorpusError):
    """The input parsed cleanly but contained zero questions."""


class OptionCountError(MalformedInput):
    """An MCQA record did not supply exactly four options."""


class IndexOutOfRange(MalformedInput):
    """An MCQA correct-answer index points outside the options list."""


class TaskKind(str, Enum):
    FREE_FORM = "free_form"
    MULTIPLE_CHOICE = "multiple_choice"


@dataclass(frozen=True)
class QARecord:
    """One question with its context, gold answer(s) and optional MC options.

    ``gold_answers`` is non-empty and its first element is the canonical
    answer: the string that gets masked and substituted during perturbation.
    For multiple choice, ``options[correct_option_index]`` equals the
    canonical answer.
    """

    id: str
    question: str
    context: str
    gold_answers: tuple[str, ...]
    options: tuple[str, ...] | None = None
    correct_option_index: int | None = None

    def __post_init__(self):
        if not self.gold_answers:
            raise ValueError(f"record {self.id!r}: gold_answers must be non-empty")
        has_options = self.options is not None
        has_index = self.correct_option_index is not None
        if has_options != has_index:
            raise ValueError(
                f"record {self.id!r}: options and correct_option_index must be "
                "present together"
            )
        if has_options:
            if len(self.options) != MC_OPTION_COUNT:
                raise ValueError(
                    f"record {self.id!r}: expected {MC_OPTION_COUNT} options, "
                    f"got {len(self.options)}"
                )
            if not 0 <= self.correct_option_index < len(self.options):
                raise ValueError(
                    f"record {self.id!r}: correct_option_index "
                    f"{self.correct_option_index} out of range"
                )
            if self.options[self.correct_option_index] != self.gold_answers[0]:
                raise ValueError(
                    f"record {self.id!r}: options[{self.correct_option_index}] "
                    "must equal the canonical gold answer"
                )

    @property
    def task_kind(self) -> TaskKind:
        if self.options is not None:
            return TaskKind.MULTIPLE_CHOICE
        return TaskKind.FREE_FORM

    @property
    def canonical_answer(self) -> str:
        return self.gold_answers[0]


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of same-kind QA records."""

    name: str
    records: tuple[QARecord, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValueError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        kinds = {rec.task_kind for rec in self.records}
        if len(kinds) > 1:
            raise ValueError("all records in a dataset must share one task kind")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def task_kind(self) -> TaskKind:
        if not self.records:
            return TaskKind.FREE_FORM
        return self.records[0].task_kind

    def by_id(self, record_id: str) -> QARecord:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        raise KeyError(record_id)


def find_answer_span(context: str, answer: str) -> Optional[tuple[int, int]]:
    """Locate the first verbatim, word-boundary-anchored occurrence of ``answer``.

    Matching is case-sensitive.  Boundary anchoring rejects matches embedded
    in longer words ("president" inside "presidents"), which would otherwise
    produce nonsense when the span is masked and substituted.  Returns a
    half-open ``(start, end)`` character span, or ``None``.
    """
    if not answer:
        return None
    pattern = re.compile(r"(?<!\w)" + re.escape(answer) + r"(?!\w)")
    match = pattern.search(context)
    if match is None:
        return None
    return match.start(), match.end()


def filter_verbatim(dataset: Dataset) -> tuple[Dataset, list[str]]:
    """Drop records whose canonical answer does not occur verbatim in the context.

    Only records that survive can be masked for conflicting-context
    generation; paraphrased answers are unusable.  Returns the retained
    dataset and the discarded ids (in dataset order) for audit.
    """
    retained: list[QARecord] = []
    discarded: list[str] = []
    for rec in dataset:
        if find_answer_span(rec.context, rec.canonical_answer) is not None:
            retained.append(rec)
        else:
            discarded.append(rec.id)
    return Dataset(name=dataset.name, records=tuple(retained)), discarded


# --- parsing -----------------------------------------------------------------


class SourceFormat(str, Enum):
    SQUAD_V1 = "squad_v1"
    GENERIC_JSONL = "generic_jsonl"
    MCQA_JSONL = "mcqa_jsonl"


def _dedupe(items: Iterable[str]) -> tuple[str, ...]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


def _require(obj: dict, key: str, locator: str):
    if key not in obj:
        raise MalformedInput(f"missing required field {key!r}", locator)
    return obj[key]


def parse_freeform(path: str | Path, format: SourceFormat) -> Dataset:
    """Parse a free-form QA file into a Dataset.

    SQuAD-style article/paragraph nesting is flattened to one record per
    question; every distinct gold answer text for a question is kept, the
    first one becoming canonical.
    """
    path = Path(path)
    if format == SourceFormat.SQUAD_V1:
        records = _parse_squad_v1(path)
    elif format == SourceFormat.GENERIC_JSONL:
        records = _parse_generic_jsonl(path)
    else:
        raise ValueError(f"{format} is not a free-form format")
    if not records:
        raise EmptyDataset(f"{path} contains no questions")
    return Dataset(name=path.stem, records=tuple(records))


def _parse_squad_v1(path: Path) -> list[QARecord]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}", str(path)) from exc
    if not isinstance(payload, dict) or "data" not in payload:
        raise MalformedInput("expected a top-level object with a 'data' list", str(path))
    records: list[QARecord] = []
    for ai, article in enumerate(payload["data"]):
        for pi, para in enumerate(article.get("paragraphs", [])):
            locator = f"data[{ai}].paragraphs[{pi}]"
            context = _require(para, "context", locator)
            for qi, qa in enumerate(para.get("qas", [])):
                locator = f"data[{ai}].paragraphs[{pi}].qas[{qi}]"
                answers = _require(qa, "answers", locator)
                texts = _dedupe(a["text"] for a in answers if a.get("text"))
                if not texts:
                    raise MalformedInput("question has no answer text", locator)
                records.append(
                    QARecord(
                        id=str(_require(qa, "id", locator)),
                        question=_require(qa, "question", locator),
                        context=context,
                        gold_answers=texts,
                    )
                )
    return records


def _iter_jsonl(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInput(str(exc), str(path)) from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"invalid JSON: {exc}", f"{path}:{lineno}") from exc
        if not isinstance(obj, dict):
            raise MalformedInput("each line must be a JSON object", f"{path}:{lineno}")
        yield lineno, obj


def _parse_generic_jsonl(path: Path) -> list[QARecord]:
    records = []
    for lineno, obj in _iter_jsonl(path):
        locator = f"{path}:{lineno}"
        answers = _require(obj, "answers", locator)
        if not isinstance(answers, list) or not answers:
            raise MalformedInput("'answers' must be a non-empty list", locator)
        records.append(
            QARecord(
                id=str(_require(obj, "id", locator)),
                question=_require(obj, "question", locator),
                context=_require(obj, "context", locator),
                gold_answers=_dedupe(str(a) for a in answers),
            )
        )
    return records


def parse_mcqa(path: str | Path, format: SourceFormat = SourceFormat.MCQA_JSONL) -> Dataset:
    """Parse a 4-option MCQA JSONL file into a Dataset.

    The canonical gold answer is ``options[correct]``.  Other option
    arities are rejected rather than padded so that random-guess accuracy
    stays comparable across datasets.
    """
    path = Path(path)
    if format != SourceFormat.MCQA_JSONL:
        raise ValueError(f"{format} is not an MCQA format")
    records = []
    for lineno, obj in _iter_jsonl(path):
        locator = f"{path}:{lineno}"
        options = _require(obj, "options", locator)
        if not isinstance(options, list) or len(options) != MC_OPTION_COUNT:
            raise OptionCountError(
                f"expected exactly {MC_OPTION_COUNT} options, got "
                f"{len(options) if isinstance(options, list) else type(options).__name__}",
                locator,
            )
        correct = _require(obj, "correct", locator)
        if not isinstance(correct, int) or not 0 <= correct < MC_OPTION_COUNT:
            raise IndexOutOfRange(f"correct index {correct!r} out of range", locator)
        options = tuple(str(o) for o in options)
        records.append(
            QARecord(
                id=str(_require(obj, "id", locator)),
                question=_require(obj, "question", locator),
                context=_require(obj, "context", locator),
                gold_answers=(options[correct],),
                options=options,
                correct_option_index=correct,
            )
        )
    if not records:
        raise EmptyDataset(f"{path} contains no questions")
    return Dataset(name=path.stem, records=tuple(records))


# --- canonical JSONL ----------------------------------------------------------


def record_to_json(rec: QARecord) -> str:
    obj: dict = {
        "id": rec.id,
        "question": rec.question,
        "context": rec.context,
        "gold_answers": list(rec.gold_answers),
    }
    if rec.options is not None:
        obj["options"] = list(rec.options)
        obj["correct_option_index"] = rec.correct_option_index
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def dumps_dataset(dataset: Dataset) -> str:
    header = json.dumps(
        {
            "schema_version": dataset.schema_version,
            "name": dataset.name,
            "task_kind": dataset.task_kind.value,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    )
    lines = [header] + [record_to_json(rec) for rec in dataset]
    return "\n".join(lines) + "\n"


def dump_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def loads_dataset(text: str, locator: str = "<string>") -> Dataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedInput("empty canonical dataset", locator)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid header: {exc}", f"{locator}:1") from exc
    if header.get("schema_version") != SCHEMA_VERSION:
        raise MalformedInput(
            f"unsupported schema_version {header.get('schema_version')!r}", f"{locator}:1"
        )
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedInput(f"invalid JSON: {exc}", f"{locator}:{lineno}") from exc
        options = obj.get("options")
        records.append(
            QARecord(
                id=obj["id"],
                question=obj["question"],
                context=obj["context"],
                gold_answers=tuple(obj["gold_answers"]),
                options=tuple(options) if options is not None else None,
                correct_option_index=obj.get("correct_option_index"),
            )
        )
    return Dataset(name=header.get("name", "dataset"), records=tuple(records))


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    return loads_dataset(path.read_text(encoding="utf-8"), locator=str(path))


def dataset_fingerprint(dataset: Dataset) -> str:
    """Content hash of the canonical serialization, used as a cache key part."""
    return hashlib.sha256(dumps_dataset(dataset).encode("utf-8")).hexdigest()
