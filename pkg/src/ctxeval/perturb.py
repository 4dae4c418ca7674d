"""Context perturbation generators.

Three families of derived contexts, each carrying provenance back to its
source record:

* conflicting — the gold answer span is masked, a fill-mask model proposes
  replacements, and each surviving candidate yields a context that
  contradicts the original answer;
* irrelevant — the context is swapped for another record's context, drawn
  uniformly at random (seeded) from the rest of the dataset;
* distracted — a fixed-length word string is appended to the context and
  greedily optimized, position by position, to push the scoring model away
  from the expected answer.

All generators are pure given their seeds; nothing reads global RNG state.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import Dataset, QARecord, TaskKind, find_answer_span
from .prompts import PromptTemplate
from .providers.base import (
    MASK,
    FillMaskQuery,
    Provider,
    ProviderError,
    ScoreQuery,
)


class PerturbError(Exception):
    pass


class NoSurvivingCandidates(PerturbError):
    """Every fill-mask candidate matched the original answer."""


class FillMaskFailure(PerturbError):
    """The fill-mask provider failed while generating conflicting contexts."""


class ScorerFailure(PerturbError):
    """The scoring provider failed during distractor search."""


class EmptyPool(PerturbError):
    """The distractor candidate pool resolved to zero words."""


class InsufficientContexts(PerturbError):
    """Irrelevant-context generation needs at least one other distinct context."""


class VariantKind(str, Enum):
    CONFLICTING = "conflicting"
    IRRELEVANT = "irrelevant"
    DISTRACTED = "distracted"
    CONFLICTING_DISTRACTED = "conflicting_distracted"


class DistractorPlacement(str, Enum):
    APPEND = "append"
    PREPEND = "prepend"


@dataclass(frozen=True)
class PerturbationVariant:
    """A derived context plus the answer an ideal model gives for it.

    ``expected_answer`` is the substituted candidate for conflicting kinds
    and the original gold answer otherwise.  ``replaced_option_index``
    (MC conflicting only) is the slot whose wrong option was swapped for
    the candidate; ``distractor_text`` is set on distracted kinds and the
    context ends (or starts, under prepend placement) with it.
    """

    source_id: str
    kind: VariantKind
    variant_index: int
    context: str
    expected_answer: str
    replaced_option_index: int | None = None
    distractor_text: str | None = None
    seed: int | None = None

    def options_for(self, record: QARecord) -> tuple[str, ...] | None:
        """The MC option list in effect for this variant."""
        if record.options is None:
            return None
        if self.replaced_option_index is None:
            return record.options
        options = list(record.options)
        options[self.replaced_option_index] = self.expected_answer
        return tuple(options)

    def target_option_index(self, record: QARecord) -> int | None:
        """The option index an ideal model selects for this variant."""
        if record.options is None:
            return None
        if self.replaced_option_index is not None:
            return self.replaced_option_index
        return record.correct_option_index


def normalize_candidate(text: str) -> str:
    """Candidate/answer equality key: lowercase with collapsed whitespace."""
    return " ".join(text.lower().split())


# --- conflicting contexts -----------------------------------------------------


def make_conflicting(
    record: QARecord,
    fill: Provider,
    k: int = 10,
    strict_match: bool = False,
) -> list[PerturbationVariant]:
    """Substitute the answer span with fill-mask candidates.

    The whole canonical answer span is replaced by a single mask sentinel,
    the provider is asked for ``k`` candidates, candidates matching the
    original answer are dropped (exact string match when ``strict_match``,
    case/whitespace-insensitive otherwise), and duplicates among the
    survivors are removed.  Each survivor becomes one variant whose context
    differs from the source only inside the span.  For MC records the
    original correct option is kept and the lowest-indexed wrong option is
    replaced by the candidate.
    """
    span = find_answer_span(record.context, record.canonical_answer)
    if span is None:
        raise ValueError(
            f"record {record.id!r}: canonical answer does not occur verbatim; "
            "run filter_verbatim first"
        )
    start, end = span
    masked = record.context[:start] + MASK + record.context[end:]
    try:
        candidates = fill.fill_mask(FillMaskQuery(masked_text=masked, top_k=k))
    except ProviderError as exc:
        raise FillMaskFailure(f"fill_mask failed for record {record.id!r}: {exc}") from exc

    key: Callable[[str], str] = (lambda t: t) if strict_match else normalize_candidate
    original = key(record.canonical_answer)
    survivors: list[str] = []
    seen: set[str] = set()
    for cand in candidates:
        text = cand.text
        if not text or text == MASK:
            continue
        k_text = key(text)
        if k_text == original or k_text in seen:
            continue
        seen.add(k_text)
        survivors.append(text)
    if not survivors:
        raise NoSurvivingCandidates(
            f"record {record.id!r}: all {len(candidates)} candidates matched the answer"
        )

    replaced_index: int | None = None
    if record.task_kind == TaskKind.MULTIPLE_CHOICE:
        replaced_index = min(
            i for i in range(len(record.options)) if i != record.correct_option_index
        )

    variants = []
    for i, text in enumerate(survivors):
        variants.append(
            PerturbationVariant(
                source_id=record.id,
                kind=VariantKind.CONFLICTING,
                variant_index=i,
                context=record.context[:start] + text + record.context[end:],
                expected_answer=text,
                replaced_option_index=replaced_index,
            )
        )
    return variants


# --- irrelevant contexts ------------------------------------------------------


def make_irrelevant(
    record: QARecord,
    dataset: Dataset,
    n: int = 5,
    seed: int = 0,
) -> list[PerturbationVariant]:
    """Swap the context for other records' contexts, ``n`` times.

    Draws uniformly from the distinct contexts of the dataset that differ
    from this record's, without replacement while enough exist, with
    replacement otherwise.  The RNG is derived from (seed, record id), so
    results do not depend on processing order.
    """
    others: list[str] = []
    seen = {record.context}
    for other in dataset:
        if other.context not in seen:
            seen.add(other.context)
            others.append(other.context)
    if not others:
        raise InsufficientContexts(
            f"record {record.id!r}: no other distinct context in dataset"
        )
    rng = random.Random(f"{seed}:{record.id}:irrelevant")
    if len(others) >= n:
        picks = rng.sample(others, n)
    else:
        picks = [rng.choice(others) for _ in range(n)]
    return [
        PerturbationVariant(
            source_id=record.id,
            kind=VariantKind.IRRELEVANT,
            variant_index=i,
            context=ctx,
            expected_answer=record.canonical_answer,
            seed=seed,
        )
        for i, ctx in enumerate(picks)
    ]


# --- distractor search --------------------------------------------------------


@dataclass(frozen=True)
class DistractorConfig:
    """Parameters of the greedy distractor search.

    ``pool_common_words`` is the base candidate pool (order defines the
    deterministic tie-break); the words of the record's question are
    appended when ``include_question_words`` is set.
    """

    pool_common_words: tuple[str, ...]
    length_d: int = 10
    max_epochs: int = 3
    include_question_words: bool = True
    seed: int = 0
    placement: DistractorPlacement = DistractorPlacement.APPEND

    def __post_init__(self):
        if self.length_d < 1:
            raise ValueError("length_d must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if not self.pool_common_words:
            raise EmptyPool("pool_common_words must be non-empty")


def question_words(question: str) -> list[str]:
    return re.findall(r"\w+", question.lower())


def _build_pool(cfg: DistractorConfig, record: QARecord) -> list[str]:
    pool: list[str] = []
    seen: set[str] = set()
    words: Iterable[str] = cfg.pool_common_words
    if cfg.include_question_words:
        words = list(words) + question_words(record.question)
    for word in words:
        if word and word not in seen:
            seen.add(word)
            pool.append(word)
    if not pool:
        raise EmptyPool("candidate pool is empty")
    return pool


def attach_distractor(
    context: str, words: Sequence[str], placement: DistractorPlacement
) -> str:
    text = " ".join(words)
    if placement == DistractorPlacement.PREPEND:
        return f"{text} {context}"
    return f"{context} {text}"


class _Objective:
    """Higher-is-worse-for-the-model objective over distractor word tuples.

    Free-form: perplexity of the expected answer given the full prompt.
    MC: negated probability of the expected answer's option, so that
    maximizing the objective minimizes the model's probability of being
    right.
    """

    def __init__(
        self,
        scorer: Provider,
        template: PromptTemplate,
        question: str,
        base_context: str,
        placement: DistractorPlacement,
        answer: str,
        options: tuple[str, ...] | None,
        target_index: int | None,
    ):
        self.scorer = scorer
        self.template = template
        self.question = question
        self.base_context = base_context
        self.placement = placement
        self.answer = answer
        self.options = options
        self.target_index = target_index
        self.calls = 0

    def _query(self, words: Sequence[str]) -> ScoreQuery:
        context = attach_distractor(self.base_context, words, self.placement)
        prompt = self.template.render(self.question, context)
        if self.options is not None:
            return ScoreQuery(prompt=prompt, options=self.options)
        return ScoreQuery(prompt=prompt, continuation=self.answer)

    def _value(self, result) -> float:
        if self.options is not None:
            return -result.option_probs[self.target_index]
        return result.perplexity

    def batch(self, word_tuples: Sequence[Sequence[str]]) -> list[float]:
        queries = [self._query(words) for words in word_tuples]
        self.calls += len(queries)
        try:
            results = self.scorer.score_batch(queries)
        except ProviderError as exc:
            raise ScorerFailure(f"scorer failed during distractor search: {exc}") from exc
        return [self._value(r) for r in results]


@dataclass(frozen=True)
class SearchOutcome:
    """Result of one greedy search: the words, the objective trajectory
    (initial value plus one entry per accepted swap), and the number of
    objective evaluations spent."""

    words: tuple[str, ...]
    objective: float
    history: tuple[float, ...]
    evaluations: int


def greedy_search(
    score_batch: Callable[[Sequence[Sequence[str]]], Sequence[float]],
    pool: Sequence[str],
    length_d: int,
    max_epochs: int,
    rng: random.Random,
) -> SearchOutcome:
    """Greedy coordinate ascent over word tuples.

    Starts from ``length_d`` words sampled from the pool, then repeatedly
    sweeps positions in order: every pool word is evaluated in each slot
    and a swap is accepted only when it strictly improves the objective,
    so the trajectory is strictly increasing after its first entry.  A
    sweep with no accepted swap ends the search early.  Evaluations are
    bounded by ``1 + max_epochs * length_d * (len(pool) - 1)``.
    """
    words = [rng.choice(pool) for _ in range(length_d)]
    evaluations = 1
    best = float(score_batch([list(words)])[0])
    history = [best]
    for _ in range(max_epochs):
        changed = False
        for pos in range(length_d):
            trials = []
            candidates = []
            for word in pool:
                if word == words[pos]:
                    continue
                trial = list(words)
                trial[pos] = word
                trials.append(trial)
                candidates.append(word)
            if not trials:
                continue
            values = [float(v) for v in score_batch(trials)]
            evaluations += len(values)
            best_i = max(range(len(values)), key=lambda i: (values[i], -i))
            if values[best_i] > best:
                words[pos] = candidates[best_i]
                best = values[best_i]
                history.append(best)
                changed = True
        if not changed:
            break
    return SearchOutcome(
        words=tuple(words),
        objective=best,
        history=tuple(history),
        evaluations=evaluations,
    )


def make_distractor(
    record: QARecord,
    scorer: Provider,
    cfg: DistractorConfig,
    template: PromptTemplate | None = None,
    base_variant: PerturbationVariant | None = None,
) -> PerturbationVariant:
    """Search for a worst-case distractor string and attach it to the context.

    Free-form searches maximize the perplexity of the expected answer
    given the full prompt; MC searches minimize the probability of the
    expected answer's option.  Deterministic given (seed, scorer, cfg).

    When ``base_variant`` is a conflicting variant the distractor is
    optimized against that variant's context and expected answer (its
    substituted option for MC); otherwise against the original record.
    """
    template = template or PromptTemplate()
    pool = _build_pool(cfg, record)

    if base_variant is not None:
        base_context = base_variant.context
        answer = base_variant.expected_answer
        options = base_variant.options_for(record)
        target_index = base_variant.target_option_index(record)
        kind = VariantKind.CONFLICTING_DISTRACTED
        variant_index = base_variant.variant_index
        replaced_index = base_variant.replaced_option_index
    else:
        base_context = record.context
        answer = record.canonical_answer
        options = record.options
        target_index = record.correct_option_index
        kind = VariantKind.DISTRACTED
        variant_index = 0
        replaced_index = None

    objective = _Objective(
        scorer, template, record.question, base_context, cfg.placement,
        answer, options, target_index,
    )
    rng = random.Random(f"{cfg.seed}:{record.id}:{kind.value}:{variant_index}")
    outcome = greedy_search(objective.batch, pool, cfg.length_d, cfg.max_epochs, rng)

    words = list(outcome.words)
    return PerturbationVariant(
        source_id=record.id,
        kind=kind,
        variant_index=variant_index,
        context=attach_distractor(base_context, words, cfg.placement),
        expected_answer=answer,
        replaced_option_index=replaced_index,
        distractor_text=" ".join(words),
        seed=cfg.seed,
    )


# --- persistence ---------------------------------------------------------------


_VARIANT_FIELDS = (
    "source_id",
    "kind",
    "variant_index",
    "context",
    "expected_answer",
    "replaced_option_index",
    "distractor_text",
    "seed",
)


def variant_to_json(variant: PerturbationVariant) -> str:
    obj = {name: getattr(variant, name) for name in _VARIANT_FIELDS}
    obj["kind"] = variant.kind.value
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def variant_from_json(line: str) -> PerturbationVariant:
    obj = json.loads(line)
    return PerturbationVariant(
        source_id=obj["source_id"],
        kind=VariantKind(obj["kind"]),
        variant_index=obj["variant_index"],
        context=obj["context"],
        expected_answer=obj["expected_answer"],
        replaced_option_index=obj.get("replaced_option_index"),
        distractor_text=obj.get("distractor_text"),
        seed=obj.get("seed"),
    )


def write_variants(variants: Iterable[PerturbationVariant], path: str | Path) -> None:
    lines = [variant_to_json(v) for v in variants]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_variants(path: str | Path) -> list[PerturbationVariant]:
    text = Path(path).read_text(encoding="utf-8")
    return [variant_from_json(line) for line in text.splitlines() if line.strip()]
