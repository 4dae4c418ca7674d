"""Deterministic in-process providers for offline runs and tests.

Every mock is a pure function of its configuration (including any seed) and
the query: identical inputs produce byte-identical outputs across runs.
Stable hashing goes through :mod:`hashlib`, never the salted builtin
``hash``.
"""

from __future__ import annotations

import hashlib
import math
import re
from typing import Mapping, Sequence

from ..corpus import Dataset, TaskKind, find_answer_span
from ..prompts import PromptTemplate
from .base import (
    MASK,
    FillMaskCandidate,
    FillMaskQuery,
    GenerateQuery,
    GenerateResult,
    Provider,
    ProtocolError,
    ScoreQuery,
    ScoreResult,
    validate_fill_mask_query,
    validate_generate_query,
    validate_score_query,
)

UNKNOWN_ANSWER = "UNKNOWN"

_FIRST_NAMES = (
    "Avery", "Blake", "Casey", "Devon", "Ellis",
    "Flynn", "Greer", "Harlow", "Indra", "Jules",
)
_LAST_NAMES = (
    "Stone", "Mercer", "Vance", "Holt", "Iqbal",
    "Norwood", "Pryce", "Quill", "Rowan", "Sato",
)


def _stable_unit(*parts: str) -> float:
    """Deterministic pseudo-random float in [0, 1) derived from the parts."""
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _softmax(logits: Sequence[float]) -> tuple[float, ...]:
    peak = max(logits)
    exps = [math.exp(x - peak) for x in logits]
    total = sum(exps)
    return tuple(e / total for e in exps)


def _tokenize(text: str) -> list[str]:
    return re.findall(r"\w+", text.lower())


class TableFillMask(Provider):
    """Fill-mask backed by an explicit ``masked_text -> candidates`` table."""

    def __init__(self, table: Mapping[str, Sequence[str]], model_id: str = "mock-fill-table"):
        self.table = {k: tuple(v) for k, v in table.items()}
        self.model_id = model_id

    def fill_mask(self, query: FillMaskQuery) -> list[FillMaskCandidate]:
        validate_fill_mask_query(query)
        if query.masked_text not in self.table:
            raise ProtocolError(f"no table entry for masked text: {query.masked_text!r}")
        texts = self.table[query.masked_text][: query.top_k]
        return [
            FillMaskCandidate(text=t, score=round(1.0 / (i + 1), 6))
            for i, t in enumerate(texts)
        ]


class SyntheticFillMask(Provider):
    """Fill-mask producing ``top_k`` distinct, human-readable name candidates.

    Candidates are derived from (seed, masked_text) alone, so repeated
    calls agree and different masked texts get different fills.
    """

    def __init__(self, seed: int = 0, model_id: str = "mock-fill"):
        self.seed = seed
        self.model_id = model_id

    def candidates_for(self, masked_text: str, top_k: int) -> list[str]:
        a = int(_stable_unit(str(self.seed), masked_text, "first") * 10)
        b = int(_stable_unit(str(self.seed), masked_text, "last") * 10)
        out = []
        for i in range(top_k):
            first = _FIRST_NAMES[(a + i) % 10]
            last = _LAST_NAMES[(b + 3 * i) % 10]
            name = f"{first} {last}"
            if i >= 10:
                name = f"{name} {i // 10 + 1}"
            out.append(name)
        return out

    def fill_mask(self, query: FillMaskQuery) -> list[FillMaskCandidate]:
        validate_fill_mask_query(query)
        texts = self.candidates_for(query.masked_text, query.top_k)
        return [
            FillMaskCandidate(text=t, score=round(1.0 / (i + 1), 6))
            for i, t in enumerate(texts)
        ]


class HashScorer(Provider):
    """Noisy but fully deterministic scorer.

    Free-form perplexity is ``1 + u`` with ``u`` a stable pseudo-random
    unit derived from (seed, prompt, continuation); MC probabilities are a
    softmax over similarly derived logits.
    """

    def __init__(self, seed: int = 0, model_id: str = "mock-scorer"):
        self.seed = seed
        self.model_id = model_id

    def score(self, query: ScoreQuery) -> ScoreResult:
        validate_score_query(query)
        if query.continuation is not None:
            u = _stable_unit(str(self.seed), query.prompt, query.continuation)
            return ScoreResult(perplexity=1.0 + u)
        logits = [
            2.0 * _stable_unit(str(self.seed), query.prompt, opt, str(i))
            for i, opt in enumerate(query.options)
        ]
        return ScoreResult(option_probs=_softmax(logits))


class SeparableWordScorer(Provider):
    """Scorer whose objective decomposes over prompt words.

    Free-form perplexity is ``base + sum(weights[w])`` over the lowercase
    word tokens of the prompt (words outside ``weights`` contribute the
    default weight).  With weights assigned only to candidate pool words,
    the distractor-search objective becomes exactly separable, which makes
    exhaustive comparison tractable.  In MC mode the correct option is
    taken to be index 0 unless remapped; its probability decreases as the
    planted weight mass grows.
    """

    def __init__(
        self,
        weights: Mapping[str, float],
        base: float = 1.0,
        default_weight: float = 0.0,
        model_id: str = "mock-separable",
    ):
        self.weights = dict(weights)
        self.base = base
        self.default_weight = default_weight
        self.model_id = model_id

    def _mass(self, prompt: str) -> float:
        return sum(
            self.weights.get(tok, self.default_weight) for tok in _tokenize(prompt)
        )

    def score(self, query: ScoreQuery) -> ScoreResult:
        validate_score_query(query)
        mass = self._mass(query.prompt)
        if query.continuation is not None:
            return ScoreResult(perplexity=self.base + mass)
        # Option 0 plays the "correct" role: its logit sinks as mass grows.
        logits = [-mass if i == 0 else 0.0 for i in range(len(query.options))]
        return ScoreResult(option_probs=_softmax(logits))


class EchoModel(Provider):
    """Oracle that answers with whichever known span the context contains.

    For each question it knows a list of admissible spans (the gold answers
    plus any substitution candidates).  Given a prompt it recovers the
    question and context segments through the template, returns the first
    known span occurring verbatim in the context, and falls back to a fixed
    token when none does — e.g. under an empty or irrelevant context.
    """

    def __init__(
        self,
        spans_by_question: Mapping[str, Sequence[str]],
        template: PromptTemplate | None = None,
        model_id: str = "mock-echo",
    ):
        self.spans_by_question = {k: tuple(v) for k, v in spans_by_question.items()}
        self.template = template or PromptTemplate()
        self.model_id = model_id

    def _lookup(self, prompt: str) -> tuple[str, str, tuple[str, ...]]:
        parsed = self.template.parse(prompt)
        if parsed is None:
            raise ProtocolError(f"prompt does not match template: {prompt!r}")
        question, context = parsed
        return question, context, self.spans_by_question.get(question, ())

    def generate(self, query: GenerateQuery) -> GenerateResult:
        validate_generate_query(query)
        _, context, spans = self._lookup(query.prompt)
        for span in spans:
            if find_answer_span(context, span) is not None:
                return GenerateResult(answer_text=span)
        return GenerateResult(answer_text=UNKNOWN_ANSWER)

    def score(self, query: ScoreQuery) -> ScoreResult:
        validate_score_query(query)
        if query.options is None:
            raise ProtocolError("echo model scores MC options only")
        _, context, _ = self._lookup(query.prompt)
        logits = [
            2.0 if find_answer_span(context, opt) is not None else 0.0
            for opt in query.options
        ]
        return ScoreResult(option_probs=_softmax(logits))


class ParametricModel(Provider):
    """Oracle that ignores context and always emits its stored belief.

    Beliefs map question text to an answer string (free-form) or an option
    index (MC).  Questions without a belief fall back to the fixed token.
    """

    def __init__(
        self,
        beliefs: Mapping[str, str | int],
        template: PromptTemplate | None = None,
        model_id: str = "mock-parametric",
    ):
        self.beliefs = dict(beliefs)
        self.template = template or PromptTemplate()
        self.model_id = model_id

    def _belief(self, prompt: str) -> str | int | None:
        parsed = self.template.parse(prompt)
        if parsed is None:
            raise ProtocolError(f"prompt does not match template: {prompt!r}")
        question, _ = parsed
        return self.beliefs.get(question)

    def generate(self, query: GenerateQuery) -> GenerateResult:
        validate_generate_query(query)
        belief = self._belief(query.prompt)
        if belief is None or isinstance(belief, int):
            return GenerateResult(answer_text=UNKNOWN_ANSWER)
        return GenerateResult(answer_text=belief)

    def score(self, query: ScoreQuery) -> ScoreResult:
        validate_score_query(query)
        if query.options is None:
            raise ProtocolError("parametric model scores MC options only")
        belief = self._belief(query.prompt)
        index = belief if isinstance(belief, int) else 0
        logits = [2.0 if i == index else 0.0 for i in range(len(query.options))]
        return ScoreResult(option_probs=_softmax(logits))


def build_echo_model(
    dataset: Dataset,
    template: PromptTemplate,
    fill: SyntheticFillMask | TableFillMask | None = None,
    top_k: int = 10,
    model_id: str = "mock-echo",
) -> EchoModel:
    """Assemble the echo oracle's span lists from a dataset.

    When a deterministic fill-mask mock is supplied, the substitution
    candidates it would produce for each record are admitted alongside the
    gold answers, so the oracle can answer conflicting contexts.
    """
    spans: dict[str, list[str]] = {}
    for rec in dataset:
        known = list(rec.gold_answers)
        if fill is not None:
            span = find_answer_span(rec.context, rec.canonical_answer)
            if span is not None:
                masked = rec.context[: span[0]] + MASK + rec.context[span[1] :]
                try:
                    cands = fill.fill_mask(FillMaskQuery(masked_text=masked, top_k=top_k))
                except ProtocolError:
                    cands = []
                known.extend(c.text for c in cands)
        spans[rec.question] = known
    return EchoModel(spans, template=template, model_id=model_id)


def build_parametric_model(
    dataset: Dataset,
    template: PromptTemplate,
    known_fraction: float,
    seed: int,
    model_id: str = "mock-parametric",
) -> ParametricModel:
    """Plant correct closed-book beliefs for a seeded fraction of records.

    The known subset has exactly ``round(known_fraction * len(dataset))``
    members, chosen by ranking records on a stable per-id hash.  Unknown
    free-form beliefs embed the record id so they never collide with a
    gold answer; unknown MC beliefs point at a wrong option.
    """
    n_known = round(known_fraction * len(dataset))
    ranked = sorted(dataset, key=lambda r: _stable_unit(str(seed), r.id))
    known_ids = {r.id for r in ranked[:n_known]}
    beliefs: dict[str, str | int] = {}
    for rec in dataset:
        if rec.task_kind == TaskKind.MULTIPLE_CHOICE:
            if rec.id in known_ids:
                beliefs[rec.question] = rec.correct_option_index
            else:
                beliefs[rec.question] = (rec.correct_option_index + 1) % len(rec.options)
        else:
            if rec.id in known_ids:
                beliefs[rec.question] = rec.canonical_answer
            else:
                beliefs[rec.question] = f"unsure about {rec.id}"
    return ParametricModel(beliefs, template=template, model_id=model_id)
