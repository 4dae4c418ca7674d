"""Behavioral conformance suite for providers.

Any implementation of the provider contract — in-process mock, HTTP client
in front of a remote service, or a real model server — must pass exactly
the same checks: response shape, candidate ordering, probability
normalization, determinism, batch order preservation, and typed errors on
malformed queries.  Checks are content-agnostic: they never assert what a
model says, only how it says it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .base import (
    MASK,
    BadMask,
    FillMaskQuery,
    GenerateQuery,
    ModeMismatch,
    PROB_SUM_TOLERANCE,
    Provider,
    ScoreQuery,
)


@dataclass(frozen=True)
class ContractProbe:
    """Sample inputs the provider under test must be able to answer."""

    masked_text: str = f"{MASK} is the capital of France."
    alt_masked_text: str = f"The largest planet is {MASK}."
    prompt: str = "question: What is the capital of France?. context: Paris is the capital of France.."
    continuation: str = "Paris"
    options: tuple[str, ...] = ("Paris", "Berlin", "Madrid", "Rome")
    top_k: int = 5
    max_answer_tokens: int = 8


def check_fill_mask(provider: Provider, probe: ContractProbe) -> None:
    query = FillMaskQuery(masked_text=probe.masked_text, top_k=probe.top_k)
    candidates = provider.fill_mask(query)
    assert len(candidates) <= probe.top_k, "more candidates than top_k"
    assert candidates, "provider returned no candidates"
    scores = [c.score for c in candidates]
    assert scores == sorted(scores, reverse=True), "scores must be non-increasing"
    for cand in candidates:
        assert cand.text, "candidate text must be non-empty"
        assert cand.text != MASK, "candidate must not be the mask sentinel"
    again = provider.fill_mask(query)
    assert again == candidates, "fill_mask must be deterministic"


def check_fill_mask_errors(provider: Provider, probe: ContractProbe) -> None:
    no_mask = probe.masked_text.replace(MASK, "it")
    try:
        provider.fill_mask(FillMaskQuery(masked_text=no_mask, top_k=probe.top_k))
    except BadMask:
        pass
    else:
        raise AssertionError("zero sentinels must raise BadMask")
    try:
        provider.fill_mask(
            FillMaskQuery(masked_text=f"{MASK} and {probe.masked_text}", top_k=probe.top_k)
        )
    except BadMask:
        pass
    else:
        raise AssertionError("two sentinels must raise BadMask")


def check_score_freeform(provider: Provider, probe: ContractProbe) -> None:
    query = ScoreQuery(prompt=probe.prompt, continuation=probe.continuation)
    result = provider.score(query)
    assert result.perplexity is not None, "free-form mode must return a perplexity"
    assert result.option_probs is None, "free-form mode must not return option_probs"
    assert result.perplexity >= 1.0, f"perplexity must be >= 1, got {result.perplexity}"
    assert provider.score(query) == result, "score must be deterministic"


def check_score_mc(provider: Provider, probe: ContractProbe) -> None:
    query = ScoreQuery(prompt=probe.prompt, options=probe.options)
    result = provider.score(query)
    assert result.option_probs is not None, "MC mode must return option_probs"
    assert result.perplexity is None, "MC mode must not return a perplexity"
    assert len(result.option_probs) == len(probe.options), "one probability per option"
    assert all(0.0 <= p <= 1.0 for p in result.option_probs), "probabilities in [0, 1]"
    total = sum(result.option_probs)
    assert abs(total - 1.0) <= PROB_SUM_TOLERANCE, (
        f"probabilities must sum to 1 +/- {PROB_SUM_TOLERANCE}, got {total}"
    )
    assert provider.score(query) == result, "score must be deterministic"


def check_score_mode_errors(provider: Provider, probe: ContractProbe) -> None:
    for bad in (
        ScoreQuery(prompt=probe.prompt),
        ScoreQuery(
            prompt=probe.prompt, continuation=probe.continuation, options=probe.options
        ),
    ):
        try:
            provider.score(bad)
        except ModeMismatch:
            pass
        else:
            raise AssertionError("ambiguous score mode must raise ModeMismatch")


def check_generate(provider: Provider, probe: ContractProbe) -> None:
    query = GenerateQuery(prompt=probe.prompt, max_answer_tokens=probe.max_answer_tokens)
    result = provider.generate(query)
    assert isinstance(result.answer_text, str), "answer_text must be a string"
    assert provider.generate(query) == result, "generate must be deterministic"


def check_batch_order(
    provider: Provider, probe: ContractProbe, capabilities: frozenset[str] | None = None
) -> None:
    capabilities = capabilities if capabilities is not None else provider.capabilities()
    if "fill_mask" in capabilities:
        queries = [
            FillMaskQuery(masked_text=probe.masked_text, top_k=probe.top_k),
            FillMaskQuery(masked_text=probe.alt_masked_text, top_k=probe.top_k),
        ]
        batched = provider.fill_mask_batch(queries)
        assert batched == [provider.fill_mask(q) for q in queries], (
            "fill_mask_batch must preserve input order"
        )
    if "score" in capabilities:
        queries = [
            ScoreQuery(prompt=probe.prompt, options=probe.options),
            ScoreQuery(prompt=probe.prompt, options=tuple(reversed(probe.options))),
        ]
        batched = provider.score_batch(queries)
        assert batched == [provider.score(q) for q in queries], (
            "score_batch must preserve input order"
        )
    if "generate" in capabilities:
        queries = [
            GenerateQuery(prompt=probe.prompt, max_answer_tokens=probe.max_answer_tokens),
            GenerateQuery(
                prompt=probe.prompt + " Again.",
                max_answer_tokens=probe.max_answer_tokens,
            ),
        ]
        batched = provider.generate_batch(queries)
        assert batched == [provider.generate(q) for q in queries], (
            "generate_batch must preserve input order"
        )


_CHECKS_BY_CAPABILITY = {
    "fill_mask": (check_fill_mask, check_fill_mask_errors),
    "score": (check_score_freeform, check_score_mc, check_score_mode_errors),
    "generate": (check_generate,),
}


def run_contract_suite(
    provider: Provider,
    probe: ContractProbe | None = None,
    capabilities: frozenset[str] | None = None,
) -> list[str]:
    """Run every applicable check; raises AssertionError on the first violation.

    Returns the names of the checks that ran, so callers can confirm
    coverage.
    """
    probe = probe or ContractProbe()
    capabilities = capabilities if capabilities is not None else provider.capabilities()
    ran: list[str] = []
    for capability in ("fill_mask", "score", "generate"):
        if capability not in capabilities:
            continue
        for check in _CHECKS_BY_CAPABILITY[capability]:
            check(provider, probe)
            ran.append(check.__name__)
    check_batch_order(provider, probe, capabilities)
    ran.append(check_batch_order.__name__)
    return ran
