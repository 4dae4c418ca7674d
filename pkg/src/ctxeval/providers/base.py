"""Model-access contract: query/result types, errors, and the provider surface.

A provider exposes up to three capabilities — ``fill_mask``, ``score`` and
``generate`` — mirroring the JSON-over-HTTP wire protocol.  Batch variants
take lists and must preserve input order.  Implementations must be
deterministic functions of their configuration and the query.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

MASK = "[MASK]"

PROB_SUM_TOLERANCE = 1e-6


class ProviderError(Exception):
    """Base class for provider failures."""


class ProtocolError(ProviderError):
    """Transport or decode failure, or a malformed request/response."""


class BadMask(ProviderError):
    """The masked text did not contain exactly one mask sentinel."""


class ModeMismatch(ProviderError):
    """A score query mixed or omitted the free-form/MC modes."""


class ProviderUnavailable(ProviderError):
    """The provider stayed unreachable after the configured retries."""


@dataclass(frozen=True)
class FillMaskQuery:
    masked_text: str
    top_k: int = 10


@dataclass(frozen=True)
class FillMaskCandidate:
    text: str
    score: float


@dataclass(frozen=True)
class ScoreQuery:
    """Free-form mode scores ``continuation`` given ``prompt``; MC mode
    scores each of ``options``.  Exactly one of the two must be set."""

    prompt: str
    continuation: str | None = None
    options: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ScoreResult:
    perplexity: float | None = None
    option_probs: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GenerateQuery:
    prompt: str
    max_answer_tokens: int = 32


@dataclass(frozen=True)
class GenerateResult:
    answer_text: str


def validate_fill_mask_query(query: FillMaskQuery) -> None:
    count = query.masked_text.count(MASK)
    if count != 1:
        raise BadMask(f"expected exactly one {MASK} sentinel, found {count}")
    if query.top_k < 1:
        raise ProtocolError(f"top_k must be positive, got {query.top_k}")


def validate_score_query(query: ScoreQuery) -> None:
    has_continuation = query.continuation is not None
    has_options = query.options is not None
    if has_continuation == has_options:
        raise ModeMismatch(
            "score query must set exactly one of continuation / options"
        )
    if has_options and not query.options:
        raise ModeMismatch("options list must be non-empty")


def validate_generate_query(query: GenerateQuery) -> None:
    if query.max_answer_tokens < 1:
        raise ProtocolError(
            f"max_answer_tokens must be positive, got {query.max_answer_tokens}"
        )


class Provider:
    """Base provider; subclasses override the capabilities they support.

    ``model_id`` labels responses for caching and report metadata.
    Unsupported operations raise :class:`ProtocolError`.
    """

    model_id: str = "unknown"

    def capabilities(self) -> frozenset[str]:
        supported = set()
        for name in ("fill_mask", "score", "generate"):
            if getattr(type(self), name) is not getattr(Provider, name):
                supported.add(name)
        return frozenset(supported)

    def fill_mask(self, query: FillMaskQuery) -> list[FillMaskCandidate]:
        raise ProtocolError(f"{self.model_id}: fill_mask not supported")

    def score(self, query: ScoreQuery) -> ScoreResult:
        raise ProtocolError(f"{self.model_id}: score not supported")

    def generate(self, query: GenerateQuery) -> GenerateResult:
        raise ProtocolError(f"{self.model_id}: generate not supported")

    # Batch variants preserve input order; the default implementations
    # delegate item by item.
    def fill_mask_batch(
        self, queries: Sequence[FillMaskQuery]
    ) -> list[list[FillMaskCandidate]]:
        return [self.fill_mask(q) for q in queries]

    def score_batch(self, queries: Sequence[ScoreQuery]) -> list[ScoreResult]:
        return [self.score(q) for q in queries]

    def generate_batch(self, queries: Sequence[GenerateQuery]) -> list[GenerateResult]:
        return [self.generate(q) for q in queries]
