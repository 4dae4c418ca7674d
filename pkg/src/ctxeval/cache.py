"""Content-addressed cache of model responses.

Every provider response is stored as a JSON file named by the SHA-256 of
(model id, operation, query).  Evaluation reads through the cache, which
makes re-runs cheap and byte-reproducible: on a warm cache no provider is
contacted at all.
"""

from __future__ import annotations

import hashlib
import json
import uuid
from pathlib import Path
from typing import Sequence

from .providers.base import (
    FillMaskCandidate,
    FillMaskQuery,
    GenerateQuery,
    GenerateResult,
    Provider,
    ScoreQuery,
    ScoreResult,
)


class ResponseCache:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(model_id: str, op: str, query: dict) -> str:
        payload = json.dumps(
            {"model": model_id, "op": op, "query": query},
            sort_keys=True,
            ensure_ascii=False,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, value: dict) -> None:
        path = self._path(key)
        # Unique temp name: concurrent writers of one key must not collide.
        tmp = path.with_suffix(f".{uuid.uuid4().hex}.tmp")
        tmp.write_text(
            json.dumps(value, sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )
        tmp.replace(path)


class CachingProvider(Provider):
    """Read-through cache wrapper around any provider."""

    def __init__(self, inner: Provider, cache: ResponseCache):
        self.inner = inner
        self.cache = cache
        self.model_id = inner.model_id

    def capabilities(self) -> frozenset[str]:
        return self.inner.capabilities()

    # fill_mask ---------------------------------------------------------

    def fill_mask(self, query: FillMaskQuery) -> list[FillMaskCandidate]:
        key = self.cache.key(
            self.model_id,
            "fill_mask",
            {"masked_text": query.masked_text, "top_k": query.top_k},
        )
        hit = self.cache.get(key)
        if hit is not None:
            return [FillMaskCandidate(c["text"], c["score"]) for c in hit["candidates"]]
        result = self.inner.fill_mask(query)
        self.cache.put(
            key, {"candidates": [{"text": c.text, "score": c.score} for c in result]}
        )
        return result

    # score -------------------------------------------------------------

    def score(self, query: ScoreQuery) -> ScoreResult:
        key = self.cache.key(
            self.model_id,
            "score",
            {
                "prompt": query.prompt,
                "continuation": query.continuation,
                "options": list(query.options) if query.options is not None else None,
            },
        )
        hit = self.cache.get(key)
        if hit is not None:
            probs = hit.get("option_probs")
            return ScoreResult(
                perplexity=hit.get("perplexity"),
                option_probs=tuple(probs) if probs is not None else None,
            )
        result = self.inner.score(query)
        self.cache.put(
            key,
            {
                "perplexity": result.perplexity,
                "option_probs": list(result.option_probs)
                if result.option_probs is not None
                else None,
            },
        )
        return result

    def score_batch(self, queries: Sequence[ScoreQuery]) -> list[ScoreResult]:
        # Serve hits locally, forward only the misses in one batch.
        keys = [
            self.cache.key(
                self.model_id,
                "score",
                {
                    "prompt": q.prompt,
                    "continuation": q.continuation,
                    "options": list(q.options) if q.options is not None else None,
                },
            )
            for q in queries
        ]
        results: list[ScoreResult | None] = []
        misses: list[int] = []
        for i, key in enumerate(keys):
            hit = self.cache.get(key)
            if hit is None:
                results.append(None)
                misses.append(i)
            else:
                probs = hit.get("option_probs")
                results.append(
                    ScoreResult(
                        perplexity=hit.get("perplexity"),
                        option_probs=tuple(probs) if probs is not None else None,
                    )
                )
        if misses:
            fresh = self.inner.score_batch([queries[i] for i in misses])
            for i, result in zip(misses, fresh):
                self.cache.put(
                    keys[i],
                    {
                        "perplexity": result.perplexity,
                        "option_probs": list(result.option_probs)
                        if result.option_probs is not None
                        else None,
                    },
                )
                results[i] = result
        return results  # type: ignore[return-value]

    # generate ----------------------------------------------------------

    def generate(self, query: GenerateQuery) -> GenerateResult:
        key = self.cache.key(
            self.model_id,
            "generate",
            {"prompt": query.prompt, "max_answer_tokens": query.max_answer_tokens},
        )
        hit = self.cache.get(key)
        if hit is not None:
            return GenerateResult(answer_text=hit["answer_text"])
        result = self.inner.generate(query)
        self.cache.put(key, {"answer_text": result.answer_text})
        return result
