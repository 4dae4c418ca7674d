"""JSON-over-HTTP provider client.

The wire protocol has three endpoints plus order-preserving batch
variants::

    POST /fill_mask        {"masked_text", "top_k"}        -> {"candidates": [{"text", "score"}]}
    POST /score            {"prompt", "continuation"}      -> {"perplexity"}
    POST /score            {"prompt", "options": [...]}    -> {"option_probs": [...]}
    POST /generate         {"prompt", "max_answer_tokens"} -> {"answer_text"}
    POST /<op>_batch       {"queries": [...]}              -> {"results": [...]}

Failures carry ``{"error": {"code", "message"}}``; 4xx codes map to typed
exceptions, transient transport failures and 5xx responses are retried
with exponential backoff and finally surface as ``ProviderUnavailable``.
Each request carries an ``X-Request-Id`` the server must echo; a mismatch
means responses got crossed and raises ``ProtocolError``.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
from typing import Any, Callable, Sequence

import requests

from .base import (
    BadMask,
    FillMaskCandidate,
    FillMaskQuery,
    GenerateQuery,
    GenerateResult,
    ModeMismatch,
    Provider,
    ProviderError,
    ProtocolError,
    ProviderUnavailable,
    ScoreQuery,
    ScoreResult,
)

ENDPOINT_ENV_VAR = "CTXEVAL_ENDPOINT"
AUTH_TOKEN_ENV_VAR = "CTXEVAL_AUTH_TOKEN"

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_BASE_S = 0.5

_ERROR_CODE_MAP = {
    "bad_mask": BadMask,
    "mode_mismatch": ModeMismatch,
    "protocol": ProtocolError,
}


def resolve_base_url(explicit: str | None = None) -> str:
    url = explicit or os.environ.get(ENDPOINT_ENV_VAR)
    if not url:
        raise ProtocolError(
            f"no provider endpoint configured and {ENDPOINT_ENV_VAR} is unset"
        )
    return url.rstrip("/")


class HttpProvider(Provider):
    """Client for any service implementing the provider wire protocol."""

    def __init__(
        self,
        base_url: str | None = None,
        model_id: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        backoff_base_s: float = DEFAULT_BACKOFF_BASE_S,
        auth_token: str | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = resolve_base_url(base_url)
        self.model_id = model_id or self.base_url
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_base_s = backoff_base_s
        self.auth_token = auth_token or os.environ.get(AUTH_TOKEN_ENV_VAR)
        self._shared_session = session
        self._local = threading.local()
        self._sleep = sleep

    @property
    def session(self) -> requests.Session:
        # Sessions are not thread-safe; callers fan requests out over
        # thread pools, so each thread gets its own unless one was injected.
        if self._shared_session is not None:
            return self._shared_session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def capabilities(self) -> frozenset[str]:
        return frozenset({"fill_mask", "score", "generate"})

    # --- transport ------------------------------------------------------

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_failure: str = "no attempt made"
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
            request_id = str(uuid.uuid4())
            headers["X-Request-Id"] = request_id
            try:
                response = self.session.post(
                    url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_failure = f"transport failure: {exc}"
                continue
            if response.status_code >= 500:
                last_failure = f"server error {response.status_code}"
                continue
            echoed = response.headers.get("X-Request-Id")
            if echoed is not None and echoed != request_id:
                raise ProtocolError(
                    f"correlation id mismatch: sent {request_id}, got {echoed}"
                )
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"invalid JSON from {url}: {exc}") from exc
            if response.status_code >= 400:
                raise self._typed_error(body, response.status_code)
            return body
        raise ProviderUnavailable(
            f"{url} unreachable after {self.retries + 1} attempts ({last_failure})"
        )

    @staticmethod
    def _typed_error(body: Any, status: int) -> ProviderError:
        info = body.get("error", {}) if isinstance(body, dict) else {}
        code = info.get("code", "protocol")
        message = info.get("message", f"HTTP {status}")
        exc_type = _ERROR_CODE_MAP.get(code, ProtocolError)
        return exc_type(message)

    # --- operations -----------------------------------------------------

    def fill_mask(self, query: FillMaskQuery) -> list[FillMaskCandidate]:
        body = self._post("/fill_mask", fill_mask_to_wire(query))
        return fill_mask_from_wire(body)

    def score(self, query: ScoreQuery) -> ScoreResult:
        body = self._post("/score", score_to_wire(query))
        return score_from_wire(body)

    def generate(self, query: GenerateQuery) -> GenerateResult:
        body = self._post("/generate", generate_to_wire(query))
        return generate_from_wire(body)

    def fill_mask_batch(
        self, queries: Sequence[FillMaskQuery]
    ) -> list[list[FillMaskCandidate]]:
        body = self._post(
            "/fill_mask_batch", {"queries": [fill_mask_to_wire(q) for q in queries]}
        )
        results = _expect_results(body, len(queries))
        return [fill_mask_from_wire(item) for item in results]

    def score_batch(self, queries: Sequence[ScoreQuery]) -> list[ScoreResult]:
        body = self._post(
            "/score_batch", {"queries": [score_to_wire(q) for q in queries]}
        )
        results = _expect_results(body, len(queries))
        return [score_from_wire(item) for item in results]

    def generate_batch(self, queries: Sequence[GenerateQuery]) -> list[GenerateResult]:
        body = self._post(
            "/generate_batch", {"queries": [generate_to_wire(q) for q in queries]}
        )
        results = _expect_results(body, len(queries))
        return [generate_from_wire(item) for item in results]


def _expect_results(body: dict, expected: int) -> list:
    results = body.get("results")
    if not isinstance(results, list) or len(results) != expected:
        raise ProtocolError(
            f"batch response must carry {expected} results, got "
            f"{len(results) if isinstance(results, list) else type(results).__name__}"
        )
    return results


# --- wire (de)serialization, shared with the in-process test server ---------


def fill_mask_to_wire(query: FillMaskQuery) -> dict:
    return {"masked_text": query.masked_text, "top_k": query.top_k}


def fill_mask_from_wire(body: dict) -> list[FillMaskCandidate]:
    try:
        return [
            FillMaskCandidate(text=c["text"], score=float(c["score"]))
            for c in body["candidates"]
        ]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed fill_mask response: {body!r}") from exc


def score_to_wire(query: ScoreQuery) -> dict:
    wire: dict = {"prompt": query.prompt}
    if query.continuation is not None:
        wire["continuation"] = query.continuation
    if query.options is not None:
        wire["options"] = list(query.options)
    return wire


def score_from_wire(body: dict) -> ScoreResult:
    if "perplexity" in body:
        return ScoreResult(perplexity=float(body["perplexity"]))
    if "option_probs" in body:
        return ScoreResult(option_probs=tuple(float(p) for p in body["option_probs"]))
    raise ProtocolError(f"malformed score response: {body!r}")


def score_query_from_wire(body: dict) -> ScoreQuery:
    options = body.get("options")
    return ScoreQuery(
        prompt=body.get("prompt", ""),
        continuation=body.get("continuation"),
        options=tuple(options) if options is not None else None,
    )


def generate_to_wire(query: GenerateQuery) -> dict:
    return {"prompt": query.prompt, "max_answer_tokens": query.max_answer_tokens}


def generate_from_wire(body: dict) -> GenerateResult:
    try:
        return GenerateResult(answer_text=body["answer_text"])
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed generate response: {body!r}") from exc
