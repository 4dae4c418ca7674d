"""Answer normalization and exact match."""

from __future__ import annotations

import re
import string
from typing import Sequence

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop the articles a/an/the, collapse whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, golds: Sequence[str]) -> bool:
    """True iff the normalized prediction equals any normalized gold answer."""
    if not golds:
        raise ValueError("golds must be non-empty")
    norm = normalize_answer(prediction)
    return any(norm == normalize_answer(g) for g in golds)
