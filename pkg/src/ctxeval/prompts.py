"""Prompt construction shared by probing, perturbation scoring and evaluation."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

DEFAULT_PATTERN = "question: {question}. context: {context}."


@dataclass(frozen=True)
class PromptTemplate:
    """A pattern with exactly one ``{question}`` and one ``{context}`` slot.

    The closed-book prompt keeps the same shape with an empty context
    segment, which minimises distribution shift between contextual and
    context-free queries.
    """

    pattern: str = DEFAULT_PATTERN

    def __post_init__(self):
        for slot in ("{question}", "{context}"):
            count = self.pattern.count(slot)
            if count != 1:
                raise ValueError(
                    f"template must contain {slot} exactly once, found {count}"
                )

    def render(self, question: str, context: str) -> str:
        return self.pattern.replace("{question}", question).replace(
            "{context}", context
        )

    def render_closed_book(self, question: str) -> str:
        return self.render(question, "")

    def parse(self, prompt: str) -> tuple[str, str] | None:
        """Invert :meth:`render`, recovering ``(question, context)``.

        Used by scripted model mocks, which receive only the rendered
        prompt over the provider protocol.  Returns ``None`` when the
        prompt does not match the pattern.
        """
        match = re.fullmatch(self._regex(), prompt, flags=re.DOTALL)
        if match is None:
            return None
        return match.group("question"), match.group("context")

    def _regex(self) -> str:
        # All placeholder groups are lazy except the last, so literal
        # separators bind as early as possible.
        parts = re.split(r"(\{question\}|\{context\})", self.pattern)
        slots = [p for p in parts if p in ("{question}", "{context}")]
        out = []
        for part in parts:
            if part == "{question}":
                quant = "*" if part == slots[-1] else "*?"
                out.append(f"(?P<question>.{quant})")
            elif part == "{context}":
                quant = "*" if part == slots[-1] else "*?"
                out.append(f"(?P<context>.{quant})")
            else:
                out.append(re.escape(part))
        return "".join(out)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.pattern.encode("utf-8")).hexdigest()
