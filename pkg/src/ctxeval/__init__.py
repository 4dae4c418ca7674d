"""Toolkit for evaluating how QA models use context.

Transforms any context-based QA dataset into six evaluation settings —
original context, original+distractor, conflicting, conflicting+distractor,
no context, and irrelevant context — splits questions into known/unknown
parametric knowledge per evaluated model, and scores all settings at once
into a single report.
"""

__version__ = "0.1.0"

from .corpus import Dataset, QARecord, SourceFormat, TaskKind
from .metrics import exact_match, normalize_answer
from .perturb import DistractorConfig, PerturbationVariant, VariantKind
from .prompts import PromptTemplate
from .split import KnowledgePartition

__all__ = [
    "__version__",
    "Dataset",
    "QARecord",
    "SourceFormat",
    "TaskKind",
    "exact_match",
    "normalize_answer",
    "DistractorConfig",
    "PerturbationVariant",
    "VariantKind",
    "PromptTemplate",
    "KnowledgePartition",
]
