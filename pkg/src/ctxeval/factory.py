"""Build providers from endpoint spec strings.

An endpoint is either an ``http(s)://`` base URL for any service speaking
the wire protocol, or a deterministic in-process mock::

    mock:fill?seed=7              synthetic fill-mask candidates
    mock:fill-table?path=t.json   fill-mask from an explicit table
    mock:scorer?seed=3            hash-based scorer (free-form + MC)
    mock:echo                     oracle answering spans found in the context
    mock:parametric?known=0.3&seed=11
                                  oracle answering fixed closed-book beliefs

The two oracle mocks need the ingested dataset (and, for echo, the
fill-mask endpoint) to assemble their scripts, which is why construction
goes through this factory rather than the provider classes directly.
"""

from __future__ import annotations

import json
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .config import ConfigError, RunConfig
from .corpus import Dataset
from .prompts import PromptTemplate
from .providers import (
    HttpProvider,
    Provider,
    HashScorer,
    SyntheticFillMask,
    TableFillMask,
    build_echo_model,
    build_parametric_model,
)


def _params(spec: str) -> tuple[str, dict[str, str]]:
    name, _, query = spec.partition("?")
    params = {k: v[-1] for k, v in parse_qs(query).items()}
    return name, params


def build_provider(
    spec: str,
    config: RunConfig,
    dataset: Dataset | None = None,
    template: PromptTemplate | None = None,
    model_id: str | None = None,
) -> Provider:
    if spec.startswith(("http://", "https://")):
        return HttpProvider(
            base_url=spec,
            model_id=model_id,
            timeout_s=config.timeout_s,
            retries=config.retries,
            backoff_base_s=config.backoff_s,
        )
    if not spec.startswith("mock:"):
        raise ConfigError(f"unrecognized provider endpoint {spec!r}")

    name, params = _params(spec[len("mock:") :])
    seed = int(params.get("seed", config.seed))
    if name == "fill":
        return SyntheticFillMask(seed=seed, model_id=model_id or "mock-fill")
    if name == "fill-table":
        path = params.get("path")
        if not path:
            raise ConfigError("mock:fill-table requires ?path=<table.json>")
        table = json.loads(Path(path).read_text(encoding="utf-8"))
        return TableFillMask(table, model_id=model_id or "mock-fill-table")
    if name == "scorer":
        return HashScorer(seed=seed, model_id=model_id or "mock-scorer")
    if name == "echo":
        if dataset is None:
            raise ConfigError("mock:echo requires an ingested dataset")
        fill = None
        if config.fill_model and config.fill_model.startswith("mock:"):
            fill = build_provider(config.fill_model, config)
        return build_echo_model(
            dataset,
            template or PromptTemplate(config.template_pattern),
            fill=fill,
            top_k=config.conflicting_k,
            model_id=model_id or "mock-echo",
        )
    if name == "parametric":
        if dataset is None:
            raise ConfigError("mock:parametric requires an ingested dataset")
        known = float(params.get("known", 0.0))
        return build_parametric_model(
            dataset,
            template or PromptTemplate(config.template_pattern),
            known_fraction=known,
            seed=seed,
            model_id=model_id or "mock-parametric",
        )
    raise ConfigError(f"unknown mock provider {name!r}")
