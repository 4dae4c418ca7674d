"""Run configuration: a single TOML-style file capturing every parameter.

Python 3.10 ships no TOML reader and this package keeps its dependency
surface small, so a strict subset of TOML is parsed here: ``[section]``
headers (dotted names allowed), ``key = value`` pairs with double-quoted
strings, integers, floats, booleans and flat arrays, plus ``#`` comments.
That subset is all a run file needs; anything fancier is rejected loudly.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import SourceFormat
from .perturb import DistractorPlacement


class ConfigError(Exception):
    def __init__(self, message: str, locator: str | None = None):
        super().__init__(f"{message} (at {locator})" if locator else message)
        self.locator = locator


_KEY_RE = re.compile(r"^[A-Za-z0-9_\-]+$")
_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_\-.]+)\]$")


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        if ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out).strip()


def _parse_scalar(raw: str, locator: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        try:
            body = raw[1:-1]
            return body.encode("utf-8").decode("unicode_escape") if "\\" in body else body
        except UnicodeDecodeError as exc:
            raise ConfigError(f"bad string escape: {exc}", locator) from exc
    if raw in ("true", "false"):
        return raw == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    raise ConfigError(f"unparseable value {raw!r}", locator)


def parse_toml_subset(text: str, source: str = "<config>") -> dict:
    """Parse the supported TOML subset into nested dicts."""
    root: dict = {}
    section = root
    for lineno, line in enumerate(text.splitlines(), start=1):
        locator = f"{source}:{lineno}"
        line = _strip_comment(line)
        if not line:
            continue
        header = _SECTION_RE.match(line)
        if header:
            section = root
            for part in header.group(1).split("."):
                section = section.setdefault(part, {})
                if not isinstance(section, dict):
                    raise ConfigError(f"section clashes with key {part!r}", locator)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", locator)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"bad key {key!r}", locator)
        if raw.startswith("["):
            if not raw.endswith("]"):
                raise ConfigError("arrays must close on the same line", locator)
            body = raw[1:-1].strip()
            items = []
            if body:
                for chunk in _split_array(body, locator):
                    items.append(_parse_scalar(chunk, locator))
            section[key] = items
        else:
            section[key] = _parse_scalar(raw, locator)
    return root


def _split_array(body: str, locator: str) -> list[str]:
    chunks = []
    current = []
    in_string = False
    for ch in body:
        if ch == '"':
            in_string = not in_string
        if ch == "," and not in_string:
            chunks.append("".join(current))
            current = []
        else:
            current.append(ch)
    if in_string:
        raise ConfigError("unterminated string in array", locator)
    chunks.append("".join(current))
    return [c for c in (c.strip() for c in chunks) if c]


# --- run configuration ---------------------------------------------------------


def default_word_file() -> Path:
    """Path of the packaged common-word pool."""
    with resources.as_file(
        resources.files("ctxeval").joinpath("data/common_words.txt")
    ) as path:
        return Path(path)


@dataclass
class RunConfig:
    """Everything a pipeline run needs, resolved and validated."""

    dataset_path: Path
    dataset_format: SourceFormat
    out_dir: Path
    seed: int
    eval_model: str
    dataset_name: str | None = None
    eval_model_id: str | None = None
    fill_model: str | None = None
    scorer: str | None = None
    parallelism: int = 4
    timeout_s: float = 30.0
    retries: int = 3
    backoff_s: float = 0.5
    conflicting_k: int = 10
    irrelevant_n: int = 5
    strict_candidate_match: bool = False
    distractor_length: int = 10
    distractor_max_epochs: int = 3
    include_question_words: bool = True
    placement: DistractorPlacement = DistractorPlacement.APPEND
    reoptimize_for_conflicting: bool = True
    word_file: Path = field(default_factory=default_word_file)
    template_pattern: str = "question: {question}. context: {context}."
    max_answer_tokens: int = 32
    config_hash: str = ""

    @property
    def model_label(self) -> str:
        label = self.eval_model_id or self.eval_model
        return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


_FORMAT_ALIASES = {
    "squad_v1": SourceFormat.SQUAD_V1,
    "generic_jsonl": SourceFormat.GENERIC_JSONL,
    "mcqa_jsonl": SourceFormat.MCQA_JSONL,
}


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load, override (CLI flags win) and validate a run configuration.

    Seeds are deliberately non-defaultable: a run file without an explicit
    seed is a config error, never silently entropy-seeded.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    raw = parse_toml_subset(text, source=str(path))
    overrides = overrides or {}

    run = raw.get("run", {})
    dataset = raw.get("dataset", {})
    providers = raw.get("providers", {})
    perturb = raw.get("perturb", {})
    distractor = perturb.get("distractor", {}) if isinstance(perturb, dict) else {}
    eval_section = raw.get("eval", {})

    def picked(section: dict, key: str, default=None):
        return overrides.get(key, section.get(key, default))

    seed = picked(run, "seed")
    if seed is None:
        raise ConfigError("an explicit integer seed is required ([run] seed = ...)")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    out_dir = picked(run, "out")
    if not out_dir:
        raise ConfigError("an output directory is required ([run] out = ...)")

    dataset_path = dataset.get("path")
    if not dataset_path:
        raise ConfigError("a dataset path is required ([dataset] path = ...)")
    dataset_path = Path(dataset_path)
    if not dataset_path.is_absolute():
        dataset_path = path.parent / dataset_path
    if not dataset_path.exists():
        raise ConfigError(f"dataset path does not exist: {dataset_path}")

    fmt_name = dataset.get("format")
    if fmt_name not in _FORMAT_ALIASES:
        raise ConfigError(
            f"dataset format must be one of {sorted(_FORMAT_ALIASES)}, got {fmt_name!r}"
        )

    eval_model = providers.get("eval_model")
    if not eval_model:
        raise ConfigError("an eval model endpoint is required ([providers] eval_model = ...)")

    word_file = distractor.get("word_file")
    if word_file:
        word_file = Path(word_file)
        if not word_file.is_absolute():
            word_file = path.parent / word_file
        if not word_file.exists():
            raise ConfigError(f"distractor word file does not exist: {word_file}")
    else:
        word_file = default_word_file()

    placement_name = distractor.get("placement", "append")
    try:
        placement = DistractorPlacement(placement_name)
    except ValueError:
        raise ConfigError(f"unknown distractor placement {placement_name!r}") from None

    config = RunConfig(
        dataset_path=dataset_path,
        dataset_format=_FORMAT_ALIASES[fmt_name],
        dataset_name=dataset.get("name"),
        out_dir=Path(out_dir),
        seed=seed,
        parallelism=int(picked(run, "parallelism", 4)),
        eval_model=eval_model,
        eval_model_id=providers.get("eval_model_id"),
        fill_model=providers.get("fill_model"),
        scorer=providers.get("scorer"),
        timeout_s=float(providers.get("timeout_s", 30.0)),
        retries=int(providers.get("retries", 3)),
        backoff_s=float(providers.get("backoff_s", 0.5)),
        conflicting_k=int(perturb.get("conflicting_k", 10)),
        irrelevant_n=int(perturb.get("irrelevant_n", 5)),
        strict_candidate_match=bool(perturb.get("strict_candidate_match", False)),
        distractor_length=int(distractor.get("length", 10)),
        distractor_max_epochs=int(distractor.get("max_epochs", 3)),
        include_question_words=bool(distractor.get("include_question_words", True)),
        placement=placement,
        reoptimize_for_conflicting=bool(distractor.get("reoptimize_for_conflicting", True)),
        word_file=word_file,
        template_pattern=eval_section.get(
            "template", "question: {question}. context: {context}."
        ),
        max_answer_tokens=int(eval_section.get("max_answer_tokens", 32)),
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )
    if config.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    for name, value in (
        ("conflicting_k", config.conflicting_k),
        ("irrelevant_n", config.irrelevant_n),
        ("distractor length", config.distractor_length),
        ("distractor max_epochs", config.distractor_max_epochs),
    ):
        if value < 1:
            raise ConfigError(f"{name} must be >= 1")
    return config


def load_word_pool(path: str | Path) -> tuple[str, ...]:
    words = []
    seen = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word and not word.startswith("#") and word not in seen:
            seen.add(word)
            words.append(word)
    return tuple(words)
