"""Pipeline orchestration: ingest -> probe -> perturb -> evaluate -> report.

Each subcommand reads one config file, takes flag overrides, and works
against a stable artifact layout under the output directory::

    <out>/dataset.jsonl            canonical dataset
    <out>/dataset.discards.json    ids dropped by the verbatim filter
    <out>/partition/<model>.json   known/unknown split per eval model
    <out>/variants/<kind>.jsonl    perturbation variants (+ .done progress)
    <out>/cache/                   content-addressed model responses
    <out>/reports/report.{json,md,csv}

Subcommands are idempotent over completed artifacts and resumable over
partial ones; a lock file serializes runs against one output directory.

Exit codes: 0 success, 2 config error, 3 input error, 4 provider error,
5 incomplete run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from filelock import FileLock, Timeout

from . import corpus, evaluate, perturb, split
from .cache import CachingProvider, ResponseCache
from .config import ConfigError, RunConfig, load_run_config, load_word_pool
from .factory import build_provider
from .perturb import (
    DistractorConfig,
    NoSurvivingCandidates,
    PerturbationVariant,
    VariantKind,
)
from .prompts import PromptTemplate
from .providers.base import ProviderError

log = logging.getLogger("ctxeval")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PROVIDER = 4
EXIT_INCOMPLETE = 5


class InputError(Exception):
    pass


class IncompleteRun(Exception):
    pass


# --- artifact layout -----------------------------------------------------------


class RunPaths:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.dataset = out_dir / "dataset.jsonl"
        self.discards = out_dir / "dataset.discards.json"
        self.partition_dir = out_dir / "partition"
        self.variants_dir = out_dir / "variants"
        self.cache_dir = out_dir / "cache"
        self.reports_dir = out_dir / "reports"
        self.report_json = self.reports_dir / "report.json"
        self.lock = out_dir / ".lock"

    def partition(self, model_label: str) -> Path:
        return self.partition_dir / f"{model_label}.json"

    def variants(self, kind: VariantKind) -> Path:
        return self.variants_dir / f"{kind.value}.jsonl"

    def variants_done(self, kind: VariantKind) -> Path:
        return self.variants_dir / f"{kind.value}.done"


def _load_canonical_dataset(paths: RunPaths) -> corpus.Dataset:
    if not paths.dataset.exists():
        raise InputError(
            f"{paths.dataset} not found; run `ctxeval ingest` first"
        )
    return corpus.load_dataset(paths.dataset)


# --- subcommands -----------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, paths: RunPaths, force: bool) -> int:
    if paths.dataset.exists() and not force:
        log.error("refusing to overwrite %s (use --force)", paths.dataset)
        return EXIT_INPUT
    if cfg.dataset_format == corpus.SourceFormat.MCQA_JSONL:
        dataset = corpus.parse_mcqa(cfg.dataset_path)
    else:
        dataset = corpus.parse_freeform(cfg.dataset_path, cfg.dataset_format)
    if cfg.dataset_name:
        dataset = corpus.Dataset(name=cfg.dataset_name, records=dataset.records)
    retained, discarded = corpus.filter_verbatim(dataset)
    if not retained.records:
        raise corpus.EmptyDataset(
            "no record keeps its answer verbatim in the context; nothing to evaluate"
        )
    paths.out.mkdir(parents=True, exist_ok=True)
    corpus.dump_dataset(retained, paths.dataset)
    paths.discards.write_text(
        json.dumps({"discarded": discarded}, indent=2) + "\n", encoding="utf-8"
    )
    log.info(
        "ingested %d records (%d discarded by verbatim filter) -> %s",
        len(retained), len(discarded), paths.dataset,
    )
    return EXIT_OK


def cmd_probe(cfg: RunConfig, paths: RunPaths, force: bool) -> int:
    dataset = _load_canonical_dataset(paths)
    template = PromptTemplate(cfg.template_pattern)
    fingerprint = corpus.dataset_fingerprint(dataset)
    target = paths.partition(cfg.model_label)
    if target.exists() and not force:
        existing = split.load_partition(target)
        if (
            existing.dataset_fingerprint == fingerprint
            and existing.template_fingerprint == template.fingerprint()
        ):
            log.info("cache hit: partition %s is current", target)
            return EXIT_OK
        log.info("partition %s is stale, re-probing", target)
    provider = CachingProvider(
        build_provider(cfg.eval_model, cfg, dataset, template,
                       cfg.eval_model_id or cfg.model_label),
        ResponseCache(paths.cache_dir),
    )
    partition = split.probe(
        dataset, provider, template,
        parallelism=cfg.parallelism, dataset_fp=fingerprint,
    )
    split.save_partition(partition, target)
    log.info(
        "probed %d records: knowledge amount %.3f -> %s",
        len(dataset), partition.knowledge_amount, target,
    )
    return EXIT_OK


def _resume_sets(paths: RunPaths, kind: VariantKind, force: bool) -> set[str]:
    jsonl = paths.variants(kind)
    done = paths.variants_done(kind)
    if force:
        jsonl.unlink(missing_ok=True)
        done.unlink(missing_ok=True)
    if not done.exists():
        return set()
    return {line.strip() for line in done.read_text().splitlines() if line.strip()}


def _append_variants(
    paths: RunPaths, kind: VariantKind, record_id: str,
    variants: list[PerturbationVariant],
) -> None:
    with paths.variants(kind).open("a", encoding="utf-8") as fh:
        for variant in variants:
            fh.write(perturb.variant_to_json(variant) + "\n")
    with paths.variants_done(kind).open("a", encoding="utf-8") as fh:
        fh.write(record_id + "\n")


def _generate_kind(paths, dataset, kind, force, per_record) -> int:
    """Drive per-record generation with skip-on-resume; returns variants written."""
    done = _resume_sets(paths, kind, force)
    paths.variants(kind).touch()
    written = 0
    skipped = 0
    for record in dataset:
        if record.id in done:
            skipped += 1
            continue
        variants = per_record(record)
        _append_variants(paths, kind, record.id, variants)
        written += len(variants)
    if skipped:
        log.info("%s: resumed, skipped %d completed records", kind.value, skipped)
    log.info("%s: wrote %d variants -> %s", kind.value, written, paths.variants(kind))
    return written


def cmd_perturb(cfg: RunConfig, paths: RunPaths, force: bool, kinds: list[str]) -> int:
    dataset = _load_canonical_dataset(paths)
    template = PromptTemplate(cfg.template_pattern)
    paths.variants_dir.mkdir(parents=True, exist_ok=True)
    requested = set(kinds)
    cache = ResponseCache(paths.cache_dir)

    if "conflicting" in requested:
        fill_spec = cfg.fill_model
        if not fill_spec:
            raise ConfigError("conflicting variants need [providers] fill_model")
        fill = CachingProvider(build_provider(fill_spec, cfg, dataset, template), cache)

        def gen_conflicting(record):
            try:
                return perturb.make_conflicting(
                    record, fill, k=cfg.conflicting_k,
                    strict_match=cfg.strict_candidate_match,
                )
            except NoSurvivingCandidates:
                log.warning(
                    "record %s: every candidate matched the answer, no variants",
                    record.id,
                )
                return []

        _generate_kind(paths, dataset, VariantKind.CONFLICTING, force, gen_conflicting)

    if "irrelevant" in requested:
        _generate_kind(
            paths, dataset, VariantKind.IRRELEVANT, force,
            lambda record: perturb.make_irrelevant(
                record, dataset, n=cfg.irrelevant_n, seed=cfg.seed
            ),
        )

    if "distractor" in requested:
        if not cfg.scorer:
            raise ConfigError("distractor variants need [providers] scorer")
        scorer = CachingProvider(build_provider(cfg.scorer, cfg, dataset, template), cache)
        pool = load_word_pool(cfg.word_file)
        dcfg = DistractorConfig(
            pool_common_words=pool,
            length_d=cfg.distractor_length,
            max_epochs=cfg.distractor_max_epochs,
            include_question_words=cfg.include_question_words,
            seed=cfg.seed,
            placement=cfg.placement,
        )
        _generate_kind(
            paths, dataset, VariantKind.DISTRACTED, force,
            lambda record: [perturb.make_distractor(record, scorer, dcfg, template)],
        )

        conflicting_path = paths.variants(VariantKind.CONFLICTING)
        if not conflicting_path.exists():
            raise IncompleteRun(
                "conflicting+distractor variants need conflicting variants first; "
                "run `ctxeval perturb --kinds conflicting,distractor`"
            )
        by_source: dict[str, list[PerturbationVariant]] = {}
        for variant in perturb.read_variants(conflicting_path):
            by_source.setdefault(variant.source_id, []).append(variant)
        distracted = {
            v.source_id: v for v in perturb.read_variants(paths.variants(VariantKind.DISTRACTED))
        }

        def gen_conf_dist(record):
            out = []
            for base in by_source.get(record.id, []):
                if cfg.reoptimize_for_conflicting:
                    out.append(
                        perturb.make_distractor(record, scorer, dcfg, template, base)
                    )
                else:
                    row2 = distracted.get(record.id)
                    if row2 is None:
                        continue
                    words = row2.distractor_text.split()
                    out.append(
                        PerturbationVariant(
                            source_id=base.source_id,
                            kind=VariantKind.CONFLICTING_DISTRACTED,
                            variant_index=base.variant_index,
                            context=perturb.attach_distractor(base.context, words, cfg.placement),
                            expected_answer=base.expected_answer,
                            replaced_option_index=base.replaced_option_index,
                            distractor_text=row2.distractor_text,
                            seed=cfg.seed,
                        )
                    )
            return out

        _generate_kind(paths, dataset, VariantKind.CONFLICTING_DISTRACTED,
                       force, gen_conf_dist)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, paths: RunPaths, force: bool) -> int:
    dataset = _load_canonical_dataset(paths)
    template = PromptTemplate(cfg.template_pattern)
    partition_path = paths.partition(cfg.model_label)
    if not partition_path.exists():
        raise InputError(f"{partition_path} not found; run `ctxeval probe` first")
    partition = split.load_partition(partition_path)
    fingerprint = corpus.dataset_fingerprint(dataset)
    if partition.dataset_fingerprint not in (None, fingerprint):
        raise InputError(
            "partition was probed against a different dataset; re-run `ctxeval probe`"
        )

    variants_by_kind = {}
    skip_rows = set()
    for kind, row_pair in (
        (VariantKind.CONFLICTING, (evaluate.Row.CONFLICTING,)),
        (VariantKind.IRRELEVANT, (evaluate.Row.IRRELEVANT,)),
        (VariantKind.DISTRACTED, (evaluate.Row.STANDARD_DISTRACTOR,)),
        (VariantKind.CONFLICTING_DISTRACTED, (evaluate.Row.CONFLICTING_DISTRACTOR,)),
    ):
        path = paths.variants(kind)
        if path.exists():
            variants_by_kind[kind] = perturb.read_variants(path)
        elif kind in (VariantKind.DISTRACTED, VariantKind.CONFLICTING_DISTRACTED) and not cfg.scorer:
            # No scoring endpoint, no distractor search: leave the cells
            # undefined instead of inventing a fallback.
            skip_rows.update(row_pair)
        else:
            raise evaluate.MissingVariants(kind)

    provider = CachingProvider(
        build_provider(cfg.eval_model, cfg, dataset, template,
                       cfg.eval_model_id or cfg.model_label),
        ResponseCache(paths.cache_dir),
    )
    report = evaluate.run_all(
        dataset,
        provider,
        partition,
        template,
        variants_by_kind,
        parallelism=cfg.parallelism,
        max_answer_tokens=cfg.max_answer_tokens,
        skip_rows=frozenset(skip_rows),
        metadata={
            "seeds": {"seed": cfg.seed},
            "config_hash": cfg.config_hash,
            "provider_endpoint": cfg.eval_model,
        },
    )
    evaluate.save_report(report, paths.report_json)
    for fmt, name in (
        (evaluate.ReportFormat.MARKDOWN, "report.md"),
        (evaluate.ReportFormat.CSV, "report.csv"),
    ):
        (paths.reports_dir / name).write_text(
            evaluate.render_report(report, fmt), encoding="utf-8"
        )
    log.info("evaluation complete -> %s", paths.report_json)
    return EXIT_OK


def cmd_report(cfg: RunConfig, paths: RunPaths, format_name: str) -> int:
    if not paths.report_json.exists():
        raise InputError(f"{paths.report_json} not found; run `ctxeval evaluate` first")
    report = evaluate.load_report(paths.report_json)
    fmt = {
        "md": evaluate.ReportFormat.MARKDOWN,
        "markdown": evaluate.ReportFormat.MARKDOWN,
        "csv": evaluate.ReportFormat.CSV,
        "json": evaluate.ReportFormat.JSON,
    }[format_name]
    sys.stdout.write(evaluate.render_report(report, fmt))
    return EXIT_OK


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--force", action="store_true",
                        help="regenerate artifacts that already exist")
    common.add_argument("--parallelism", type=int,
                        help="max concurrent provider requests (overrides config)")

    parser = argparse.ArgumentParser(
        prog="ctxeval",
        description="Prepare QA datasets for context-usage evaluation and "
                    "score models on every context condition at once.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common],
                   help="parse, verbatim-filter and persist the dataset")
    sub.add_parser("probe", parents=[common],
                   help="split records into known/unknown knowledge for the eval model")
    p_perturb = sub.add_parser("perturb", parents=[common],
                               help="generate perturbation variants")
    p_perturb.add_argument(
        "--kinds",
        default=None,
        help="comma-separated subset of conflicting,irrelevant,distractor "
             "(default: all that the configured providers support)",
    )
    sub.add_parser("evaluate", parents=[common],
                   help="score the eval model across the full matrix")
    p_report = sub.add_parser("report", parents=[common],
                              help="render the persisted report to stdout")
    p_report.add_argument("--format", default="md", choices=["md", "markdown", "csv", "json"])
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    if args.out is not None:
        out["out"] = args.out
    if args.seed is not None:
        out["seed"] = args.seed
    if args.parallelism is not None:
        out["parallelism"] = args.parallelism
    return out


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, _overrides(args))
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    paths = RunPaths(cfg.out_dir)
    paths.out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(paths.lock))
    try:
        with lock.acquire(timeout=1):
            return _dispatch(args, cfg, paths)
    except Timeout:
        log.error("another run holds the lock on %s", paths.out)
        return EXIT_INCOMPLETE
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (corpus.CorpusError, InputError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except (perturb.FillMaskFailure, perturb.ScorerFailure, ProviderError) as exc:
        log.error("provider error: %s", exc)
        return EXIT_PROVIDER
    except perturb.InsufficientContexts as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except perturb.EmptyPool as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (evaluate.MissingVariants, IncompleteRun) as exc:
        log.error("incomplete run: %s", exc)
        return EXIT_INCOMPLETE


def _dispatch(args: argparse.Namespace, cfg: RunConfig, paths: RunPaths) -> int:
    if args.command == "ingest":
        return cmd_ingest(cfg, paths, args.force)
    if args.command == "probe":
        return cmd_probe(cfg, paths, args.force)
    if args.command == "perturb":
        if args.kinds:
            kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
            unknown = set(kinds) - {"conflicting", "irrelevant", "distractor"}
            if unknown:
                raise ConfigError(f"unknown perturbation kinds: {sorted(unknown)}")
        else:
            kinds = ["conflicting", "irrelevant"]
            if cfg.scorer:
                kinds.append("distractor")
        return cmd_perturb(cfg, paths, args.force, kinds)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, paths, args.force)
    if args.command == "report":
        return cmd_report(cfg, paths, args.format)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
