import itertools
import random

import pytest

from ctxeval.corpus import Dataset, QARecord
from ctxeval.metrics import normalize_answer
from ctxeval.perturb import (
    DistractorConfig,
    DistractorPlacement,
    EmptyPool,
    FillMaskFailure,
    InsufficientContexts,
    NoSurvivingCandidates,
    PerturbationVariant,
    VariantKind,
    greedy_search,
    make_conflicting,
    make_distractor,
    make_irrelevant,
    read_variants,
    variant_from_json,
    variant_to_json,
    write_variants,
)
from ctxeval.prompts import PromptTemplate
from ctxeval.providers import (
    MASK,
    Provider,
    ProtocolError,
    ScoreQuery,
    SeparableWordScorer,
    SyntheticFillMask,
    TableFillMask,
)

from conftest import make_freeform_dataset, make_mc_dataset

TEMPLATE = PromptTemplate()

PRESIDENT_CONTEXT = "Barack Obama is the current US president"
PRESIDENT_RECORD = QARecord(
    id="pres",
    question="Who is the current US president?",
    context=PRESIDENT_CONTEXT,
    gold_answers=("Barack Obama",),
)
PRESIDENT_FILL = TableFillMask(
    {f"{MASK} is the current US president": ["Donald Trump", "Barack Obama", "Joe Biden"]}
)


class TestMakeConflicting:
    def test_candidates_matching_the_answer_are_dropped(self):
        variants = make_conflicting(PRESIDENT_RECORD, PRESIDENT_FILL, k=3)
        assert [v.context for v in variants] == [
            "Donald Trump is the current US president",
            "Joe Biden is the current US president",
        ]
        assert [v.expected_answer for v in variants] == ["Donald Trump", "Joe Biden"]
        assert [v.variant_index for v in variants] == [0, 1]
        assert all(v.kind == VariantKind.CONFLICTING for v in variants)

    def test_all_candidates_matching_raises(self):
        fill = TableFillMask(
            {f"{MASK} is the current US president": ["Barack Obama", "barack  obama"]}
        )
        with pytest.raises(NoSurvivingCandidates):
            make_conflicting(PRESIDENT_RECORD, fill, k=2)

    def test_strict_match_keeps_case_variants(self):
        fill = TableFillMask(
            {f"{MASK} is the current US president": ["barack obama", "Barack Obama"]}
        )
        variants = make_conflicting(PRESIDENT_RECORD, fill, k=2, strict_match=True)
        assert [v.expected_answer for v in variants] == ["barack obama"]

    def test_duplicate_candidates_are_collapsed(self):
        fill = TableFillMask(
            {f"{MASK} is the current US president": ["Joe Biden", "joe  biden", "Al Gore"]}
        )
        variants = make_conflicting(PRESIDENT_RECORD, fill, k=3)
        assert [v.expected_answer for v in variants] == ["Joe Biden", "Al Gore"]

    def test_diff_confined_to_answer_span(self):
        dataset = make_freeform_dataset(5)
        fill = SyntheticFillMask(seed=9)
        for rec in dataset:
            start = rec.context.index(rec.canonical_answer)
            end = start + len(rec.canonical_answer)
            for variant in make_conflicting(rec, fill, k=10):
                assert variant.context.startswith(rec.context[:start])
                assert variant.context.endswith(rec.context[end:])
                core = variant.context[len(rec.context[:start]) : len(variant.context) - len(rec.context[end:])]
                assert core == variant.expected_answer

    def test_expected_answer_never_matches_gold_after_normalization(self):
        dataset = make_freeform_dataset(5)
        fill = SyntheticFillMask(seed=9)
        for rec in dataset:
            for variant in make_conflicting(rec, fill, k=10):
                assert normalize_answer(variant.expected_answer) != normalize_answer(
                    rec.canonical_answer
                )

    def test_emits_at_most_k(self):
        variants = make_conflicting(PRESIDENT_RECORD, PRESIDENT_FILL, k=2)
        assert len(variants) <= 2

    def test_mc_replaces_lowest_indexed_wrong_option(self):
        record = make_mc_dataset(3).records[1]  # correct index 1
        masked = record.context.replace(record.canonical_answer, MASK)
        fill = TableFillMask({masked: ["bronze 1"]})
        (variant,) = make_conflicting(record, fill, k=1)
        assert variant.replaced_option_index == 0
        options = variant.options_for(record)
        assert options is not None
        assert record.canonical_answer in options  # gold always kept
        assert "bronze 1" in options
        missing = set(record.options) - set(options)
        assert len(missing) == 1 and record.options[0] in missing
        assert variant.target_option_index(record) == 0

    def test_mc_correct_option_zero_replaces_index_one(self):
        record = make_mc_dataset(1).records[0]  # correct index 0
        masked = record.context.replace(record.canonical_answer, MASK)
        fill = TableFillMask({masked: ["bronze 0"]})
        (variant,) = make_conflicting(record, fill, k=1)
        assert variant.replaced_option_index == 1

    def test_provider_failure_is_wrapped(self):
        class Failing(Provider):
            def fill_mask(self, query):
                raise ProtocolError("boom")

        with pytest.raises(FillMaskFailure):
            make_conflicting(PRESIDENT_RECORD, Failing(), k=3)

    def test_unmaskable_record_rejected(self):
        record = QARecord(id="x", question="q", context="nothing here",
                          gold_answers=("Paris",))
        with pytest.raises(ValueError):
            make_conflicting(record, PRESIDENT_FILL)


class TestMakeIrrelevant:
    def test_never_picks_own_context(self):
        dataset = make_freeform_dataset(3)
        record = dataset.records[0]
        others = {r.context for r in dataset.records[1:]}
        variants = make_irrelevant(record, dataset, n=5, seed=11)
        assert len(variants) == 5
        for v in variants:
            assert v.context in others
            assert v.context != record.context
            assert v.expected_answer == record.canonical_answer
            assert v.kind == VariantKind.IRRELEVANT

    def test_deterministic_given_seed(self):
        dataset = make_freeform_dataset(8)
        record = dataset.records[2]
        first = make_irrelevant(record, dataset, n=5, seed=4)
        second = make_irrelevant(record, dataset, n=5, seed=4)
        assert first == second
        other_seed = make_irrelevant(record, dataset, n=5, seed=5)
        assert first != other_seed

    def test_without_replacement_when_enough_contexts(self):
        dataset = make_freeform_dataset(8)
        variants = make_irrelevant(dataset.records[0], dataset, n=5, seed=1)
        contexts = [v.context for v in variants]
        assert len(set(contexts)) == 5

    def test_with_replacement_when_too_few(self):
        dataset = make_freeform_dataset(3)
        variants = make_irrelevant(dataset.records[0], dataset, n=5, seed=1)
        assert len(variants) == 5
        assert len({v.context for v in variants}) <= 2

    def test_single_distinct_context_raises(self):
        shared = "The same context everywhere."
        records = tuple(
            QARecord(id=f"r{i}", question=f"q{i}", context=shared, gold_answers=("same",))
            for i in range(3)
        )
        dataset = Dataset(name="d", records=records)
        with pytest.raises(InsufficientContexts):
            make_irrelevant(records[0], dataset, n=5, seed=1)


POOL = ("zorp", "blik", "fraz", "quem", "wolt")


def separable_weights(seed: int) -> dict[str, float]:
    """Distinct per-word weights so the separable optimum is unique."""
    rng = random.Random(seed)
    values = sorted(rng.uniform(0.0, 1.0) for _ in POOL)
    return dict(zip(POOL, values))


def brute_force_optimum(weights: dict[str, float], d: int) -> tuple[str, ...]:
    best_words = None
    best_value = float("-inf")
    for combo in itertools.product(POOL, repeat=d):
        value = sum(weights[w] for w in combo)
        if value > best_value:
            best_value = value
            best_words = combo
    return best_words


class TestGreedySearch:
    def test_matches_brute_force_on_separable_objective(self):
        for seed in range(5):
            weights = separable_weights(seed)

            def score_batch(word_tuples):
                return [sum(weights[w] for w in words) for words in word_tuples]

            outcome = greedy_search(
                score_batch, POOL, length_d=2, max_epochs=3,
                rng=random.Random(seed),
            )
            assert outcome.words == brute_force_optimum(weights, 2)

    def test_history_strictly_improves(self):
        rng_noise = random.Random(0)
        noise = {}

        def score_batch(word_tuples):
            out = []
            for words in word_tuples:
                key = tuple(words)
                if key not in noise:
                    noise[key] = rng_noise.random()
                out.append(noise[key])
            return out

        for seed in range(10):
            outcome = greedy_search(
                score_batch, POOL, length_d=3, max_epochs=4,
                rng=random.Random(seed),
            )
            for before, after in zip(outcome.history, outcome.history[1:]):
                assert after > before
            assert outcome.objective >= outcome.history[0]

    def test_evaluation_budget(self):
        calls = []

        def score_batch(word_tuples):
            calls.append(len(word_tuples))
            return [0.0] * len(word_tuples)

        outcome = greedy_search(
            score_batch, POOL, length_d=4, max_epochs=3, rng=random.Random(1)
        )
        assert outcome.evaluations == sum(calls)
        assert outcome.evaluations <= 3 * 4 * len(POOL)


class TestMakeDistractor:
    def _record(self):
        return make_freeform_dataset(1).records[0]

    def _cfg(self, **kwargs):
        defaults = dict(
            pool_common_words=POOL,
            length_d=2,
            max_epochs=3,
            include_question_words=False,
            seed=0,
        )
        defaults.update(kwargs)
        return DistractorConfig(**defaults)

    def test_structural_postcondition(self):
        record = self._record()
        scorer = SeparableWordScorer(separable_weights(0))
        variant = make_distractor(record, scorer, self._cfg(), TEMPLATE)
        assert variant.kind == VariantKind.DISTRACTED
        assert variant.distractor_text is not None
        assert len(variant.distractor_text.split()) == 2
        assert variant.context == f"{record.context} {variant.distractor_text}"
        assert variant.expected_answer == record.canonical_answer

    def test_prepend_placement(self):
        record = self._record()
        scorer = SeparableWordScorer(separable_weights(0))
        variant = make_distractor(
            record, scorer, self._cfg(placement=DistractorPlacement.PREPEND), TEMPLATE
        )
        assert variant.context == f"{variant.distractor_text} {record.context}"

    def test_matches_brute_force_through_provider_scoring(self):
        record = self._record()
        weights = separable_weights(7)
        scorer = SeparableWordScorer(weights)
        variant = make_distractor(record, scorer, self._cfg(seed=7), TEMPLATE)
        assert tuple(variant.distractor_text.split()) == brute_force_optimum(weights, 2)

    def test_deterministic_and_seed_sensitive(self):
        record = self._record()
        scorer = SeparableWordScorer(separable_weights(3))
        a = make_distractor(record, scorer, self._cfg(seed=3), TEMPLATE)
        b = make_distractor(record, scorer, self._cfg(seed=3), TEMPLATE)
        assert a == b

    def test_scorer_call_budget(self):
        record = self._record()

        class CountingScorer(SeparableWordScorer):
            calls = 0

            def score(self, query):
                type(self).calls += 1
                return super().score(query)

        scorer = CountingScorer(separable_weights(1))
        cfg = self._cfg(length_d=3, max_epochs=2)
        make_distractor(record, scorer, cfg, TEMPLATE)
        assert CountingScorer.calls <= cfg.max_epochs * cfg.length_d * len(POOL)

    def test_mc_mode_minimizes_correct_option_probability(self):
        record = make_mc_dataset(1).records[0]  # correct index 0
        scorer = SeparableWordScorer(separable_weights(2))
        variant = make_distractor(record, scorer, self._cfg(seed=5), TEMPLATE)

        def p_correct(context):
            prompt = TEMPLATE.render(record.question, context)
            result = scorer.score(ScoreQuery(prompt=prompt, options=record.options))
            return result.option_probs[record.correct_option_index]

        # The searched distractor must press at least as hard as the
        # lightest-weight naive choice.
        baseline = p_correct(f"{record.context} zorp zorp")
        assert p_correct(variant.context) <= baseline

    def test_conflicting_base_variant_carries_provenance(self):
        record = self._record()
        fill = SyntheticFillMask(seed=1)
        base = make_conflicting(record, fill, k=3)[1]
        scorer = SeparableWordScorer(separable_weights(4))
        variant = make_distractor(record, scorer, self._cfg(), TEMPLATE, base_variant=base)
        assert variant.kind == VariantKind.CONFLICTING_DISTRACTED
        assert variant.variant_index == base.variant_index
        assert variant.expected_answer == base.expected_answer
        assert variant.context.startswith(base.context)
        assert variant.context.endswith(variant.distractor_text)

    def test_question_words_join_the_pool(self):
        record = self._record()
        cfg = self._cfg(include_question_words=True)
        weights = dict.fromkeys(POOL, 0.0)
        # Make one question word overwhelmingly attractive.
        weights["institute"] = 5.0
        scorer = SeparableWordScorer(weights)
        variant = make_distractor(record, scorer, cfg, TEMPLATE)
        assert "institute" in variant.distractor_text.split()

    def test_empty_pool_rejected(self):
        with pytest.raises(EmptyPool):
            DistractorConfig(pool_common_words=(), length_d=2, max_epochs=1)


class TestVariantPersistence:
    def test_round_trip(self, tmp_path):
        dataset = make_freeform_dataset(3)
        fill = SyntheticFillMask(seed=2)
        variants = []
        for rec in dataset:
            variants.extend(make_conflicting(rec, fill, k=4))
            variants.extend(make_irrelevant(rec, dataset, n=2, seed=3))
        path = tmp_path / "variants.jsonl"
        write_variants(variants, path)
        assert read_variants(path) == variants

    def test_schema_field_order_is_stable(self):
        variant = PerturbationVariant(
            source_id="r1",
            kind=VariantKind.DISTRACTED,
            variant_index=0,
            context="ctx words",
            expected_answer="ans",
            distractor_text="words",
            seed=7,
        )
        line = variant_to_json(variant)
        assert line.index('"source_id"') < line.index('"kind"') < line.index('"context"')
        assert variant_from_json(line) == variant
