import pytest

from ctxeval.corpus import dataset_fingerprint
from ctxeval.prompts import PromptTemplate
from ctxeval.providers import (
    EchoModel,
    GenerateQuery,
    ParametricModel,
    Provider,
    ProviderUnavailable,
    build_echo_model,
    build_parametric_model,
)
from ctxeval.split import (
    argmax_lowest_index,
    load_partition,
    partition_to_json,
    probe,
    save_partition,
)

from conftest import make_freeform_dataset, make_mc_dataset

TEMPLATE = PromptTemplate()


def test_context_echo_knows_nothing_closed_book(freeform_dataset):
    model = build_echo_model(freeform_dataset, TEMPLATE)
    partition = probe(freeform_dataset, model, TEMPLATE)
    assert partition.knowledge_amount == 0.0
    assert partition.known_ids == frozenset()
    assert partition.unknown_ids == {r.id for r in freeform_dataset}
    assert set(partition.closed_book_answers.values()) == {"UNKNOWN"}


def test_parametric_three_of_ten_records():
    dataset = make_freeform_dataset(10)
    beliefs = {}
    for i, rec in enumerate(dataset):
        beliefs[rec.question] = rec.canonical_answer if i < 3 else "wrong"
    model = ParametricModel(beliefs, template=TEMPLATE)
    partition = probe(dataset, model, TEMPLATE)
    assert partition.knowledge_amount == 0.300
    assert len(partition.known_ids) == 3


def test_mc_uniform_probabilities_break_ties_to_lowest_index():
    dataset = make_mc_dataset(8)  # correct indices cycle 0,1,2,3,...
    # Echo over MC options scores uniformly on an empty context.
    model = EchoModel({r.question: [] for r in dataset}, template=TEMPLATE)
    partition = probe(dataset, model, TEMPLATE)
    expected_known = {r.id for r in dataset if r.correct_option_index == 0}
    assert partition.known_ids == expected_known
    assert set(partition.closed_book_answers.values()) == {0}


def test_knowledge_amount_rounds_to_three_decimals():
    dataset = make_freeform_dataset(3)
    beliefs = {dataset.records[0].question: dataset.records[0].canonical_answer}
    model = ParametricModel(beliefs, template=TEMPLATE)
    partition = probe(dataset, model, TEMPLATE)
    assert partition.knowledge_amount == 0.333


def test_partition_is_exhaustive_and_disjoint(freeform_dataset):
    model = build_parametric_model(freeform_dataset, TEMPLATE, known_fraction=0.5, seed=2)
    partition = probe(freeform_dataset, model, TEMPLATE)
    ids = {r.id for r in freeform_dataset}
    assert partition.known_ids | partition.unknown_ids == ids
    assert partition.known_ids & partition.unknown_ids == frozenset()


def test_reprobe_is_identical(freeform_dataset):
    model = build_parametric_model(freeform_dataset, TEMPLATE, known_fraction=0.5, seed=2)
    fp = dataset_fingerprint(freeform_dataset)
    first = probe(freeform_dataset, model, TEMPLATE, dataset_fp=fp)
    second = probe(freeform_dataset, model, TEMPLATE, dataset_fp=fp)
    assert first == second
    assert partition_to_json(first) == partition_to_json(second)


def test_parallel_probe_matches_serial(freeform_dataset):
    model = build_parametric_model(freeform_dataset, TEMPLATE, known_fraction=0.5, seed=2)
    serial = probe(freeform_dataset, model, TEMPLATE, parallelism=1)
    parallel = probe(freeform_dataset, model, TEMPLATE, parallelism=4)
    assert serial == parallel


def test_provider_failure_propagates(freeform_dataset):
    class Down(Provider):
        def generate(self, query: GenerateQuery):
            raise ProviderUnavailable("down")

    with pytest.raises(ProviderUnavailable):
        probe(freeform_dataset, Down(), TEMPLATE)


def test_partition_round_trip(tmp_path, freeform_dataset):
    model = build_parametric_model(freeform_dataset, TEMPLATE, known_fraction=0.3, seed=9)
    partition = probe(
        freeform_dataset, model, TEMPLATE,
        dataset_fp=dataset_fingerprint(freeform_dataset),
    )
    path = tmp_path / "partition.json"
    save_partition(partition, path)
    assert load_partition(path) == partition


def test_argmax_lowest_index():
    assert argmax_lowest_index([0.25, 0.25, 0.25, 0.25]) == 0
    assert argmax_lowest_index([0.1, 0.4, 0.4, 0.1]) == 1
    assert argmax_lowest_index([0.0, 0.0, 0.0, 1.0]) == 3
