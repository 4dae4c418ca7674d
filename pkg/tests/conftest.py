import json

import pytest

from ctxeval.corpus import Dataset, QARecord


def make_freeform_dataset(n: int, name: str = "fixture") -> Dataset:
    """Distinct-context records whose gold answer occurs verbatim."""
    records = []
    for i in range(n):
        gold = f"Alina Rivers {i}"
        records.append(
            QARecord(
                id=f"r{i:03d}",
                question=f"Who leads institute {i}?",
                context=(
                    f"Institute {i} studies tidal rivers. {gold} leads institute {i} "
                    f"from the harbor campus."
                ),
                gold_answers=(gold,),
            )
        )
    return Dataset(name=name, records=tuple(records))


def make_mc_dataset(n: int, name: str = "fixture-mc") -> Dataset:
    """4-option MC records; the correct index cycles over all four slots."""
    metals = ("copper", "iron", "zinc", "tin")
    records = []
    for i in range(n):
        correct = i % 4
        options = tuple(f"{metal} {i}" for metal in metals)
        records.append(
            QARecord(
                id=f"m{i:03d}",
                question=f"Which sample conducted best in trial {i}?",
                context=f"Trial {i} showed that {options[correct]} conducted best.",
                gold_answers=(options[correct],),
                options=options,
                correct_option_index=correct,
            )
        )
    return Dataset(name=name, records=tuple(records))


@pytest.fixture
def freeform_dataset() -> Dataset:
    return make_freeform_dataset(6)


@pytest.fixture
def mc_dataset() -> Dataset:
    return make_mc_dataset(8)


@pytest.fixture
def squad_file(tmp_path):
    payload = {
        "data": [
            {
                "title": "Harbors",
                "paragraphs": [
                    {
                        "context": "The old harbor was rebuilt in 1902 by Mira Voss.",
                        "qas": [
                            {
                                "id": "q1",
                                "question": "When was the old harbor rebuilt?",
                                "answers": [{"text": "1902"}, {"text": "1902"}],
                            },
                            {
                                "id": "q2",
                                "question": "Who rebuilt the old harbor?",
                                "answers": [{"text": "Mira Voss"}],
                            },
                        ],
                    }
                ],
            }
        ]
    }
    path = tmp_path / "squad_tiny.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def generic_jsonl_file(tmp_path):
    lines = [
        {
            "id": "g1",
            "question": "What spans the Verre strait?",
            "context": "A cantilever bridge spans the Verre strait.",
            "answers": ["A cantilever bridge", "cantilever bridge"],
        },
        {
            "id": "g2",
            "question": "Which grain grows on the north shore?",
            "context": "Barley grows on the north shore.",
            "answers": ["Barley"],
        },
    ]
    path = tmp_path / "generic_tiny.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines), encoding="utf-8")
    return path


@pytest.fixture
def mcqa_jsonl_file(tmp_path):
    lines = [
        {
            "id": "mc1",
            "question": "Which metal conducted best?",
            "context": "The bench test showed silver conducted best.",
            "options": ["gold", "silver", "nickel", "brass"],
            "correct": 1,
        },
        {
            "id": "mc2",
            "question": "Which solvent evaporated first?",
            "context": "In the fume hood, acetone evaporated first.",
            "options": ["acetone", "water", "glycerol", "toluene"],
            "correct": 0,
        },
    ]
    path = tmp_path / "mcqa_tiny.jsonl"
    path.write_text("\n".join(json.dumps(x) for x in lines), encoding="utf-8")
    return path
