"""End-to-end smoke: the full pipeline against the live sidecar.

Model outputs are random-weight noise, so nothing semantic is asserted —
only that every stage completes and the report is structurally valid:
all twelve columns present, each value "-" or a percentage in [0, 100].
"""

import time

from ctxeval.cli import main


def run(config, command, *extra):
    code = main([command, "--config", str(config), *extra])
    assert code == 0, f"{command} exited {code}"


EXPECTED_COLUMNS = [
    "K.Am", "St.KK", "St.UK", "St.Avg", "Dist.KK", "Dist.UK",
    "Conf.KK", "Conf.UK", "Conf.Dist.KK", "Conf.Dist.UK", "Irr.KK", "Irr.UK",
]


def test_pipeline_against_sidecar(causal_server, smoke_dataset_file, tmp_path):
    url = causal_server.base_url
    word_file = tmp_path / "words.txt"
    word_file.write_text("zorp\nblik\nfraz\nquem\nwolt\nsnib\ndarv\nplon\n")
    out = tmp_path / "out"
    config = tmp_path / "run.toml"
    config.write_text(f"""
[run]
out = "{out}"
seed = 3
parallelism = 2

[dataset]
path = "{smoke_dataset_file}"
format = "generic_jsonl"
name = "smoke10"

[providers]
eval_model = "{url}"
eval_model_id = "sidecar-smoke"
fill_model = "{url}"
scorer = "{url}"
timeout_s = 60.0

[perturb]
conflicting_k = 10
irrelevant_n = 5

[perturb.distractor]
length = 2
max_epochs = 1
include_question_words = false
word_file = "{word_file}"

[eval]
max_answer_tokens = 6
""", encoding="utf-8")

    start = time.perf_counter()
    for command in ("ingest", "probe", "perturb", "evaluate"):
        run(config, command)
    elapsed = time.perf_counter() - start

    header, row = (out / "reports" / "report.csv").read_text().strip().split("\n")
    assert header.split(",") == EXPECTED_COLUMNS
    for column, value in zip(EXPECTED_COLUMNS, row.split(",")):
        if value == "-":
            continue
        number = float(value)
        assert 0.0 <= number <= 100.0, f"{column}={value} out of range"
    assert elapsed < 300, f"smoke pipeline took {elapsed:.1f}s"
    print(f"ACCEPTANCE PASS ({elapsed:.2f}s < 300s): sidecar end-to-end smoke")
