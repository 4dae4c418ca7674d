"""Offline fixtures: tiny randomly-initialized models with a shared
word-level tokenizer, plus running sidecar servers for both generative
model families.

The contract checks are content-agnostic (shape, ordering, normalization,
determinism), so random weights are sufficient and keep the suite fully
offline and fast on CPU.
"""

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")

import json
import re

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import (
    BertConfig,
    BertForMaskedLM,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from ctxeval_sidecar import InferenceEngine, SidecarConfig, SidecarServer

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "[EOS]"]

SEED_SENTENCES = [
    "[MASK] is the capital of France.",
    "The largest planet is [MASK].",
    "question: What is the capital of France?. context: Paris is the capital of France..",
    "Paris Berlin Madrid Rome",
    "question answer context harbor bridge river north south",
    "who what when where leads built spans grows conducted trial",
    "zorp blik fraz quem wolt snib darv plon",
]


def smoke_records() -> list[dict]:
    subjects = [
        ("Mira", "harbor"), ("Orin", "bridge"), ("Tessa", "mill"),
        ("Calder", "dam"), ("Ingrid", "tower"), ("Bram", "canal"),
        ("Vera", "quay"), ("Soren", "dock"), ("Lena", "pier"), ("Otto", "wharf"),
    ]
    records = []
    for i, (name, thing) in enumerate(subjects):
        records.append(
            {
                "id": f"s{i:02d}",
                "question": f"Who built the {thing}?",
                "context": f"The {thing} was built by {name} long ago.",
                "answers": [name],
            }
        )
    return records


def _word_tokens(text: str) -> list[str]:
    return re.findall(r"\w+|[^\w\s]+", text)


def build_vocab() -> dict[str, int]:
    words = []
    for sentence in SEED_SENTENCES:
        words.extend(_word_tokens(sentence))
    for record in smoke_records():
        for field in ("question", "context"):
            words.extend(_word_tokens(record[field]))
        words.extend(record["answers"])
    vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for word in words:
        if word not in vocab:
            vocab[word] = len(vocab)
    return vocab


def save_tokenizer(vocab: dict[str, int], directory) -> PreTrainedTokenizerFast:
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer_file = str(directory / "wordlevel.json")
    tok.save(tokenizer_file)
    fast = PreTrainedTokenizerFast(
        tokenizer_file=tokenizer_file,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        eos_token="[EOS]",
    )
    return fast


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny-models")
    vocab = build_vocab()
    tokenizer = save_tokenizer(vocab, root)
    size = len(vocab)

    fill_dir = root / "fill"
    torch.manual_seed(0)
    fill = BertForMaskedLM(
        BertConfig(
            vocab_size=size, hidden_size=32, num_hidden_layers=2,
            num_attention_heads=2, intermediate_size=64,
            max_position_embeddings=256,
            pad_token_id=vocab["[PAD]"],
        )
    )
    fill.save_pretrained(fill_dir)
    tokenizer.save_pretrained(fill_dir)

    causal_dir = root / "causal"
    torch.manual_seed(1)
    causal = GPT2LMHeadModel(
        GPT2Config(
            vocab_size=size, n_embd=32, n_layer=2, n_head=2, n_positions=256,
            bos_token_id=vocab["[EOS]"], eos_token_id=vocab["[EOS]"],
        )
    )
    causal.save_pretrained(causal_dir)
    tokenizer.save_pretrained(causal_dir)

    seq2seq_dir = root / "seq2seq"
    torch.manual_seed(2)
    seq2seq = T5ForConditionalGeneration(
        T5Config(
            vocab_size=size, d_model=32, num_layers=2, num_heads=2,
            d_ff=64, d_kv=16,
            pad_token_id=vocab["[PAD]"], eos_token_id=vocab["[EOS]"],
            decoder_start_token_id=vocab["[PAD]"],
        )
    )
    seq2seq.save_pretrained(seq2seq_dir)
    tokenizer.save_pretrained(seq2seq_dir)

    return {"fill": fill_dir, "causal": causal_dir, "seq2seq": seq2seq_dir}


def _start_server(model_dirs, gen_key):
    engine = InferenceEngine(
        SidecarConfig(
            fill_model=str(model_dirs["fill"]),
            gen_model=str(model_dirs[gen_key]),
            max_batch=32,
        )
    )
    server = SidecarServer(engine, port=0)
    server.start()
    return server


@pytest.fixture(scope="session")
def causal_server(model_dirs):
    server = _start_server(model_dirs, "causal")
    yield server
    server.stop()


@pytest.fixture(scope="session")
def seq2seq_server(model_dirs):
    server = _start_server(model_dirs, "seq2seq")
    yield server
    server.stop()


@pytest.fixture
def smoke_dataset_file(tmp_path):
    path = tmp_path / "smoke.jsonl"
    path.write_text(
        "\n".join(json.dumps(r) for r in smoke_records()) + "\n", encoding="utf-8"
    )
    return path
