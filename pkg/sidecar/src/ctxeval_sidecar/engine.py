"""Model loading and inference for the three provider operations.

A masked LM serves ``/fill_mask``; a generative model (causal or
encoder-decoder, detected from its config) serves ``/score`` and
``/generate``.  Decoding is always greedy and dropout is disabled, so
identical requests produce identical responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from transformers import (
    AutoConfig,
    AutoModelForCausalLM,
    AutoModelForMaskedLM,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
)

MASK_SENTINEL = "[MASK]"

DEFAULT_FILL_MODEL = "distilbert-base-uncased"
DEFAULT_GEN_MODEL = "t5-small"


class RequestError(ValueError):
    """Client-side mistake; maps to HTTP 400 with a wire error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class SidecarConfig:
    fill_model: str = DEFAULT_FILL_MODEL
    gen_model: str = DEFAULT_GEN_MODEL
    device: str = "cpu"
    port: int = 8011
    max_batch: int = 16

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class InferenceEngine:
    def __init__(self, config: SidecarConfig):
        self.config = config
        torch.set_num_threads(1)  # keeps small-tensor math bit-reproducible
        device = torch.device(config.device)

        self.fill_tokenizer = AutoTokenizer.from_pretrained(config.fill_model)
        self.fill_model = AutoModelForMaskedLM.from_pretrained(config.fill_model)
        self.fill_model.to(device).eval()

        gen_config = AutoConfig.from_pretrained(config.gen_model)
        self.gen_tokenizer = AutoTokenizer.from_pretrained(config.gen_model)
        self.is_seq2seq = bool(getattr(gen_config, "is_encoder_decoder", False))
        loader = AutoModelForSeq2SeqLM if self.is_seq2seq else AutoModelForCausalLM
        self.gen_model = loader.from_pretrained(config.gen_model)
        self.gen_model.to(device).eval()
        self.device = device

    # --- fill mask -------------------------------------------------------

    @torch.no_grad()
    def fill_mask(self, masked_text: str, top_k: int) -> list[dict]:
        count = masked_text.count(MASK_SENTINEL)
        if count != 1:
            raise RequestError(
                "bad_mask", f"expected exactly one {MASK_SENTINEL} sentinel, found {count}"
            )
        if top_k < 1:
            raise RequestError("protocol", f"top_k must be positive, got {top_k}")
        mask_token = self.fill_tokenizer.mask_token
        if mask_token is None:
            raise RequestError("protocol", "fill model has no mask token")
        text = masked_text.replace(MASK_SENTINEL, mask_token)
        encoded = self.fill_tokenizer(text, return_tensors="pt", truncation=True)
        encoded = {k: v.to(self.device) for k, v in encoded.items()}
        mask_positions = (
            encoded["input_ids"][0] == self.fill_tokenizer.mask_token_id
        ).nonzero(as_tuple=True)[0]
        if len(mask_positions) != 1:
            raise RequestError(
                "bad_mask",
                f"mask tokenizes to {len(mask_positions)} positions; need exactly 1",
            )
        logits = self.fill_model(**encoded).logits[0, mask_positions[0]]
        probs = torch.softmax(logits.double(), dim=-1)
        special = set(self.fill_tokenizer.all_special_ids or [])
        # Over-fetch so filtering special/blank tokens still leaves top_k.
        fetch = min(len(probs), top_k + len(special) + 8)
        top = torch.topk(probs, fetch)
        candidates = []
        for token_prob, token_id in zip(top.values.tolist(), top.indices.tolist()):
            if token_id in special:
                continue
            token_text = self.fill_tokenizer.decode([token_id]).strip()
            if not token_text or token_text == MASK_SENTINEL:
                continue
            candidates.append({"text": token_text, "score": token_prob})
            if len(candidates) == top_k:
                break
        return candidates

    # --- scoring ---------------------------------------------------------

    def _continuation_nll(self, prompt: str, continuation: str) -> float:
        """Mean negative log-likelihood per continuation token."""
        if self.is_seq2seq:
            enc = self.gen_tokenizer(prompt, return_tensors="pt", truncation=True)
            labels = self.gen_tokenizer(
                continuation, return_tensors="pt", truncation=True
            ).input_ids
            if labels.shape[1] == 0:
                raise RequestError("protocol", "continuation tokenizes to nothing")
            enc = {k: v.to(self.device) for k, v in enc.items()}
            out = self.gen_model(**enc, labels=labels.to(self.device))
            return float(out.loss)
        prompt_ids = self.gen_tokenizer(prompt, return_tensors="pt").input_ids
        cont_ids = self.gen_tokenizer(
            continuation, return_tensors="pt", add_special_tokens=False
        ).input_ids
        if cont_ids.shape[1] == 0:
            raise RequestError("protocol", "continuation tokenizes to nothing")
        input_ids = torch.cat([prompt_ids, cont_ids], dim=1).to(self.device)
        labels = input_ids.clone()
        labels[0, : prompt_ids.shape[1]] = -100
        out = self.gen_model(input_ids=input_ids, labels=labels)
        return float(out.loss)

    @torch.no_grad()
    def score_continuation(self, prompt: str, continuation: str) -> float:
        return math.exp(self._continuation_nll(prompt, continuation))

    @torch.no_grad()
    def score_options(self, prompt: str, options: list[str]) -> list[float]:
        if not options:
            raise RequestError("mode_mismatch", "options list must be non-empty")
        # Mean-per-token log-likelihood avoids favoring short options.
        logliks = [-self._continuation_nll(prompt, option) for option in options]
        peak = max(logliks)
        exps = [math.exp(x - peak) for x in logliks]
        total = sum(exps)
        return [e / total for e in exps]

    # --- generation ------------------------------------------------------

    @torch.no_grad()
    def generate(self, prompt: str, max_answer_tokens: int) -> str:
        if max_answer_tokens < 1:
            raise RequestError(
                "protocol", f"max_answer_tokens must be positive, got {max_answer_tokens}"
            )
        encoded = self.gen_tokenizer(prompt, return_tensors="pt", truncation=True)
        encoded = {k: v.to(self.device) for k, v in encoded.items()}
        pad_id = self.gen_tokenizer.pad_token_id
        if pad_id is None:
            pad_id = self.gen_tokenizer.eos_token_id
        output = self.gen_model.generate(
            **encoded,
            max_new_tokens=max_answer_tokens,
            do_sample=False,
            num_beams=1,
            pad_token_id=pad_id,
        )
        if self.is_seq2seq:
            answer_ids = output[0]
        else:
            answer_ids = output[0, encoded["input_ids"].shape[1]:]
        return self.gen_tokenizer.decode(answer_ids, skip_special_tokens=True).strip()
