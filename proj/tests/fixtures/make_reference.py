#!/usr/bin/env python3
"""Regenerate fixtures/reference/* and fixtures/tokenizers/gpt2/oracle.jsonl.

Tiny randomly initialized HF models are converted with tools/convert/unpack_convert.py and
their full logits recorded, so the C++ forward pass can be checked against the source
implementation without downloading a checkpoint.
"""

import json
import os
import sys

import numpy as np
import torch

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, os.path.join(ROOT, "tools", "convert"))
import unpack_convert as uc  # noqa: E402

OUT = os.path.join(ROOT, "fixtures", "reference")


def perturb(model, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if p.dim() == 1:
                base = 1.0 if ("ln" in name or "layernorm" in name or "layer_norm" in name) and name.endswith("weight") else 0.0
                p.copy_(base + 0.2 * torch.randn(p.shape, generator=g))
            else:
                p.copy_(torch.randn(p.shape, generator=g) / p.shape[-1] ** 0.5)


def sequences(seed, vocab, bos):
    rng = np.random.default_rng(seed)
    out = [[bos] + rng.integers(0, 256, size=n).tolist() for n in (1, 5, 12, 31)]
    out.append(rng.integers(0, vocab, size=9).tolist())
    return out


def build(name, model, seed):
    model.eval()
    perturb(model, seed)
    out = os.path.join(OUT, name)
    report = uc.write_model(out, model, uc.byte_level_vocab(), [], f"random:{name}", f"seed{seed}")
    token_lists = sequences(seed, model.config.vocab_size, 256)
    report["fixtures"] = uc.write_fixtures(out, token_lists, uc.reference_logits(model, token_lists, False), False)
    with open(os.path.join(out, "conversion_report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    print(name, report["tensor_count"], "tensors")


def tiny_models():
    from transformers import GPT2Config, GPT2LMHeadModel, GPTNeoXConfig, GPTNeoXForCausalLM

    torch.manual_seed(0)
    g = GPT2Config(vocab_size=257, n_positions=32, n_embd=16, n_layer=2, n_head=2, n_inner=32,
                   activation_function="gelu_new", bos_token_id=256, eos_token_id=256,
                   resid_pdrop=0, embd_pdrop=0, attn_pdrop=0)
    build("gpt2_tiny", GPT2LMHeadModel(g), 1)
    for name, parallel, seed in (("neox_tiny", True, 2), ("neox_seq_tiny", False, 3)):
        c = GPTNeoXConfig(vocab_size=257, hidden_size=16, num_hidden_layers=2, num_attention_heads=2,
                          intermediate_size=32, rotary_pct=0.5, rotary_emb_base=10000, max_position_embeddings=32,
                          hidden_act="gelu", use_parallel_residual=parallel, bos_token_id=256, eos_token_id=256,
                          tie_word_embeddings=False, attention_dropout=0.0, hidden_dropout=0.0)
        build(name, GPTNeoXForCausalLM(c), seed)


TOKENIZER_CASES = [
    "",
    " Alice",
    "Hello world",
    "When Mary and John went to the store, John gave a drink to",
    "It's 3:45pm; we'll   meet at\tthe café — ok?",
    "日本語のテキスト and emoji \U0001F600\U0001F44D",
    "line one\nline two\n\n  indented",
    "<|endoftext|> is literal text here",
    "numbers 1234567 and 3.14159, mixed123abc",
    "    leading spaces and trailing   ",
    "don't DON'T they're I've you'd we'll",
    "https://example.com/path?query=1&x=y",
]


def tokenizer_oracle():
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers

    tdir = os.path.join(ROOT, "fixtures", "tokenizers", "gpt2")
    vocab = {}
    for line in open(os.path.join(tdir, "vocab"), encoding="utf-8"):
        tok, i = line.rstrip("\n").rsplit(" ", 1)
        vocab[tok] = int(i)
    merges = [tuple(l.rstrip("\n").split(" ")) for l in open(os.path.join(tdir, "merges"), encoding="utf-8")
              if l.strip() and not l.startswith("#version")]
    tok = Tokenizer(models.BPE(vocab, merges))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    with open(os.path.join(tdir, "oracle.jsonl"), "w", encoding="utf-8") as f:
        for text in TOKENIZER_CASES:
            ids = tok.encode(text).ids
            f.write(json.dumps({"text": text, "ids": ids}, ensure_ascii=False) + "\n")
    print("tokenizer oracle:", len(TOKENIZER_CASES), "cases")


if __name__ == "__main__":
    tiny_models()
    tokenizer_oracle()
