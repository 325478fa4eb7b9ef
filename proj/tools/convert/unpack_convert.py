#!/usr/bin/env python3
"""Convert a GPT-2 or GPT-NeoX (Pythia) checkpoint into an unpack model directory.

    unpack_convert.py convert --source gpt2 --out models/gpt2
    unpack_convert.py convert --source EleutherAI/pythia-160m-deduped --revision step143000 --out models/p160

Writes manifest, weights.bin, vocab, merges, fixtures/logits_ref.{manifest,bin} and
conversion_report.json.
"""

import argparse
import json
import os
import sys
import zlib

import numpy as np

ALIGN = 64

FIXTURE_PROMPTS = [
    "When Mary and John went to the store, John gave a drink to",
    "The quick brown fox jumps over the lazy dog.",
    "In 1492, Columbus sailed across the Atlantic",
    "def add(a, b):\n    return a + b",
    "Paris is the capital of",
    "After the lunch, Alice and Bob went to the garden. Bob gave a ring to",
    "1, 2, 3, 4, 5,",
    "She said that the weather would be",
    "Friends Kevin and Laura found a bone at the school. Kevin gave it to",
    "The meaning of life is",
]


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {b: chr(c) for b, c in zip(bs, cs)}


def write_container(manifest_path, blob_path, fields, tensors):
    """fields: list of (key, value); tensors: list of (name, ndarray)."""
    lines = ["# unpack container manifest"]
    lines += [f"{k} = {v}" for k, v in fields]
    offset = 0
    with open(blob_path, "wb") as blob:
        for name, arr in tensors:
            data = np.ascontiguousarray(arr, dtype="<f4")
            raw = data.tobytes()
            blob.write(raw)
            shape = ",".join(str(d) for d in data.shape)
            crc = zlib.crc32(raw) & 0xFFFFFFFF
            lines.append(f"tensor name={name} shape={shape} dtype=f32 offset={offset} nbytes={len(raw)} crc32=0x{crc:08x}")
            offset += len(raw)
            pad = (ALIGN - offset % ALIGN) % ALIGN
            blob.write(b"\0" * pad)
            offset += pad
    with open(manifest_path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_container(manifest_path, blob_path):
    fields, tensors = {}, {}
    with open(blob_path, "rb") as f:
        blob = f.read()
    with open(manifest_path) as f:
        lines = f.read().splitlines()
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("tensor "):
            kv = dict(item.split("=", 1) for item in line[7:].split())
            shape = tuple(int(d) for d in kv["shape"].split(",")) if kv["shape"] else ()
            off, nbytes = int(kv["offset"]), int(kv["nbytes"])
            raw = blob[off:off + nbytes]
            if zlib.crc32(raw) & 0xFFFFFFFF != int(kv["crc32"], 16):
                raise ValueError(f"checksum mismatch for {kv['name']}")
            tensors[kv["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape)
        else:
            k, v = line.split("=", 1)
            fields[k.strip()] = v.strip()
    return fields, tensors


def write_tokenizer(out, vocab, merges):
    """vocab: token (byte-unicode form) -> id; merges: list of (left, right)."""
    with open(os.path.join(out, "vocab"), "w", encoding="utf-8") as f:
        for tok, i in sorted(vocab.items(), key=lambda kv: kv[1]):
            if any(ch.isspace() for ch in tok):
                raise ValueError(f"token {tok!r} contains whitespace")
            f.write(f"{tok} {i}\n")
    with open(os.path.join(out, "merges"), "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")


def byte_level_vocab():
    enc = bytes_to_unicode()
    vocab = {enc[b]: b for b in range(256)}
    vocab["<|endoftext|>"] = 256
    return vocab


def tokenizer_tables(tokenizer):
    """vocab/merges from a fast tokenizer's serialized BPE model."""
    spec = json.loads(tokenizer.backend_tokenizer.to_str())
    model = spec["model"]
    vocab = dict(model["vocab"])
    for added in spec.get("added_tokens", []):
        vocab.setdefault(added["content"], added["id"])
    merges = []
    for m in model["merges"]:
        merges.append(tuple(m.split(" ", 1)) if isinstance(m, str) else tuple(m))
    return vocab, merges


def t(x):
    return x.detach().to("cpu").float().numpy()


def gpt2_tensors(model):
    cfg = model.config
    d, H = cfg.n_embd, cfg.n_head
    dh = d // H
    sd = model.state_dict()
    out = [("embed.weight", t(sd["transformer.wte.weight"])), ("pos_embed.weight", t(sd["transformer.wpe.weight"]))]
    for l in range(cfg.n_layer):
        p = f"transformer.h.{l}."
        q = f"blocks.{l}."
        w = t(sd[p + "attn.c_attn.weight"])  # [d, 3d], x @ w
        b = t(sd[p + "attn.c_attn.bias"])
        out += [(q + "ln1.weight", t(sd[p + "ln_1.weight"])), (q + "ln1.bias", t(sd[p + "ln_1.bias"]))]
        for i, name in enumerate("QKV"):
            wi = w[:, i * d:(i + 1) * d].reshape(d, H, dh).transpose(1, 0, 2)
            out.append((q + f"attn.W_{name}", wi))
        for i, name in enumerate("QKV"):
            out.append((q + f"attn.b_{name}", b[i * d:(i + 1) * d].reshape(H, dh)))
        out.append((q + "attn.W_O", t(sd[p + "attn.c_proj.weight"]).reshape(H, dh, d)))
        out.append((q + "attn.b_O", t(sd[p + "attn.c_proj.bias"])))
        out += [(q + "ln2.weight", t(sd[p + "ln_2.weight"])), (q + "ln2.bias", t(sd[p + "ln_2.bias"]))]
        out += [(q + "mlp.W_in", t(sd[p + "mlp.c_fc.weight"])), (q + "mlp.b_in", t(sd[p + "mlp.c_fc.bias"]))]
        out += [(q + "mlp.W_out", t(sd[p + "mlp.c_proj.weight"])), (q + "mlp.b_out", t(sd[p + "mlp.c_proj.bias"]))]
    out += [("ln_final.weight", t(sd["transformer.ln_f.weight"])), ("ln_final.bias", t(sd["transformer.ln_f.bias"]))]
    tied = model.lm_head.weight.data_ptr() == model.transformer.wte.weight.data_ptr()
    if not tied:
        out.append(("unembed.weight", t(sd["lm_head.weight"])))
    act = {"gelu_new": "gelu", "gelu_pytorch_tanh": "gelu", "gelu": "gelu_erf", "relu": "relu"}[cfg.activation_function]
    fields = dict(n_layers=cfg.n_layer, n_heads=H, d_model=d, d_head=dh, d_mlp=dict(out)["blocks.0.mlp.W_in"].shape[1],
                  vocab_size=cfg.vocab_size, n_ctx=cfg.n_positions, block_layout="sequential",
                  position_scheme="learned", activation=act, ln_epsilon=repr(float(cfg.layer_norm_epsilon)),
                  tied_embeddings="true" if tied else "false",
                  bos_token_id=cfg.bos_token_id if cfg.bos_token_id is not None else -1)
    return fields, out


def rope_settings(cfg):
    params = getattr(cfg, "rope_parameters", None) or {}
    frac = params.get("partial_rotary_factor", getattr(cfg, "rotary_pct", None))
    base = params.get("rope_theta", getattr(cfg, "rotary_emb_base", None))
    if frac is None or base is None:
        raise ValueError("cannot determine rotary settings from the checkpoint config")
    return float(frac), float(base)


def neox_tensors(model):
    cfg = model.config
    d, H = cfg.hidden_size, cfg.num_attention_heads
    dh = d // H
    sd = model.state_dict()
    out = [("embed.weight", t(sd["gpt_neox.embed_in.weight"]))]
    for l in range(cfg.num_hidden_layers):
        p = f"gpt_neox.layers.{l}."
        q = f"blocks.{l}."
        w = t(sd[p + "attention.query_key_value.weight"]).reshape(H, 3, dh, d)  # per head: q, k, v rows
        b = t(sd[p + "attention.query_key_value.bias"]).reshape(H, 3, dh)
        out += [(q + "ln1.weight", t(sd[p + "input_layernorm.weight"])), (q + "ln1.bias", t(sd[p + "input_layernorm.bias"]))]
        for i, name in enumerate("QKV"):
            out.append((q + f"attn.W_{name}", w[:, i].transpose(0, 2, 1)))
        for i, name in enumerate("QKV"):
            out.append((q + f"attn.b_{name}", b[:, i]))
        wo = t(sd[p + "attention.dense.weight"])  # [d, H*dh]
        out.append((q + "attn.W_O", wo.T.reshape(H, dh, d)))
        out.append((q + "attn.b_O", t(sd[p + "attention.dense.bias"])))
        out += [(q + "ln2.weight", t(sd[p + "post_attention_layernorm.weight"])),
                (q + "ln2.bias", t(sd[p + "post_attention_layernorm.bias"]))]
        out += [(q + "mlp.W_in", t(sd[p + "mlp.dense_h_to_4h.weight"]).T), (q + "mlp.b_in", t(sd[p + "mlp.dense_h_to_4h.bias"]))]
        out += [(q + "mlp.W_out", t(sd[p + "mlp.dense_4h_to_h.weight"]).T), (q + "mlp.b_out", t(sd[p + "mlp.dense_4h_to_h.bias"]))]
    out += [("ln_final.weight", t(sd["gpt_neox.final_layer_norm.weight"])),
            ("ln_final.bias", t(sd["gpt_neox.final_layer_norm.bias"]))]
    out.append(("unembed.weight", t(sd["embed_out.weight"])))
    frac, base = rope_settings(cfg)
    act = {"gelu": "gelu_erf", "gelu_new": "gelu", "relu": "relu"}[cfg.hidden_act]
    fields = dict(n_layers=cfg.num_hidden_layers, n_heads=H, d_model=d, d_head=dh, d_mlp=cfg.intermediate_size,
                  vocab_size=out[0][1].shape[0], n_ctx=cfg.max_position_embeddings,
                  block_layout="parallel" if cfg.use_parallel_residual else "sequential",
                  position_scheme="rotary", activation=act, ln_epsilon=repr(float(cfg.layer_norm_eps)),
                  tied_embeddings="false", bos_token_id=cfg.bos_token_id if cfg.bos_token_id is not None else -1,
                  rotary_fraction=repr(frac), rotary_base=repr(base))
    return fields, out


def model_tensors(model):
    kind = model.config.model_type
    if kind == "gpt2":
        return gpt2_tensors(model)
    if kind == "gpt_neox":
        return neox_tensors(model)
    raise ValueError(f"unsupported architecture '{kind}' (gpt2, gpt_neox)")


FIELD_ORDER = ["n_layers", "n_heads", "d_model", "d_head", "d_mlp", "vocab_size", "n_ctx", "block_layout",
               "position_scheme", "activation", "ln_epsilon", "tied_embeddings", "bos_token_id", "rotary_fraction",
               "rotary_base"]


def write_model(out, model, vocab, merges, source, revision=None):
    os.makedirs(out, exist_ok=True)
    fields, tensors = model_tensors(model)
    names = [n for n, _ in tensors]
    if len(names) != len(set(names)):
        raise ValueError("duplicate tensor name")
    manifest_fields = [("format", "unpack-model/1")] + [(k, fields[k]) for k in FIELD_ORDER if k in fields]
    manifest_fields += [("source", source), ("revision", revision or "default")]
    write_container(os.path.join(out, "manifest"), os.path.join(out, "weights.bin"), manifest_fields, tensors)
    write_tokenizer(out, vocab, merges)
    return {"source": source, "revision": revision or "default", "tensor_count": len(tensors),
            "shapes": {n: list(a.shape) for n, a in tensors}}


def reference_logits(model, token_lists, final_only):
    import torch
    out = []
    with torch.no_grad():
        for ids in token_lists:
            logits = model(torch.tensor([ids])).logits[0].double().numpy()
            out.append(logits[-1:] if final_only else logits)
    return out


def write_fixtures(out, token_lists, logits, final_only):
    fdir = os.path.join(out, "fixtures")
    os.makedirs(fdir, exist_ok=True)
    tensors = []
    for i, (ids, lg) in enumerate(zip(token_lists, logits)):
        tensors.append((f"prompt{i}.tokens", np.asarray(ids, dtype=np.float32)))
        tensors.append((f"prompt{i}.logits", lg.astype(np.float32)))
    fields = [("format", "unpack-logits/1"), ("prompts", len(token_lists)), ("rows", "final" if final_only else "all")]
    write_container(os.path.join(fdir, "logits_ref.manifest"), os.path.join(fdir, "logits_ref.bin"), fields, tensors)
    return [{"tokens": list(map(int, ids)), "crc32": f"{zlib.crc32(np.asarray(lg, '<f4').tobytes()) & 0xFFFFFFFF:08x}",
             "argmax": int(np.argmax(lg[-1]))} for ids, lg in zip(token_lists, logits)]


def convert(source, out, revision=None):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    torch.manual_seed(0)
    model = AutoModelForCausalLM.from_pretrained(source, revision=revision, torch_dtype=torch.float32)
    model.eval()
    tok = AutoTokenizer.from_pretrained(source, revision=revision)
    vocab, merges = tokenizer_tables(tok)
    report = write_model(out, model, vocab, merges, source, revision)
    bos = model.config.bos_token_id
    token_lists = [([bos] if bos is not None else []) + tok.encode(p) for p in FIXTURE_PROMPTS]
    report["fixtures"] = write_fixtures(out, token_lists, reference_logits(model, token_lists, True), True)
    with open(os.path.join(out, "conversion_report.json"), "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    return report


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    c = sub.add_parser("convert")
    c.add_argument("--source", required=True, help="hub id or local checkpoint directory")
    c.add_argument("--out", required=True)
    c.add_argument("--revision", default=None)
    args = ap.parse_args(argv)
    report = convert(args.source, args.out, args.revision)
    print(json.dumps({k: v for k, v in report.items() if k != "shapes"}, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
