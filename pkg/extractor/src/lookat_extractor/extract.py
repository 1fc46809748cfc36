"""Per-layer Q/K/V capture from a GPT-2 forward pass.

Hooks the fused qkv projection of one attention block, splits it into
per-head query/key/value tensors exactly as they enter attention scoring
(GPT-2 applies absolute position embeddings earlier, so no further
positional treatment is needed), and writes one LKAT dump per input text.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .dumpio import write_dump

DEFAULT_MODEL = "gpt2"  # 124M parameters


@dataclass
class ExtractionJob:
    model_name: str = DEFAULT_MODEL
    layer_index: int = 0
    texts: list = field(default_factory=list)  # strings or file paths
    text_labels: list = field(default_factory=list)
    max_tokens: int = 512
    output_dir: str = "."

    def __post_init__(self):
        if self.max_tokens < 1 or self.max_tokens > 1024:
            raise ValueError("max_tokens must be in [1, 1024]")


def load_model_and_tokenizer(model_name: str):
    """Resolve a pretrained model; raises with a clear message offline."""
    from transformers import AutoTokenizer, GPT2Model

    try:
        model = GPT2Model.from_pretrained(model_name)
        tokenizer = AutoTokenizer.from_pretrained(model_name)
    except OSError as exc:
        raise RuntimeError(
            f"could not load pretrained model {model_name!r}: {exc}. "
            "This usually means the model hub is unreachable (no network) "
            "and no local cache exists."
        ) from exc
    return model, tokenizer


def _resolve_text(item: str) -> str:
    if os.path.exists(item):
        with open(item, encoding="utf-8") as f:
            return f.read()
    return item


def capture_qkv(model, input_ids: torch.Tensor, layer_index: int):
    """One forward pass; returns (Q, K, V) as [H, L, d_k] float32 arrays
    plus the model's own attention probabilities [H, L, L] for the layer."""
    blocks = model.h
    if not 0 <= layer_index < len(blocks):
        raise ValueError(f"layer {layer_index} out of range (depth {len(blocks)})")
    attn = blocks[layer_index].attn
    num_heads = attn.num_heads
    head_dim = attn.head_dim
    captured = {}

    def hook(_module, _inputs, output):
        captured["qkv"] = output.detach()

    handle = attn.c_attn.register_forward_hook(hook)
    model.eval()
    # eager attention so output_attentions returns real probabilities
    model.config._attn_implementation = "eager"
    try:
        with torch.no_grad():
            out = model(input_ids, output_attentions=True)
    finally:
        handle.remove()

    qkv = captured["qkv"][0]  # [L, 3 * n_embd]
    q, k, v = qkv.split(num_heads * head_dim, dim=-1)

    def to_heads(t):
        l = t.shape[0]
        return (
            t.reshape(l, num_heads, head_dim)
            .permute(1, 0, 2)
            .to(torch.float32)
            .numpy()
        )

    probs = out.attentions[layer_index][0].to(torch.float32).numpy()
    return to_heads(q), to_heads(k), to_heads(v), probs


def extract(job: ExtractionJob, model=None, tokenizer=None) -> list:
    """Write one dump file per input text; returns the written paths."""
    if not job.texts:
        raise ValueError("no input texts")
    if model is None or tokenizer is None:
        model, tokenizer = load_model_and_tokenizer(job.model_name)
    os.makedirs(job.output_dir, exist_ok=True)
    paths = []
    for idx, item in enumerate(job.texts):
        text = _resolve_text(item)
        enc = tokenizer(
            text, return_tensors="pt", truncation=True, max_length=job.max_tokens
        )
        input_ids = enc["input_ids"]
        if input_ids.shape[1] == 0:
            raise ValueError(f"text {idx} tokenized to 0 tokens")
        q, k, v, _ = capture_qkv(model, input_ids, job.layer_index)
        label = (
            job.text_labels[idx]
            if idx < len(job.text_labels)
            else f"text{idx}"
        )
        tag = f"{job.model_name}-layer{job.layer_index}-{label}"
        path = os.path.join(job.output_dir, f"{tag}.lkat".replace("/", "_"))
        write_dump(path, q, k, v, source_tag=tag, causal=True)
        paths.append(path)
    return paths


def default_sample_texts() -> tuple:
    """The three bundled sample texts: prose, code, technical writing."""
    base = os.path.join(os.path.dirname(__file__), "sample_texts")
    labels = ("prose", "code", "technical")
    return tuple(os.path.join(base, f"{l}.txt") for l in labels), labels
