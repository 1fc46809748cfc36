import numpy as np
import pytest
import torch
from transformers import GPT2Config, GPT2Model

from lookat import load_dump, reference_attention
from lookat_extractor import ExtractionJob, capture_qkv, default_sample_texts, extract


class ByteTokenizer:
    """Deterministic stand-in tokenizer: one token per input byte."""

    def __init__(self, vocab_size=256):
        self.vocab_size = vocab_size

    def __call__(self, text, return_tensors="pt", truncation=True, max_length=512):
        ids = [b % self.vocab_size for b in text.encode("utf-8")[:max_length]]
        return {"input_ids": torch.tensor([ids], dtype=torch.long)}


@pytest.fixture(scope="module")
def small_model():
    torch.manual_seed(0)
    config = GPT2Config(
        n_layer=2, n_head=12, n_embd=768, vocab_size=256, n_positions=128
    )
    model = GPT2Model(config)
    model.eval()
    return model


@pytest.fixture(scope="module")
def tokenizer():
    return ByteTokenizer()


def job_for(tmp_path, texts, **kw):
    return ExtractionJob(
        model_name="random-gpt2", texts=texts, output_dir=str(tmp_path),
        max_tokens=kw.pop("max_tokens", 96), **kw
    )


def test_extract_writes_loadable_dumps(tmp_path, small_model, tokenizer):
    paths = extract(job_for(tmp_path, ["hello world, this is a test sentence."]),
                    model=small_model, tokenizer=tokenizer)
    assert len(paths) == 1
    dump = load_dump(paths[0])
    assert dump.head_count == 12
    assert dump.head_dim == 64
    assert dump.causal is True
    assert dump.seq_len == len("hello world, this is a test sentence.".encode())
    assert "random-gpt2-layer0" in dump.source_tag


def test_extraction_deterministic(tmp_path, small_model, tokenizer):
    text = "the same text twice must give bitwise-identical dumps"
    p1 = extract(job_for(tmp_path / "a", [text]), model=small_model, tokenizer=tokenizer)
    p2 = extract(job_for(tmp_path / "b", [text]), model=small_model, tokenizer=tokenizer)
    assert open(p1[0], "rb").read() == open(p2[0], "rb").read()


def test_reference_attention_matches_model_probabilities(tmp_path, small_model, tokenizer):
    text = "attention probabilities must agree between the dump and the model"
    for layer in (0, 1):
        enc = tokenizer(text)
        q, k, v, probs = capture_qkv(small_model, enc["input_ids"], layer)
        paths = extract(job_for(tmp_path / f"l{layer}", [text], layer_index=layer),
                        model=small_model, tokenizer=tokenizer)
        dump = load_dump(paths[0])
        out = reference_attention(dump)
        mae = float(np.mean(np.abs(out.weights - probs)))
        assert mae < 1e-3


def test_bundled_sample_texts_exist():
    paths, labels = default_sample_texts()
    assert labels == ("prose", "code", "technical")
    for p in paths:
        assert open(p, encoding="utf-8").read().strip()


def test_layer_out_of_range(tmp_path, small_model, tokenizer):
    with pytest.raises(ValueError, match="out of range"):
        extract(job_for(tmp_path, ["text"], layer_index=7),
                model=small_model, tokenizer=tokenizer)


def test_empty_text_rejected(tmp_path, small_model, tokenizer):
    with pytest.raises(ValueError, match="0 tokens"):
        extract(job_for(tmp_path, [""]), model=small_model, tokenizer=tokenizer)


def test_max_tokens_validation():
    with pytest.raises(ValueError):
        ExtractionJob(texts=["x"], max_tokens=2048)


def _pretrained_or_skip():
    from lookat_extractor import load_model_and_tokenizer

    try:
        return load_model_and_tokenizer("gpt2")
    except RuntimeError as exc:
        pytest.skip(f"pretrained GPT-2 unavailable: {exc}")


def test_pretrained_table_reproduction(tmp_path):
    """Table-band check against published LOOKAT rows; needs real GPT-2."""
    model, tok = _pretrained_or_skip()
    import json

    from lookat import bench

    paths, labels = default_sample_texts()
    job = ExtractionJob(texts=list(paths), text_labels=list(labels),
                        max_tokens=512, output_dir=str(tmp_path))
    dumps = extract(job, model=model, tokenizer=tok)
    config = bench.ExperimentConfig.from_json({
        "inputs": dumps,
        "methods": list(bench.DEFAULT_METHODS),
        "output_path": str(tmp_path / "report.json"),
    })
    doc = bench.run_experiment(config)
    by_method = {s["method"]: s["metrics"] for s in doc["summary"]}
    published = {  # (cosine, rho) per LOOKAT row
        "lookat-2": (0.957, 0.959),
        "lookat-4": (0.950, 0.957),
        "lookat-8": (0.953, 0.960),
        "lookat-16": (0.947, 0.961),
    }
    for method, (cos, rho) in published.items():
        assert abs(by_method[method]["cosine_sim"] - cos) <= 0.05
        assert abs(by_method[method]["spearman_rho"] - rho) <= 0.05
    # rho ordering: scalar baselines above PQ configurations
    assert by_method["int8"]["spearman_rho"] >= by_method["int4"]["spearman_rho"]
    assert by_method["int4"]["spearman_rho"] >= max(
        by_method[m]["spearman_rho"] for m in published
    )
    print(json.dumps(by_method, indent=2))
