"""Attention-dump extraction from pretrained GPT-2 models."""

from .dumpio import write_dump
from .extract import (
    DEFAULT_MODEL,
    ExtractionJob,
    capture_qkv,
    default_sample_texts,
    extract,
    load_model_and_tokenizer,
)

__all__ = [
    "DEFAULT_MODEL",
    "ExtractionJob",
    "capture_qkv",
    "default_sample_texts",
    "extract",
    "load_model_and_tokenizer",
    "write_dump",
]
