"""LOOKAT: product-quantized key-cache compression with lookup-table attention."""

from .tensorio import AttentionDump, SynthSpec, generate_synthetic, load_dump, save_dump
from .pq import (
    Codebook,
    CompressedKeyCache,
    PQConfig,
    compression_stats,
    encode_keys,
    load_codebook,
    reconstruct,
    save_codebook,
    train_codebook,
)
from .adc import (
    AttentionOutput,
    LookupTableSet,
    adc_scores,
    build_luts,
    lookat_attention,
    reference_attention,
)
from .scalarquant import (
    ScalarQuantizedKeys,
    dequantize,
    quantize_keys,
    scalar_attention,
)
from .metrics import (
    FidelityReport,
    cosine_similarity,
    fidelity_report,
    kl_divergence,
    spearman_rho,
    top5_accuracy,
)
from .bench import ExperimentConfig, cost_model, run_experiment, run_length_sweep, run_proposition_sweep

__version__ = "0.1.0"

__all__ = [
    "AttentionDump",
    "SynthSpec",
    "generate_synthetic",
    "load_dump",
    "save_dump",
    "Codebook",
    "CompressedKeyCache",
    "PQConfig",
    "compression_stats",
    "encode_keys",
    "load_codebook",
    "reconstruct",
    "save_codebook",
    "train_codebook",
    "AttentionOutput",
    "LookupTableSet",
    "adc_scores",
    "build_luts",
    "lookat_attention",
    "reference_attention",
    "ScalarQuantizedKeys",
    "dequantize",
    "quantize_keys",
    "scalar_attention",
    "FidelityReport",
    "cosine_similarity",
    "fidelity_report",
    "kl_divergence",
    "spearman_rho",
    "top5_accuracy",
    "ExperimentConfig",
    "cost_model",
    "run_experiment",
    "run_length_sweep",
    "run_proposition_sweep",
]
