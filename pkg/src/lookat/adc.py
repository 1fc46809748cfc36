"""Lookup-table attention scoring over product-quantized keys.

For each query the per-subspace inner products with every centroid are
precomputed once; a key's score is then the sum of m table entries picked
by its codes. The score is exactly the dot product of the query with the
reconstructed key, so the only approximation error is quantization error.
A full-precision reference attention with identical masking and scaling
lives here as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pq import Codebook, CompressedKeyCache
from .tensorio import AttentionDump


@dataclass(frozen=True)
class LookupTableSet:
    """Per-query table of query-subvector x centroid inner products, [m, K]."""

    tables: np.ndarray


@dataclass(frozen=True)
class AttentionOutput:
    scores: np.ndarray   # [H, L_q, L_k] pre-softmax logits (masked = -inf)
    weights: np.ndarray  # [H, L_q, L_k] softmax weights (masked = 0)
    output: np.ndarray   # [H, L_q, d_k]
    causal: bool = True


def build_luts(query: np.ndarray, codebook: Codebook) -> LookupTableSet:
    """Precompute LUT[i, c] = <query subvector i, centroid c of subspace i>."""
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (codebook.head_dim,):
        raise ValueError(
            f"query shape {query.shape} incompatible with codebook d_k={codebook.head_dim}"
        )
    m, _, d_sub = codebook.centroids.shape
    sub = query.reshape(m, d_sub)
    tables = np.einsum("id,ikd->ik", sub, codebook.centroids)
    return LookupTableSet(tables=tables)


def adc_scores(
    luts: LookupTableSet, cache: CompressedKeyCache, head: int
) -> np.ndarray:
    """Score one query against all L compressed keys of one head."""
    if not 0 <= head < cache.codes.shape[0]:
        raise IndexError(f"head {head} out of range")
    codes = cache.codes[head]  # [L, m]
    m = codes.shape[1]
    # fixed ascending subspace order keeps the accumulation deterministic
    scores = np.zeros(codes.shape[0], dtype=np.float32)
    for i in range(m):
        scores += luts.tables[i][codes[:, i]]
    return scores


def _all_luts(queries: np.ndarray, codebook: Codebook) -> np.ndarray:
    """LUTs for a [H, L, d_k] query tensor -> [H, L, m, K]."""
    h, l, _ = queries.shape
    m, _, d_sub = codebook.centroids.shape
    sub = queries.reshape(h, l, m, d_sub).astype(np.float64)
    return np.einsum("hlid,ikd->hlik", sub, codebook.centroids.astype(np.float64))


def _finish_attention(
    scores: np.ndarray, values: np.ndarray, d_k: int, causal: bool
) -> AttentionOutput:
    """Scale, mask, softmax (max-subtracted), and weight the values."""
    logits = scores.astype(np.float64) / np.sqrt(d_k)
    l_q, l_k = logits.shape[1], logits.shape[2]
    if causal:
        mask = np.triu(np.ones((l_q, l_k), dtype=bool), k=1)
        logits = np.where(mask[None], -np.inf, logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(shifted)
    w /= w.sum(axis=-1, keepdims=True)
    out = np.einsum("hqk,hkd->hqd", w, values.astype(np.float64))
    return AttentionOutput(
        scores=logits.astype(np.float32) * np.sqrt(d_k),
        weights=w.astype(np.float32),
        output=out.astype(np.float32),
        causal=causal,
    )


def lookat_attention(
    dump: AttentionDump, cache: CompressedKeyCache, codebook: Codebook
) -> AttentionOutput:
    """Full attention with ADC scoring; values stay full precision."""
    h, l, d_k = dump.queries.shape
    if cache.codes.shape[:2] != (h, l):
        raise ValueError("compressed cache shape does not match dump")
    if codebook.head_dim != d_k:
        raise ValueError("codebook d_k does not match dump")
    luts = _all_luts(dump.queries, codebook)  # [H, L, m, K]
    m = codebook.num_subspaces
    scores = np.zeros((h, l, l), dtype=np.float64)
    for i in range(m):
        # gather per subspace: scores[h, q, k] += LUT[h, q, i, codes[h, k, i]]
        sel = np.take_along_axis(
            luts[:, :, i, :],
            cache.codes[:, None, :, i].astype(np.intp),
            axis=2,
        )
        scores += sel
    return _finish_attention(scores, dump.values, d_k, dump.causal)


def reference_attention(dump: AttentionDump) -> AttentionOutput:
    """Exact softmax(Q K^T / sqrt(d_k)) V with the same masking conventions."""
    scores = np.einsum(
        "hqd,hkd->hqk",
        dump.queries.astype(np.float64),
        dump.keys.astype(np.float64),
    )
    return _finish_attention(scores, dump.values, dump.head_dim, dump.causal)
