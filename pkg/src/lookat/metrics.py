"""Fidelity metrics comparing an approximate attention run to the reference.

Four views of the damage done by compression: output direction (cosine),
attention mass (KL), attention ordering (Spearman rho), and salient-token
retention (top-5 overlap). All means run over every head and every query
row that has enough unmasked positions, identically for both inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import rankdata

from .adc import AttentionOutput

KL_EPS = 1e-10


@dataclass(frozen=True)
class FidelityReport:
    cosine_sim: float
    kl_div: float
    spearman_rho: float
    top5_acc: float
    cosine_sim_std: float = 0.0
    kl_div_std: float = 0.0
    spearman_rho_std: float = 0.0
    top5_acc_std: float = 0.0
    skipped_rho_rows: int = 0
    short_top5_rows: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _check_shapes(ref: AttentionOutput, approx: AttentionOutput):
    if ref.weights.shape != approx.weights.shape:
        raise ValueError(
            f"shape mismatch: {ref.weights.shape} vs {approx.weights.shape}"
        )
    if ref.causal != approx.causal:
        raise ValueError("causal flags differ between compared outputs")


def _row_lengths(out: AttentionOutput) -> np.ndarray:
    l_q, l_k = out.weights.shape[1], out.weights.shape[2]
    if out.causal:
        return np.minimum(np.arange(1, l_q + 1), l_k)
    return np.full(l_q, l_k)


def cosine_similarity(ref: AttentionOutput, approx: AttentionOutput) -> float:
    """Mean cosine of output vectors over (head, query position)."""
    _check_shapes(ref, approx)
    a = ref.output.astype(np.float64)
    b = approx.output.astype(np.float64)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    dot = np.sum(a * b, axis=-1)
    denom = na * nb
    cos = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), 0.0)
    return float(cos.mean())


def kl_divergence(ref: AttentionOutput, approx: AttentionOutput) -> float:
    """Mean per-row KL(ref || approx) in nats over unmasked positions.

    Both rows are floored at KL_EPS and renormalized first; causal rows
    contain exact zeros that would otherwise blow up the log.
    """
    _check_shapes(ref, approx)
    h, l_q, _ = ref.weights.shape
    lengths = _row_lengths(ref)
    total = 0.0
    count = 0
    for q in range(l_q):
        n = lengths[q]
        p = np.maximum(ref.weights[:, q, :n].astype(np.float64), KL_EPS)
        p /= p.sum(axis=-1, keepdims=True)
        r = np.maximum(approx.weights[:, q, :n].astype(np.float64), KL_EPS)
        r /= r.sum(axis=-1, keepdims=True)
        total += float(np.sum(p * np.log(p / r)))
        count += h
    return max(total / count, 0.0)


def _rank_rows(rows: np.ndarray) -> np.ndarray:
    return rankdata(rows, axis=-1, method="average")


def spearman_rho(ref: AttentionOutput, approx: AttentionOutput) -> float:
    """Mean rank correlation of attention rows over (head, query row)."""
    return _spearman_with_tally(ref, approx)[0]


def _spearman_with_tally(ref: AttentionOutput, approx: AttentionOutput):
    """Spearman mean plus a tally of skipped rows.

    Rows with < 2 unmasked entries are skipped. A constant row pairs to
    rho = 1 if both rows are constant, otherwise the row is skipped and
    tallied.
    """
    _check_shapes(ref, approx)
    h, l_q, _ = ref.weights.shape
    lengths = _row_lengths(ref)
    vals = []
    skipped = 0
    for q in range(l_q):
        n = lengths[q]
        if n < 2:
            continue
        ra = _rank_rows(ref.weights[:, q, :n].astype(np.float64))
        rb = _rank_rows(approx.weights[:, q, :n].astype(np.float64))
        am = ra - ra.mean(axis=-1, keepdims=True)
        bm = rb - rb.mean(axis=-1, keepdims=True)
        va = np.sum(am * am, axis=-1)
        vb = np.sum(bm * bm, axis=-1)
        ok = (va > 0) & (vb > 0)
        num = np.sum(am * bm, axis=-1)
        vals.extend((num[ok] / np.sqrt(va[ok] * vb[ok])).tolist())
        both_const = (va == 0) & (vb == 0)
        vals.extend([1.0] * int(both_const.sum()))
        skipped += int(((va == 0) ^ (vb == 0)).sum())
    if not vals:
        raise ValueError("no rows with >= 2 unmasked entries")
    return float(np.mean(vals)), skipped


def top5_accuracy(ref: AttentionOutput, approx: AttentionOutput) -> float:
    """Mean top-5 overlap fraction over (head, query row)."""
    return _top5_with_tally(ref, approx)[0]


def _top5_with_tally(ref: AttentionOutput, approx: AttentionOutput):
    """Top-5 overlap mean plus a tally of short rows.

    Rows shorter than 5 unmasked positions use top-min(5, n) with a
    matching denominator. Ties at the cutoff break toward the lower token
    index in both inputs.
    """
    _check_shapes(ref, approx)
    h, l_q, _ = ref.weights.shape
    lengths = _row_lengths(ref)
    vals = []
    short = 0
    for q in range(l_q):
        n = int(lengths[q])
        top = min(5, n)
        if top < 5:
            short += h
        ta = np.argsort(-ref.weights[:, q, :n], axis=-1, kind="stable")[:, :top]
        tb = np.argsort(-approx.weights[:, q, :n], axis=-1, kind="stable")[:, :top]
        hits = np.array(
            [np.isin(ta[head], tb[head]).sum() for head in range(h)]
        )
        vals.extend((hits / top).tolist())
    return float(np.mean(vals)), short


def fidelity_report(ref: AttentionOutput, approx: AttentionOutput) -> FidelityReport:
    """All four metrics for one (reference, approximation) pair."""
    rho, skipped = _spearman_with_tally(ref, approx)
    top5, short = _top5_with_tally(ref, approx)
    return FidelityReport(
        cosine_sim=cosine_similarity(ref, approx),
        kl_div=kl_divergence(ref, approx),
        spearman_rho=rho,
        top5_acc=top5,
        skipped_rho_rows=skipped,
        short_top5_rows=short,
    )


def aggregate_reports(reports: list) -> FidelityReport:
    """Cross-sample mean and population standard deviation."""
    if not reports:
        raise ValueError("no reports to aggregate")

    def col(name):
        return np.array([getattr(r, name) for r in reports], dtype=np.float64)

    means = {k: float(col(k).mean()) for k in
             ("cosine_sim", "kl_div", "spearman_rho", "top5_acc")}
    stds = {f"{k}_std": float(col(k).std()) for k in
            ("cosine_sim", "kl_div", "spearman_rho", "top5_acc")}
    return FidelityReport(
        **means,
        **stds,
        skipped_rho_rows=sum(r.skipped_rho_rows for r in reports),
        short_top5_rows=sum(r.short_top5_rows for r in reports),
    )
