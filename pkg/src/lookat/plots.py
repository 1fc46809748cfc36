"""Figure rendering for experiment reports.

Every eval run can drop a small set of matplotlib figures next to the
JSON/CSV output: per-method metric bars, the compression-quality Pareto
view, and length-sweep curves.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

plt.rcParams.update(
    {
        "figure.dpi": 120,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "axes.spines.top": False,
        "axes.spines.right": False,
    }
)


def save_summary_figure(doc: dict, path) -> None:
    """2x2 panel: cosine, KL (log), Spearman rho, and the Pareto scatter."""
    rows = doc.get("summary", [])
    if not rows:
        return
    methods = [r["method"] for r in rows]
    cos = [r["metrics"]["cosine_sim"] for r in rows]
    cos_std = [r["metrics"]["cosine_sim_std"] for r in rows]
    kl = [max(r["metrics"]["kl_div"], 1e-6) for r in rows]
    rho = [r["metrics"]["spearman_rho"] for r in rows]
    rho_std = [r["metrics"]["spearman_rho_std"] for r in rows]
    ratio = [r["compression"]["ratio"] for r in rows]

    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    ax = axes[0, 0]
    ax.bar(methods, cos, yerr=cos_std, color="#4878cf")
    ax.set_ylabel("cosine similarity")
    ax.set_ylim(0, 1.05)
    ax = axes[0, 1]
    ax.bar(methods, kl, color="#d65f5f")
    ax.set_yscale("log")
    ax.set_ylabel("KL divergence (nats)")
    ax = axes[1, 0]
    ax.bar(methods, rho, yerr=rho_std, color="#6acc65")
    ax.set_ylabel("Spearman rho")
    ax.set_ylim(0, 1.05)
    ax = axes[1, 1]
    colors = ["#d65f5f" if m.startswith("lookat") else "#4878cf" for m in methods]
    ax.scatter(ratio, cos, c=colors)
    for m, x, y in zip(methods, ratio, cos):
        ax.annotate(m, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("compression ratio")
    ax.set_ylabel("cosine similarity")
    for a in axes.flat[:3]:
        a.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_length_sweep_figure(doc: dict, path) -> None:
    """Cosine / KL / rho vs sequence length, one line per method."""
    rows = doc.get("rows", [])
    if not rows:
        return
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for method in methods:
        mrows = sorted(
            (r for r in rows if r["method"] == method), key=lambda r: r["seq_len"]
        )
        ls = [r["seq_len"] for r in mrows]
        for ax, key, label in zip(
            axes,
            ("cosine_sim", "kl_div", "spearman_rho"),
            ("cosine similarity", "KL divergence (nats)", "Spearman rho"),
        ):
            ax.plot(ls, [r["metrics"][key] for r in mrows], marker="o", label=method)
            ax.set_xscale("log", base=2)
            ax.set_xlabel("sequence length")
            ax.set_ylabel(label)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_proposition_figure(doc: dict, path) -> None:
    """(1 - rho) against d_k/(m K) on log-log axes."""
    rows = doc.get("rows", [])
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for m in sorted({r["m"] for r in rows}):
        mrows = sorted(
            (r for r in rows if r["m"] == m), key=lambda r: r["inverse_size"]
        )
        ax.plot(
            [r["inverse_size"] for r in mrows],
            [max(1.0 - r["mean_rho"], 1e-8) for r in mrows],
            marker="o",
            label=f"m={m}",
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("d_k / (m K)")
    ax.set_ylabel("1 - mean rho")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
