"""Command-line entry point.

Subcommands: synth, train, encode, eval, sweep-prop, cost. The eval path
writes a JSON report, a CSV projection of the summary table, and (unless
disabled) rendered figures alongside them.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys

import numpy as np

from . import bench, pq, plots
from .tensorio import SynthSpec, generate_synthetic, load_dump, save_dump


def _synth_spec_from_json(path_or_inline: str) -> SynthSpec:
    if os.path.exists(path_or_inline):
        with open(path_or_inline) as f:
            doc = json.load(f)
    else:
        doc = json.loads(path_or_inline)
    return SynthSpec(**doc)


def _int_list(text: str):
    return [int(x) for x in text.replace(",", " ").split()]


def cmd_synth(args) -> int:
    spec = _synth_spec_from_json(args.spec)
    save_dump(generate_synthetic(spec), args.out)
    print(args.out)
    return 0


def cmd_train(args) -> int:
    if os.path.exists(args.input) and not args.input.endswith(".json"):
        dump = load_dump(args.input)
    else:
        dump = generate_synthetic(_synth_spec_from_json(args.input))
    cfg = pq.PQConfig(
        num_subspaces=args.m,
        num_centroids=args.K,
        kmeans_iters=args.iters,
        kmeans_seed=args.seed,
    )
    codebook = pq.train_codebook(dump.keys.reshape(-1, dump.head_dim), cfg)
    pq.save_codebook(codebook, args.out)
    stats = pq.compression_stats(dump.head_dim, args.m, args.K)
    print(
        f"trained m={args.m} K={args.K} on {codebook.trained_on} vectors; "
        f"{stats['ratio']:g}x compression, codebook {stats['codebook_bytes']} B"
    )
    return 0


def cmd_encode(args) -> int:
    dump = load_dump(args.input)
    codebook = pq.load_codebook(args.codebook)
    cache = pq.encode_keys(dump.keys, codebook)
    h, l, m = cache.codes.shape
    with open(args.out, "wb") as f:
        f.write(b"LKCD")
        f.write(struct.pack("<III", h, l, m))
        f.write(cache.codes.tobytes())
    print(f"{args.out}: {h}x{l}x{m} codes ({cache.codes.nbytes} B)")
    return 0


def _emit(doc: dict, output_path: str, figures: bool, figure_fn) -> None:
    bench.write_report(doc, output_path)
    base, _ = os.path.splitext(output_path)
    if doc.get("summary"):
        bench.write_summary_csv(doc, base + ".csv")
    if figures and figure_fn is not None:
        figure_fn(doc, base + ".png")


def cmd_eval(args) -> int:
    with open(args.config) as f:
        config = bench.ExperimentConfig.from_json(json.load(f))
    if config.seq_lengths:
        doc = bench.run_length_sweep(config)
        _emit(doc, config.output_path, not args.no_figures, plots.save_length_sweep_figure)
    else:
        doc = bench.run_experiment(config)
        _emit(doc, config.output_path, not args.no_figures, plots.save_summary_figure)
    print(config.output_path)
    if doc.get("failed_cells", 0) > 0:
        print(f"{doc['failed_cells']} grid cell(s) failed", file=sys.stderr)
        return 2
    return 0


def cmd_sweep_prop(args) -> int:
    base = SynthSpec(
        H=args.H,
        L=args.L,
        d_k=args.dk,
        distribution="isotropic-gaussian",
        seed=args.seed,
    )
    doc = bench.run_proposition_sweep(base, _int_list(args.m_list), _int_list(args.k_list))
    if args.out:
        _emit(doc, args.out, not args.no_figures, plots.save_proposition_figure)
    print(f"{'m':>4} {'K':>4} {'mean_rho':>10} {'d_k/(mK)':>10}")
    for row in doc["rows"]:
        print(
            f"{row['m']:>4} {row['K']:>4} {row['mean_rho']:>10.5f} "
            f"{row['inverse_size']:>10.4f}"
        )
    print(f"pearson r[(1-rho) vs d_k/(mK)] = {doc['pearson_r_quality_vs_inverse_size']:.3f}")
    return 0


def cmd_cost(args) -> int:
    result = bench.cost_model(args.L, args.dk, args.m, args.K)
    for key in ("standard", "lookat", "lookat_full_mac"):
        r = result[key]
        print(
            f"{r.method:>16}: {r.flops_per_query:>8} FLOPs/query, "
            f"{r.bytes_loaded_per_query:>8} B loaded/query  ({r.assumptions})"
        )
    print(f"bandwidth ratio: {result['bandwidth_ratio']:g}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lookat",
        description="Product-quantized key-cache attention toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic attention dump")
    p.add_argument("--spec", required=True, help="JSON file or inline JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a codebook from a dump")
    p.add_argument("--input", required=True, help="dump file or synth-spec JSON")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--K", type=int, default=256)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("encode", help="encode a dump's keys with a codebook")
    p.add_argument("--input", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("eval", help="run a configured experiment or length sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep-prop", help="rank-correlation sweep over (m, K)")
    p.add_argument("--dk", type=int, default=64)
    p.add_argument("--m-list", default="2,4,8")
    p.add_argument("--k-list", default="16,64,256")
    p.add_argument("--H", type=int, default=4)
    p.add_argument("--L", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_sweep_prop)

    p = sub.add_parser("cost", help="analytic FLOP/bandwidth cost model")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--dk", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--K", type=int, default=256)
    p.set_defaults(fn=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
