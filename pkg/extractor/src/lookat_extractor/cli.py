"""CLI: extract per-layer Q/K/V dumps from a GPT-2 forward pass."""

from __future__ import annotations

import argparse
import sys

from .extract import DEFAULT_MODEL, ExtractionJob, default_sample_texts, extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lookat-extract",
        description="Write LKAT attention dumps from a pretrained model",
    )
    parser.add_argument("--model", default=DEFAULT_MODEL)
    parser.add_argument("--layer", type=int, default=0)
    parser.add_argument(
        "--text",
        nargs="*",
        default=None,
        help="input strings or file paths; defaults to the bundled samples",
    )
    parser.add_argument("--max-tokens", type=int, default=512)
    parser.add_argument("--out", default=".")
    args = parser.parse_args(argv)

    if args.text:
        texts, labels = list(args.text), []
    else:
        paths, names = default_sample_texts()
        texts, labels = list(paths), list(names)
    job = ExtractionJob(
        model_name=args.model,
        layer_index=args.layer,
        texts=texts,
        text_labels=labels,
        max_tokens=args.max_tokens,
        output_dir=args.out,
    )
    for path in extract(job):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
