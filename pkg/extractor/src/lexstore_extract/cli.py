"""CLI: export a token store from a pretrained checkpoint.

    lexstore-export --model <id-or-path> --vocab words.txt --mode iso \
        --out en.iso.lxts
    lexstore-export --model <id-or-path> --vocab words.txt --mode aoc \
        --corpus sentences.txt --max-contexts 100 --max-len 512 --seed 7 \
        --out en.aoc.lxts
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from lexstore_extract.export import ExportJob, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexstore-export",
        description="Export layer-wise token embeddings to an LXTS store.",
    )
    parser.add_argument("--model", required=True,
                        help="checkpoint identifier or local path")
    parser.add_argument("--vocab", required=True, help="one word per line")
    parser.add_argument("--mode", required=True, choices=("iso", "aoc"))
    parser.add_argument("--corpus", help="one sentence per line (aoc only)")
    parser.add_argument("--max-contexts", type=int, default=100,
                        help="occurrence records per word (aoc)")
    parser.add_argument("--max-len", type=int, default=512)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--source-kind", choices=("mono", "multi"),
                        default="mono", help="recorded in the store header")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--out", required=True, help="output store path")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model=args.model,
        vocab=args.vocab,
        mode=args.mode,
        out=args.out,
        corpus=args.corpus,
        max_contexts=args.max_contexts,
        max_len=args.max_len,
        seed=args.seed,
        source_kind=args.source_kind,
        batch_size=args.batch_size,
    )
    try:
        run(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"mode": job.mode, "out": job.out}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
