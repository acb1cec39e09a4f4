"""Command-line entry point.

Single evaluations distill a matrix on the fly from the given store(s) and
config id, print a JSON summary to stdout, and optionally write it to
--out. `run-grid` evaluates a whole spec file; `plot-data` reshapes result
tables into long-format CSV series.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from lexprobe import cka as cka_mod
from lexprobe import eval_mono, eval_xling, grid
from lexprobe.configs import parse_config_id, parse_context_policy
from lexprobe.distill import (
    build_matrix,
    load_matrix_binary,
    save_matrix_binary,
    save_matrix_text,
)
from lexprobe.errors import LexprobeError
from lexprobe.store import Vocabulary, open_store


def _add_store_args(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--store", required=required, help="token store path")
    parser.add_argument("--store-iso", help="ISO store for AOC back-off")
    parser.add_argument("--vocab", required=required, help="vocabulary file")
    parser.add_argument("--config", required=required,
                        help="config id, e.g. mono.aoc-100.nospec.avg_le8")


def _add_tgt_store_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tgt-store", required=True, help="target-side store")
    parser.add_argument("--tgt-store-iso", help="target ISO store for back-off")
    parser.add_argument("--tgt-vocab", required=True, help="target vocabulary file")


def _distill(store_path, iso_path, vocab_path, config_text):
    config = parse_config_id(config_text)
    vocab = Vocabulary.from_file(vocab_path)
    with open_store(store_path) as store:
        if config.config.context.kind == "aoc":
            if not iso_path:
                raise LexprobeError("AOC configs need --store-iso for back-off")
            with open_store(iso_path) as backoff:
                return build_matrix(vocab, store, config.config, backoff)
        return build_matrix(vocab, store, config.config)


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _cmd_distill(args) -> int:
    matrix = _distill(args.store, args.store_iso, args.vocab, args.config)
    if args.format in ("binary", "both"):
        save_matrix_binary(matrix, args.out)
    if args.format in ("text", "both"):
        suffix = ".txt" if args.format == "both" else ""
        save_matrix_text(matrix, args.out + suffix)
    backed = int(matrix.backed_off.sum()) if matrix.backed_off is not None else 0
    print(json.dumps({"words": len(matrix.vocabulary), "dim": matrix.dim,
                      "backed_off": backed, "out": args.out}))
    return 0


def _cmd_eval_lsim(args) -> int:
    matrix = _distill(args.store, args.store_iso, args.vocab, args.config)
    res = eval_mono.eval_lsim(matrix, eval_mono.load_similarity_pairs(args.data))
    _emit({"task": "lsim", "config": args.config, "spearman_rho": res.rho,
           "coverage": res.coverage, "covered": res.covered, "total": res.total},
          args.out)
    return 0


def _cmd_eval_wa(args) -> int:
    matrix = _distill(args.store, args.store_iso, args.vocab, args.config)
    res = eval_mono.eval_analogy(matrix, eval_mono.load_analogy_questions(args.data))
    _emit({"task": "wa", "config": args.config, "p_at_1": res.p_at_1,
           "coverage": res.coverage, "evaluable": res.evaluable,
           "total": res.total, "per_category": res.per_category}, args.out)
    return 0


def _cmd_eval_bli(args) -> int:
    src = _distill(args.store, args.store_iso, args.vocab, args.config)
    tgt = _distill(args.tgt_store, args.tgt_store_iso, args.tgt_vocab, args.config)
    train = eval_xling.load_lexicon(args.train, "train")
    test = eval_xling.load_lexicon(args.test, "test")
    eval_xling.check_disjoint(train, test)
    alignment = eval_xling.align_spaces(src, tgt, train)
    res = eval_xling.eval_bli(src, tgt, alignment.w, test)
    _emit({"task": "bli", "config": args.config, "mrr": res.mrr,
           "coverage": res.coverage, "resolvable": res.resolvable,
           "total": res.total, "train_pairs_used": alignment.pairs_used,
           "train_pairs_dropped": alignment.pairs_dropped}, args.out)
    return 0


def _cmd_eval_clir(args) -> int:
    src = _distill(args.store, args.store_iso, args.vocab, args.config)
    tgt = _distill(args.tgt_store, args.tgt_store_iso, args.tgt_vocab, args.config)
    train = eval_xling.load_lexicon(args.train, "train")
    alignment = eval_xling.align_spaces(src, tgt, train)
    collection = eval_xling.load_collection(args.collection)
    res = eval_xling.eval_clir(collection, src, tgt, alignment.w)
    _emit({"task": "clir", "config": args.config, "map": res.map_score,
           "evaluated": res.evaluated, "skipped": res.skipped,
           "per_query": res.per_query}, args.out)
    return 0


def _cmd_relp_export(args) -> int:
    matrix = _distill(args.store, args.store_iso, args.vocab, args.config)
    pairs = eval_mono.load_relation_pairs(args.data)
    res = eval_mono.export_relp_features(matrix, pairs, args.out)
    print(json.dumps({"exported": res.exported, "skipped": res.skipped,
                      "dim": res.dim, "out": res.path}))
    return 0


def _cmd_relp_baseline(args) -> int:
    features, labels = eval_mono.load_relp_features(args.features)
    res = eval_mono.train_relation_baseline(
        features, labels, folds=args.folds, seed=args.seed, runs=args.runs
    )
    _emit({"task": "relp", "micro_f1_mean": res.micro_f1_mean,
           "micro_f1_std": res.micro_f1_std, "per_run": res.per_run,
           "folds": res.folds}, args.out)
    return 0


def _cmd_cka_self(args) -> int:
    _source, mode, policy = parse_context_policy(args.config)
    vocab = Vocabulary.from_file(args.vocab)
    words = list(vocab)
    if args.max_words is not None:
        words = words[: args.max_words]
    with open_store(args.store) as store:
        backoff = open_store(args.store_iso) if args.store_iso else None
        try:
            result = cka_mod.self_similarity(store, words, mode, policy, backoff)
        finally:
            if backoff is not None:
                backoff.close()
    result.to_json(args.out + ".json")
    result.to_csv(args.out + ".csv")
    print(json.dumps({"task": "cka-self", "words": result.word_count,
                      "skipped": result.skipped, "out": args.out + ".json"}))
    return 0


def _cmd_cka_biling(args) -> int:
    _source, mode, policy = parse_context_policy(args.config)
    with open_store(args.store) as store_src, open_store(args.tgt_store) as store_tgt:
        backoff_src = open_store(args.store_iso) if args.store_iso else None
        backoff_tgt = open_store(args.tgt_store_iso) if args.tgt_store_iso else None
        try:
            if args.random_pairs:
                lexicon = eval_xling.load_lexicon(args.pairs) if args.pairs else None
                result = cka_mod.random_pair_baseline(
                    store_src, store_tgt, args.random_pairs, args.seed, mode, policy,
                    source_words=lexicon.source_words if lexicon else None,
                    backoff_src=backoff_src, backoff_tgt=backoff_tgt,
                )
            else:
                lexicon = eval_xling.load_lexicon(args.pairs)
                pairs = [
                    (src, tgt)
                    for src, golds in lexicon.entries
                    for tgt in sorted(golds)
                ]
                result = cka_mod.bilingual_correspondence(
                    store_src, store_tgt, pairs, mode, policy,
                    backoff_src, backoff_tgt,
                )
        finally:
            for handle in (backoff_src, backoff_tgt):
                if handle is not None:
                    handle.close()
    result.to_json(args.out + ".json")
    result.to_csv(args.out + ".csv")
    print(json.dumps({"task": "cka-biling", "pairing": result.pairing,
                      "pairs": result.word_count, "skipped": result.skipped,
                      "out": args.out + ".json"}))
    return 0


def _cmd_run_grid(args) -> int:
    spec = grid.parse_grid_spec(args.spec)
    if args.workers is not None:
        spec.workers = args.workers
    if args.out:
        spec.out = args.out
    rows = grid.run_grid(spec)
    failures = sum(1 for r in rows if r.status != "ok")
    print(json.dumps({"rows": len(rows), "failures": failures, "out": spec.out}))
    return 0 if failures == 0 else 3


def _cmd_plot_data(args) -> int:
    rows = grid.load_results(args.results)
    results_dir = args.results_dir or None
    if results_dir is None:
        import os

        results_dir = os.path.dirname(os.path.abspath(args.results))
    series = grid.emit_plot_data(rows, args.select, results_dir)
    grid.write_plot_csv(series, args.out)
    print(json.dumps({"rows": len(series), "out": args.out}))
    return 0


def _cmd_matrix_info(args) -> int:
    matrix = load_matrix_binary(args.matrix)
    backed = int(matrix.backed_off.sum()) if matrix.backed_off is not None else 0
    norms = np.linalg.norm(matrix.data.astype(np.float64), axis=1)
    _emit({"words": len(matrix.vocabulary), "dim": matrix.dim,
           "backed_off": backed, "provenance": matrix.provenance,
           "mean_row_norm": float(norms.mean())}, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexprobe",
        description="Distill type-level word vectors from token stores and "
                    "evaluate them on lexical tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distill", help="distill a matrix from a store")
    _add_store_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "text", "both"), default="binary")
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("eval-lsim", help="lexical semantic similarity")
    _add_store_args(p)
    p.add_argument("--data", required=True, help="word1<TAB>word2<TAB>score file")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_lsim)

    p = sub.add_parser("eval-wa", help="word analogy")
    _add_store_args(p)
    p.add_argument("--data", required=True, help="analogy file or directory")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_wa)

    p = sub.add_parser("eval-bli", help="bilingual lexicon induction")
    _add_store_args(p)
    _add_tgt_store_args(p)
    p.add_argument("--train", required=True, help="training lexicon")
    p.add_argument("--test", required=True, help="test lexicon")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_bli)

    p = sub.add_parser("eval-clir", help="cross-lingual document retrieval")
    _add_store_args(p)
    _add_tgt_store_args(p)
    p.add_argument("--train", required=True, help="training lexicon for the mapping")
    p.add_argument("--collection", required=True, help="collection directory")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval_clir)

    p = sub.add_parser("relp-export", help="export relation-pair features")
    _add_store_args(p)
    p.add_argument("--data", required=True, help="word1<TAB>word2<TAB>label file")
    p.add_argument("--out", required=True, help="LXRF output path")
    p.set_defaults(func=_cmd_relp_export)

    p = sub.add_parser("relp-baseline", help="cross-validated relation classifier")
    p.add_argument("--features", required=True, help="LXRF feature file")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_relp_baseline)

    p = sub.add_parser("cka-self", help="layer-by-layer self-similarity")
    p.add_argument("--store", required=True)
    p.add_argument("--store-iso")
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", required=True,
                   help="3-segment id, e.g. mono.aoc-100.nospec")
    p.add_argument("--max-words", type=int)
    p.add_argument("--out", required=True, help="output prefix (.json/.csv added)")
    p.set_defaults(func=_cmd_cka_self)

    p = sub.add_parser("cka-biling", help="bilingual layer correspondence")
    p.add_argument("--store", required=True)
    p.add_argument("--store-iso")
    p.add_argument("--tgt-store", required=True)
    p.add_argument("--tgt-store-iso")
    p.add_argument("--pairs", help="translation lexicon (source<TAB>target)")
    p.add_argument("--random-pairs", type=int,
                   help="sample this many random pairings instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", required=True,
                   help="3-segment id, e.g. mono.aoc-100.nospec")
    p.add_argument("--out", required=True, help="output prefix (.json/.csv added)")
    p.set_defaults(func=_cmd_cka_biling)

    p = sub.add_parser("run-grid", help="run every (config, task) cell of a spec")
    p.add_argument("--spec", required=True, help="grid spec file")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="override the spec's output directory")
    p.set_defaults(func=_cmd_run_grid)

    p = sub.add_parser("plot-data", help="long-format CSV series from results")
    p.add_argument("--results", required=True, help="results.json or results.csv")
    p.add_argument("--results-dir", help="directory holding artifacts/")
    p.add_argument("--select", required=True, help="e.g. task=lsim,config=...")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot_data)

    p = sub.add_parser("matrix-info", help="inspect a binary matrix file")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=_cmd_matrix_info)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LexprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
