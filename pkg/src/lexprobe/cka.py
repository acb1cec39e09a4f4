"""Layer-geometry analyses built on linear CKA.

Three experiments: self-similarity (layer x layer CKA over the same words),
bilingual layer correspondence (per-layer CKA over translation pairs from
two encoders), and a seeded random-pairing baseline for the latter.
Layer matrices are stacked single-layer vectors, never averaged schemes.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from lexprobe.configs import ContextMode, SpecialPolicy
from lexprobe.distill import aggregate_contexts
from lexprobe.errors import (
    InsufficientCoverageError,
    InsufficientVocabularyError,
    WordNotFoundError,
)
from lexprobe.numerics import linear_cka, spearman
from lexprobe.store import StoreHandle

PREPROCESSING = "l2_normalize_rows,center_columns"


@dataclass
class CkaResult:
    """CKA scores over layer pairs (self) or layers (bilingual)."""

    axis_a: list
    axis_b: list
    scores: np.ndarray
    pairing: str  # "self" | "translation" | "random"
    word_count: int
    preprocessing: str = PREPROCESSING
    seed: int | None = None
    skipped: int = 0

    def to_json(self, path: str | os.PathLike) -> None:
        payload = {
            "axis_a": self.axis_a,
            "axis_b": self.axis_b,
            "scores": np.asarray(self.scores).tolist(),
            "pairing": self.pairing,
            "word_count": self.word_count,
            "preprocessing": self.preprocessing,
            "seed": self.seed,
            "skipped": self.skipped,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path: str | os.PathLike) -> None:
        """Long-format heatmap data: one (axis_a, axis_b, score) row per cell."""
        scores = np.atleast_2d(np.asarray(self.scores))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["axis_a", "axis_b", "score"])
            if len(self.axis_a) == scores.shape[0]:
                rows_axis = self.axis_a
            else:
                rows_axis = [self.pairing]
            for i, a in enumerate(rows_axis):
                for j, b in enumerate(self.axis_b):
                    writer.writerow([a, b, f"{scores[i, j]:.10g}"])


def _stack_layers(
    store: StoreHandle,
    words: list[str],
    mode: ContextMode,
    policy: SpecialPolicy,
    backoff: StoreHandle | None,
) -> tuple[np.ndarray, list[str], int]:
    """Per-layer vectors for every resolvable word: [words, layers, dim]."""
    stacked = []
    kept = []
    skipped = 0
    for word in words:
        try:
            per_layer, _ = aggregate_contexts(word, store, mode, policy, backoff)
        except WordNotFoundError:
            skipped += 1
            continue
        stacked.append(per_layer)
        kept.append(word.lower())
    if not stacked:
        return np.empty((0, store.num_layers, store.dim)), [], skipped
    return np.stack(stacked), kept, skipped


def self_similarity(
    store: StoreHandle,
    words: list[str],
    mode: ContextMode,
    policy: SpecialPolicy,
    backoff: StoreHandle | None = None,
) -> CkaResult:
    """Layer-by-layer CKA of the same words' representations."""
    stacked, kept, skipped = _stack_layers(store, words, mode, policy, backoff)
    if len(kept) < 2:
        raise InsufficientCoverageError(
            f"self-similarity needs >= 2 resolvable words, got {len(kept)}"
        )
    layers = store.num_layers
    scores = np.empty((layers, layers))
    for m in range(layers):
        for n in range(m, layers):
            value = linear_cka(stacked[:, m, :], stacked[:, n, :])
            scores[m, n] = value
            scores[n, m] = value
    axis = list(range(layers))
    return CkaResult(axis, axis, scores, "self", len(kept), skipped=skipped)


def bilingual_correspondence(
    store_src: StoreHandle,
    store_tgt: StoreHandle,
    pairs: list[tuple[str, str]],
    mode: ContextMode,
    policy: SpecialPolicy,
    backoff_src: StoreHandle | None = None,
    backoff_tgt: StoreHandle | None = None,
    pairing: str = "translation",
    seed: int | None = None,
) -> CkaResult:
    """Per-layer CKA between two stores' vectors, rows aligned by pair."""
    if store_src.num_layers != store_tgt.num_layers:
        raise ValueError("stores disagree on layer count")
    src_vecs = []
    tgt_vecs = []
    skipped = 0
    for src_word, tgt_word in pairs:
        try:
            sv, _ = aggregate_contexts(src_word, store_src, mode, policy, backoff_src)
            tv, _ = aggregate_contexts(tgt_word, store_tgt, mode, policy, backoff_tgt)
        except WordNotFoundError:
            skipped += 1
            continue
        src_vecs.append(sv)
        tgt_vecs.append(tv)
    if len(src_vecs) < 2:
        raise InsufficientCoverageError(
            f"bilingual correspondence needs >= 2 resolvable pairs, got {len(src_vecs)}"
        )
    src_stack = np.stack(src_vecs)
    tgt_stack = np.stack(tgt_vecs)
    layers = store_src.num_layers
    scores = np.array(
        [linear_cka(src_stack[:, n, :], tgt_stack[:, n, :]) for n in range(layers)]
    )
    return CkaResult(
        [pairing],
        list(range(layers)),
        scores.reshape(1, layers),
        pairing,
        len(src_vecs),
        seed=seed,
        skipped=skipped,
    )


def random_pair_baseline(
    store_src: StoreHandle,
    store_tgt: StoreHandle,
    n_pairs: int,
    seed: int,
    mode: ContextMode,
    policy: SpecialPolicy,
    source_words: list[str] | None = None,
    backoff_src: StoreHandle | None = None,
    backoff_tgt: StoreHandle | None = None,
) -> CkaResult:
    """Correspondence of randomly paired words, seeded and reproducible.

    Target words are sampled with replacement; source words are taken from
    `source_words` when given (e.g. a lexicon's sources) and otherwise
    sampled without replacement from the source store vocabulary.
    """
    if len(store_src.words) < n_pairs or len(store_tgt.words) < n_pairs:
        raise InsufficientVocabularyError(
            f"{n_pairs} pairs requested but vocabularies hold "
            f"{len(store_src.words)} / {len(store_tgt.words)} words"
        )
    rng = np.random.default_rng(seed)
    if source_words is None:
        src_pick = [
            store_src.words[i]
            for i in rng.choice(len(store_src.words), size=n_pairs, replace=False)
        ]
    else:
        if len(source_words) < n_pairs:
            raise InsufficientVocabularyError(
                f"{n_pairs} pairs requested but only {len(source_words)} source words given"
            )
        src_pick = list(source_words[:n_pairs])
    tgt_pick = [
        store_tgt.words[i]
        for i in rng.choice(len(store_tgt.words), size=n_pairs, replace=True)
    ]
    return bilingual_correspondence(
        store_src,
        store_tgt,
        list(zip(src_pick, tgt_pick)),
        mode,
        policy,
        backoff_src,
        backoff_tgt,
        pairing="random",
        seed=seed,
    )


def correlate_cka_with_bli(cka_scores, bli_scores) -> float:
    """Spearman correlation between per-scheme CKA and BLI score lists."""
    cka_scores = list(cka_scores)
    bli_scores = list(bli_scores)
    if len(cka_scores) != len(bli_scores):
        raise ValueError("CKA and BLI score lists must have equal length")
    return spearman(np.array(cka_scores), np.array(bli_scores))
