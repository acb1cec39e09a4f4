"""Distill per-occurrence, per-layer token embeddings into one static vector
per word.

The chain per word is: pool subword tokens of each occurrence under a
special-token policy, average occurrence means over contexts (or take the
single isolated record), then combine layers under a layer scheme. All
arithmetic accumulates in float64; matrix rows are stored as float32.

Matrix output formats:

* text: first line "V d", then "word v1 ... vd" per line, floats printed
  with enough digits to round-trip float32;
* binary: magic "LXTM", u32 version, u64 JSON length, JSON provenance
  header (model_id, config, dim, vocabulary, backed_off indices), then
  V * d float32 little-endian values, row-major.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from lexprobe import kernels
from lexprobe.configs import ContextMode, ExtractionConfig, LayerScheme, SpecialPolicy
from lexprobe.errors import (
    EmptySelectionError,
    MissingWordsError,
    StoreFormatError,
    WordNotFoundError,
)
from lexprobe.store import OccurrenceRecord, StoreHandle, Vocabulary

MATRIX_MAGIC = b"LXTM"
MATRIX_VERSION = 1


def pool_subwords(record: OccurrenceRecord, policy: SpecialPolicy) -> np.ndarray:
    """Per-layer arithmetic mean over the policy-selected tokens.

    Returns float64 [num_layers, dim]; summation runs in token index order.
    """
    vecs = np.asarray(record.vectors, np.float32)
    num_layers, ntok, dim = vecs.shape
    flags = np.ascontiguousarray(record.token_flags, np.uint8)
    bounds = np.array([0, ntok], np.int64)
    out, bad = kernels.pool_occurrences(
        vecs.ravel(), flags, bounds, num_layers, dim, policy.kernel_code
    )
    if bad >= 0:
        raise EmptySelectionError(
            f"policy {policy.value} selects no tokens of a record for "
            f"{record.word!r}"
        )
    return out.reshape(num_layers, dim)


def aggregate_contexts(
    word: str,
    store: StoreHandle,
    mode: ContextMode,
    policy: SpecialPolicy,
    backoff: StoreHandle | None = None,
) -> tuple[np.ndarray, bool]:
    """Per-layer vectors for a word under a context mode.

    ISO pools the single isolated record. AOC(M) averages the pooled means
    of the first min(M, available) stored occurrences; a word absent from
    the AOC store falls back to the ISO store, and the returned flag
    reports that back-off.

    Returns (float64 [num_layers, dim], backed_off).
    """
    if mode.kind == "iso":
        vectors, flags, bounds = store.word_arrays(word, limit=1)
    else:
        if word.lower() in store:
            vectors, flags, bounds = store.word_arrays(word, limit=mode.m)
        elif backoff is not None and word.lower() in backoff:
            pooled, _ = aggregate_contexts(word, backoff, ContextMode.iso(), policy)
            return pooled, True
        else:
            raise WordNotFoundError(word)
    out, bad = kernels.pool_occurrences(
        vectors, flags, bounds, store.num_layers, store.dim, policy.kernel_code
    )
    if bad >= 0:
        raise EmptySelectionError(
            f"policy {policy.value} selects no tokens of occurrence {int(bad)} "
            f"of {word!r}"
        )
    return out.reshape(store.num_layers, store.dim), False


def combine_layers(per_layer: np.ndarray, scheme: LayerScheme) -> np.ndarray:
    """Reduce [num_layers, dim] to one d-vector under a layer scheme.

    single(n) takes row n; avg_le(n) means rows 0..n; avg_ge(n) means rows
    n..top. Summation runs in ascending layer order.
    """
    per_layer = np.asarray(per_layer, np.float64)
    num_layers = per_layer.shape[0]
    n = scheme.n
    if n >= num_layers:
        raise IndexError(
            f"layer index {n} out of range for {num_layers} layers"
        )
    if scheme.kind == "single":
        return per_layer[n].copy()
    if scheme.kind == "avg_le":
        rows = per_layer[: n + 1]
    else:
        rows = per_layer[n:]
    out = np.zeros(per_layer.shape[1], np.float64)
    for row in rows:
        out += row
    return out / rows.shape[0]


@dataclass
class TypeEmbeddingMatrix:
    """Static V x d matrix in vocabulary row order, with provenance."""

    vocabulary: Vocabulary
    data: np.ndarray  # float32 [V, d]
    provenance: dict = field(default_factory=dict)
    backed_off: np.ndarray | None = None  # bool [V]

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def __contains__(self, word: str) -> bool:
        return word in self.vocabulary

    def row(self, word: str) -> np.ndarray:
        return self.data[self.vocabulary.index_of(word)]


def build_matrix(
    vocab: Vocabulary,
    store: StoreHandle,
    config: ExtractionConfig,
    backoff: StoreHandle | None = None,
    model_id: str | None = None,
) -> TypeEmbeddingMatrix:
    """Distill one matrix row per vocabulary word under a config.

    AOC configs require a back-off ISO store. Unresolvable words are
    collected and reported together. The word loop is sequential; each
    row's reduction has a fixed order, so the result is deterministic.
    """
    if config.context.kind == "aoc" and backoff is None:
        raise ValueError("AOC configs require a back-off ISO store")
    data = np.empty((len(vocab), store.dim), np.float32)
    backed = np.zeros(len(vocab), bool)
    missing: list[str] = []
    for i, word in enumerate(vocab):
        try:
            per_layer, backed_off = aggregate_contexts(
                word, store, config.context, config.policy, backoff
            )
        except WordNotFoundError:
            missing.append(word)
            continue
        data[i] = combine_layers(per_layer, config.layers).astype(np.float32)
        backed[i] = backed_off
    if missing:
        raise MissingWordsError(missing)
    provenance = {
        "model_id": model_id if model_id is not None else store.header.model_id,
        "source_kind": store.header.source_kind,
        "context": config.context.canonical(),
        "policy": config.policy.value,
        "layers": config.layers.canonical(),
    }
    return TypeEmbeddingMatrix(vocab, data, provenance, backed)


def save_matrix_text(matrix: TypeEmbeddingMatrix, path: str | os.PathLike) -> None:
    """Write the standard "V d" word-vector text format."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(matrix.vocabulary)} {matrix.dim}\n")
        for word, row in zip(matrix.vocabulary, matrix.data):
            values = " ".join(f"{float(v):.9g}" for v in row)
            fh.write(f"{word} {values}\n")


def load_matrix_text(path: str | os.PathLike) -> TypeEmbeddingMatrix:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise StoreFormatError(f"{path}: bad word-vector header line")
        count, dim = int(head[0]), int(head[1])
        words: list[str] = []
        data = np.empty((count, dim), np.float32)
        for i in range(count):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise StoreFormatError(f"{path}: bad row for entry {i}")
            words.append(parts[0])
            data[i] = np.array(parts[1:], np.float32)
    return TypeEmbeddingMatrix(Vocabulary(words), data)


def save_matrix_binary(matrix: TypeEmbeddingMatrix, path: str | os.PathLike) -> None:
    header = dict(matrix.provenance)
    header["dim"] = matrix.dim
    header["vocabulary"] = list(matrix.vocabulary)
    if matrix.backed_off is not None:
        header["backed_off"] = [int(i) for i in np.flatnonzero(matrix.backed_off)]
    blob = json.dumps(header, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MATRIX_MAGIC)
    buf.write(struct.pack("<I", MATRIX_VERSION))
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(np.ascontiguousarray(matrix.data, "<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_matrix_binary(path: str | os.PathLike) -> TypeEmbeddingMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MATRIX_MAGIC:
        raise StoreFormatError(f"{path}: bad matrix magic {raw[:4]!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != MATRIX_VERSION:
        raise StoreFormatError(f"{path}: unsupported matrix version {version}")
    (json_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + json_len].decode("utf-8"))
    vocab = Vocabulary(header.pop("vocabulary"))
    dim = int(header.pop("dim"))
    backed_idx = header.pop("backed_off", None)
    data = np.frombuffer(raw, "<f4", count=len(vocab) * dim, offset=16 + json_len)
    backed = None
    if backed_idx is not None:
        backed = np.zeros(len(vocab), bool)
        backed[backed_idx] = True
    return TypeEmbeddingMatrix(
        vocab, data.reshape(len(vocab), dim).copy(), header, backed
    )
