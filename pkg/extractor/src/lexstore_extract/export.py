"""ISO and AOC token-store exports from a transformer checkpoint.

ISO encodes every vocabulary word as its own sequence (with the model's
standard delimiter tokens in the input) and stores one record per word.
AOC shuffles a one-sentence-per-line corpus with the job seed, matches
vocabulary words against the tokenizer's own words (exact match after the
tokenizer's normalization, no lemmatization), and stores one record per
occurrence, up to the job's per-word maximum, in shuffled-corpus order.
Multiple occurrences inside one sentence each yield a record.

Each record keeps the target word's subword vectors plus the sequence's
CLS and SEP vectors, flagged so downstream pooling can include or exclude
them. Hidden states for all layers (including the embedding layer) come
from a single forward pass per sentence; sentences are batched by length.

Records are buffered per word in memory before writing, so a job needs
roughly vocab * max_contexts * num_layers * tokens * dim floats; shard the
vocabulary for corpus-scale exports.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from lexstore_extract.writer import FLAG_CLS, FLAG_CONTENT, FLAG_SEP, StoreWriter

logger = logging.getLogger(__name__)


@dataclass
class ExportJob:
    model: str  # checkpoint identifier or local path
    vocab: str  # vocabulary file, one word per line
    mode: str  # "iso" | "aoc"
    out: str
    corpus: str | None = None  # required for aoc
    max_contexts: int = 100
    max_len: int = 512
    seed: int = 0
    source_kind: str = "mono"
    batch_size: int = 16

    def __post_init__(self):
        self.model = os.fspath(self.model)
        self.vocab = os.fspath(self.vocab)
        self.out = os.fspath(self.out)
        if self.corpus is not None:
            self.corpus = os.fspath(self.corpus)

    def validate(self) -> None:
        if self.mode not in ("iso", "aoc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "aoc" and not self.corpus:
            raise ValueError("aoc export requires a corpus")
        if self.max_contexts < 1:
            raise ValueError("max_contexts must be >= 1")


def _load(job: ExportJob):
    tokenizer = AutoTokenizer.from_pretrained(job.model)
    model = AutoModel.from_pretrained(job.model)
    model.eval()  # inference mode, dropout off
    model.float()
    max_positions = getattr(model.config, "max_position_embeddings", job.max_len)
    if job.max_len > max_positions:
        raise ValueError(
            f"max_len {job.max_len} exceeds the model limit {max_positions}"
        )
    num_layers = model.config.num_hidden_layers + 1  # embedding layer included
    dim = model.config.hidden_size
    return tokenizer, model, num_layers, dim


def _read_vocab(path: str) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().lower()
            if word and word not in seen:
                seen.add(word)
                words.append(word)
    return words


def _normalize(tokenizer, text: str) -> str:
    backend = getattr(tokenizer, "backend_tokenizer", None)
    if backend is not None and backend.normalizer is not None:
        return backend.normalizer.normalize_str(text)
    return text.lower()


def _hidden_states(model, batch) -> np.ndarray:
    """[num_layers, batch, seq, dim] float32 for one padded batch."""
    with torch.no_grad():
        out = model(**batch, output_hidden_states=True)
    return torch.stack(out.hidden_states).to(torch.float32).numpy()


def _flags_for(ids: list[int], tokenizer) -> np.ndarray:
    flags = np.full(len(ids), FLAG_CONTENT, np.uint8)
    for i, token_id in enumerate(ids):
        if token_id == tokenizer.cls_token_id:
            flags[i] = FLAG_CLS
        elif token_id == tokenizer.sep_token_id:
            flags[i] = FLAG_SEP
    return flags


def export_iso(job: ExportJob) -> None:
    """One record per vocabulary word, encoded as a standalone sequence."""
    job.validate()
    tokenizer, model, num_layers, dim = _load(job)
    words = _read_vocab(job.vocab)

    kept: list[str] = []
    for word in words:
        if len(tokenizer.tokenize(word)) == 0:
            logger.warning("skipping %r: tokenizes to zero content subwords", word)
            continue
        kept.append(word)

    records: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    order = sorted(range(len(kept)), key=lambda i: (len(tokenizer.tokenize(kept[i])), i))
    for start in range(0, len(order), job.batch_size):
        chunk = [kept[i] for i in order[start : start + job.batch_size]]
        batch = tokenizer(
            chunk,
            padding=True,
            truncation=True,
            max_length=job.max_len,
            return_tensors="pt",
        )
        states = _hidden_states(model, batch)
        lengths = batch["attention_mask"].sum(dim=1).tolist()
        for i, word in enumerate(chunk):
            n = int(lengths[i])
            ids = batch["input_ids"][i, :n].tolist()
            records[word] = (
                _flags_for(ids, tokenizer),
                np.ascontiguousarray(states[:, i, :n, :]),
            )

    with StoreWriter(job.out, job.model, job.source_kind, num_layers, dim,
                     job.seed) as writer:
        for word in kept:
            flags, vectors = records[word]
            writer.add(word, flags, vectors)


def _plan_occurrences(tokenizer, sentences, targets, max_contexts, max_len):
    """Match target words in sentence order; returns per-sentence spans.

    A span survives truncation only if the kept subword count equals the
    word's own tokenization length.
    """
    quotas = {w: max_contexts for w in targets}
    plan: list[tuple[str, list[tuple[str, tuple[int, ...]]]]] = []
    remaining = len(quotas)
    for text in sentences:
        if remaining == 0:
            break
        enc = tokenizer(text, truncation=True, max_length=max_len,
                        return_offsets_mapping=True)
        word_ids = enc.word_ids()
        offsets = enc["offset_mapping"]
        spans: dict[int, list[int]] = {}
        for pos, wid in enumerate(word_ids):
            if wid is not None:
                spans.setdefault(wid, []).append(pos)
        matches = []
        for wid in sorted(spans):
            positions = spans[wid]
            start = offsets[positions[0]][0]
            end = offsets[positions[-1]][1]
            surface = _normalize(tokenizer, text[start:end])
            if quotas.get(surface, 0) <= 0:
                continue
            if len(tokenizer.tokenize(surface)) != len(positions):
                continue  # span cut by truncation
            quotas[surface] -= 1
            if quotas[surface] == 0:
                remaining -= 1
            matches.append((surface, tuple(positions)))
        if matches:
            plan.append((text, matches))
    return plan


def export_aoc(job: ExportJob) -> None:
    """Up to max_contexts occurrence records per word from a seeded-shuffled
    corpus; words without occurrences are absent from the store index."""
    job.validate()
    tokenizer, model, num_layers, dim = _load(job)
    words = _read_vocab(job.vocab)

    with open(job.corpus, encoding="utf-8") as fh:
        sentences = [line.rstrip("\n") for line in fh if line.strip()]
    rng = np.random.default_rng(job.seed)
    shuffled = [sentences[i] for i in rng.permutation(len(sentences))]

    plan = _plan_occurrences(tokenizer, shuffled, set(words), job.max_contexts,
                             job.max_len)

    records: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {w: [] for w in words}
    order = sorted(
        range(len(plan)),
        key=lambda i: (len(tokenizer(plan[i][0], truncation=True,
                                     max_length=job.max_len)["input_ids"]), i),
    )
    # per-word record order must follow the shuffled-corpus traversal, not
    # the batching order, so batches only carry (plan index, matches)
    staged: dict[int, list[tuple[str, np.ndarray, np.ndarray]]] = {}
    for start in range(0, len(order), job.batch_size):
        chunk_idx = order[start : start + job.batch_size]
        texts = [plan[i][0] for i in chunk_idx]
        batch = tokenizer(texts, padding=True, truncation=True,
                          max_length=job.max_len, return_tensors="pt")
        states = _hidden_states(model, batch)
        lengths = batch["attention_mask"].sum(dim=1).tolist()
        for row, plan_i in enumerate(chunk_idx):
            n = int(lengths[row])
            ids = batch["input_ids"][row, :n].tolist()
            cls_positions = [p for p, t in enumerate(ids)
                             if t == tokenizer.cls_token_id]
            sep_positions = [p for p, t in enumerate(ids)
                             if t == tokenizer.sep_token_id]
            out = []
            for word, span in plan[plan_i][1]:
                positions = list(cls_positions[:1]) + list(span) + sep_positions[-1:]
                flags = np.full(len(positions), FLAG_CONTENT, np.uint8)
                if cls_positions:
                    flags[0] = FLAG_CLS
                if sep_positions:
                    flags[-1] = FLAG_SEP
                vectors = np.ascontiguousarray(states[:, row, positions, :])
                out.append((word, flags, vectors))
            staged[plan_i] = out
    for plan_i in sorted(staged):
        for word, flags, vectors in staged[plan_i]:
            records[word].append((flags, vectors))

    with StoreWriter(job.out, job.model, job.source_kind, num_layers, dim,
                     job.seed) as writer:
        for word in words:
            for flags, vectors in records[word]:
                writer.add(word, flags, vectors)


def run(job: ExportJob) -> None:
    if job.mode == "iso":
        export_iso(job)
    else:
        export_aoc(job)
