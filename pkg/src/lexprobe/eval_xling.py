"""Cross-lingual probes: bilingual lexicon induction over Procrustes-mapped
spaces, and document retrieval with IDF-weighted bag-of-vector embeddings.

Before mapping, both spaces run through the standard supervised pipeline:
l2-normalize rows, mean-center columns, l2-normalize rows again. The same
pipeline is applied at evaluation time so train and test geometry agree.

File formats:

* lexicons: tab-separated "source<TAB>target" lines; repeated source lines
  form that source's gold target set;
* retrieval collections: a directory with documents.tsv and queries.tsv
  ("id<TAB>text") plus qrels.tsv ("query_id<TAB>doc_id");
* retrieval tokenization: lowercase, maximal runs of Unicode letters and
  digits (punctuation, whitespace and underscores separate tokens).
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from lexprobe import kernels
from lexprobe.distill import TypeEmbeddingMatrix
from lexprobe.errors import InsufficientCoverageError
from lexprobe.numerics import l2_normalize_rows, procrustes

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Deterministic retrieval tokenizer: lowercase word-character runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class BilingualLexicon:
    """Source words mapped to non-empty gold target sets."""

    entries: list[tuple[str, frozenset[str]]]
    split: str = "test"  # "train" | "test"

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def source_words(self) -> list[str]:
        return [src for src, _ in self.entries]


def load_lexicon(path: str | os.PathLike, split: str = "test") -> BilingualLexicon:
    by_source: dict[str, set[str]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected source<TAB>target")
            src, tgt = parts[0].lower(), parts[1].lower()
            if src not in by_source:
                by_source[src] = set()
                order.append(src)
            by_source[src].add(tgt)
    entries = [(src, frozenset(by_source[src])) for src in order]
    return BilingualLexicon(entries, split)


def check_disjoint(train: BilingualLexicon, test: BilingualLexicon) -> None:
    overlap = set(train.source_words) & set(test.source_words)
    if overlap:
        raise ValueError(
            f"train/test lexicons share {len(overlap)} source word(s), "
            f"e.g. {sorted(overlap)[:5]}"
        )


@dataclass
class RetrievalCollection:
    documents: dict[str, list[str]]  # doc id -> tokens
    queries: dict[str, list[str]]  # query id -> tokens
    relevance: dict[str, set[str]]  # query id -> relevant doc ids


def load_collection(directory: str | os.PathLike) -> RetrievalCollection:
    directory = os.fspath(directory)

    def read_tsv(name: str) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        with open(os.path.join(directory, name), encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                ident, sep, text = line.partition("\t")
                if not sep:
                    raise ValueError(f"{name}:{lineno}: expected id<TAB>text")
                out[ident] = tokenize(text)
        return out

    documents = read_tsv("documents.tsv")
    queries = read_tsv("queries.tsv")
    relevance: dict[str, set[str]] = {}
    with open(os.path.join(directory, "qrels.tsv"), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            qid, sep, did = line.partition("\t")
            if not sep:
                raise ValueError(f"qrels.tsv:{lineno}: expected query<TAB>doc")
            if did not in documents:
                raise ValueError(
                    f"qrels.tsv:{lineno}: relevant doc {did!r} not in documents"
                )
            relevance.setdefault(qid, set()).add(did)
    return RetrievalCollection(documents, queries, relevance)


@dataclass
class IdfTable:
    weights: dict[str, float]
    n_documents: int

    def __contains__(self, token: str) -> bool:
        return token in self.weights

    def get(self, token: str) -> float | None:
        return self.weights.get(token)


def build_idf(documents: dict[str, list[str]]) -> IdfTable:
    """idf(t) = ln((N + 1) / (df(t) + 1)) + 1, strictly positive by design."""
    n = len(documents)
    df: dict[str, int] = {}
    for tokens in documents.values():
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    weights = {tok: math.log((n + 1) / (c + 1)) + 1.0 for tok, c in df.items()}
    return IdfTable(weights, n)


def prepare_mapping_rows(data: np.ndarray) -> np.ndarray:
    """Unit-normalize rows, mean-center columns, unit-normalize rows again."""
    rows = l2_normalize_rows(np.asarray(data, np.float64))
    rows = rows - rows.mean(axis=0, keepdims=True)
    return l2_normalize_rows(rows)


@dataclass
class AlignmentResult:
    w: np.ndarray  # d x d orthogonal map, source -> target
    pairs_used: int
    pairs_dropped: int


def align_spaces(
    src: TypeEmbeddingMatrix,
    tgt: TypeEmbeddingMatrix,
    train: BilingualLexicon,
) -> AlignmentResult:
    """Learn the orthogonal source-to-target map from training pairs.

    Each (source, gold target) combination contributes one row pair; pairs
    with an out-of-vocabulary side are dropped and counted.
    """
    src_rows = prepare_mapping_rows(src.data)
    tgt_rows = prepare_mapping_rows(tgt.data)
    xs, ys = [], []
    dropped = 0
    for source, golds in train.entries:
        if source not in src.vocabulary:
            dropped += len(golds)
            continue
        si = src.vocabulary.index_of(source)
        for gold in sorted(golds):
            if gold not in tgt.vocabulary:
                dropped += 1
                continue
            xs.append(src_rows[si])
            ys.append(tgt_rows[tgt.vocabulary.index_of(gold)])
    if not xs:
        raise InsufficientCoverageError("no training pair is resolvable in both spaces")
    w = procrustes(np.array(xs), np.array(ys))
    return AlignmentResult(w, len(xs), dropped)


@dataclass
class BliResult:
    mrr: float
    coverage: float
    resolvable: int
    total: int


def eval_bli(
    src: TypeEmbeddingMatrix,
    tgt: TypeEmbeddingMatrix,
    w: np.ndarray,
    test: BilingualLexicon,
) -> BliResult:
    """Mean reciprocal rank of gold translations over the full target vocab.

    Candidates are ranked by cosine to the mapped source vector, ties broken
    in favour of the lower vocabulary index; the best-ranked gold target
    counts. Pairs whose source (or whole gold set) is out of vocabulary are
    skipped and counted.
    """
    src_rows = prepare_mapping_rows(src.data)
    tgt_rows = prepare_mapping_rows(tgt.data)
    mapped = src_rows @ w
    # rows are unit-length after the pipeline and W is orthogonal, so dot
    # products with unit target rows are cosines
    reciprocal_ranks: list[float] = []
    skipped = 0
    for source, golds in test.entries:
        if source not in src.vocabulary:
            skipped += 1
            continue
        gold_idx = np.array(
            sorted(
                tgt.vocabulary.index_of(g) for g in golds if g in tgt.vocabulary
            ),
            np.int64,
        )
        if gold_idx.size == 0:
            skipped += 1
            continue
        scores = tgt_rows @ mapped[src.vocabulary.index_of(source)]
        rank = int(kernels.best_gold_rank(scores, gold_idx))
        reciprocal_ranks.append(1.0 / rank)
    if not reciprocal_ranks:
        raise InsufficientCoverageError("no test pair is resolvable in both spaces")
    mrr = sum(reciprocal_ranks) / len(reciprocal_ranks)
    return BliResult(mrr, len(reciprocal_ranks) / len(test), len(reciprocal_ranks), len(test))


def embed_text(
    tokens: list[str],
    matrix: TypeEmbeddingMatrix,
    idf: IdfTable | None,
    w: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """IDF-weighted sum of the tokens' vectors, optionally mapped by `w`.

    Tokens missing from the matrix (or, when a table is given, from the
    idf table) are skipped; `idf=None` weights every known token 1.0.
    Returns (vector, known) where known=False flags an all-skipped input
    and a zero vector.
    """
    return _embed_rows(tokens, matrix.vocabulary, matrix.data, idf, w)


def _embed_rows(tokens, vocab, rows, idf, w=None):
    out = np.zeros(rows.shape[1], np.float64)
    known = False
    for tok in tokens:
        tok = tok.lower()
        if tok not in vocab:
            continue
        if idf is not None:
            weight = idf.get(tok)
            if weight is None:
                continue
        else:
            weight = 1.0
        out += weight * np.asarray(rows[vocab.index_of(tok)], np.float64)
        known = True
    if w is not None:
        out = out @ w
    return out, known


def ranked_average_precision(ranked_ids, relevant) -> float:
    """AP of one ranking: mean precision at each relevant doc's rank."""
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(ranked_ids, 1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


@dataclass
class ClirResult:
    map_score: float
    per_query: dict[str, float]
    evaluated: int
    skipped: int


def eval_clir(
    collection: RetrievalCollection,
    src: TypeEmbeddingMatrix,
    tgt: TypeEmbeddingMatrix,
    w: np.ndarray,
    query_idf: IdfTable | None = None,
) -> ClirResult:
    """Mean average precision of cosine-ranked documents.

    Documents embed in the target space weighted by an IDF table built from
    the document collection only; queries embed in the source space
    (weighted by `query_idf` when given, else uniformly -- the document
    collection carries no source-language statistics) and are mapped by
    `w`. Zero-vector documents rank last; all ties break by doc id. Queries
    without relevance judgments are skipped.
    """
    doc_idf = build_idf(collection.documents)
    src_rows = prepare_mapping_rows(src.data)
    tgt_rows = prepare_mapping_rows(tgt.data)

    doc_ids = sorted(collection.documents)
    doc_vecs = np.zeros((len(doc_ids), tgt_rows.shape[1]))
    doc_known = np.zeros(len(doc_ids), bool)
    for i, did in enumerate(doc_ids):
        doc_vecs[i], doc_known[i] = _embed_rows(
            collection.documents[did], tgt.vocabulary, tgt_rows, doc_idf
        )
    doc_norms = np.linalg.norm(doc_vecs, axis=1)
    unit_docs = doc_vecs / np.where(doc_norms == 0.0, 1.0, doc_norms)[:, None]

    average_precisions: list[float] = []
    per_query: dict[str, float] = {}
    skipped = 0
    for qid in sorted(collection.queries):
        relevant = collection.relevance.get(qid, set())
        if not relevant:
            skipped += 1
            continue
        qvec, known = _embed_rows(
            collection.queries[qid], src.vocabulary, src_rows, query_idf, w
        )
        qnorm = np.linalg.norm(qvec)
        if not known or qnorm == 0.0:
            logger.warning("query %s embeds to the zero vector; AP set to 0", qid)
            per_query[qid] = 0.0
            average_precisions.append(0.0)
            continue
        scores = unit_docs @ (qvec / qnorm)
        scores = np.where(doc_known & (doc_norms > 0.0), scores, -np.inf)
        order = sorted(range(len(doc_ids)), key=lambda i: (-scores[i], doc_ids[i]))
        ap = ranked_average_precision([doc_ids[i] for i in order], relevant)
        per_query[qid] = ap
        average_precisions.append(ap)
    if not average_precisions:
        raise InsufficientCoverageError("no query has relevance judgments")
    map_score = sum(average_precisions) / len(average_precisions)
    return ClirResult(map_score, per_query, len(average_precisions), skipped)
