"""Monolingual probes: semantic similarity, word analogy, and relation
prediction plumbing (feature export + a plain logistic-regression baseline).

Dataset formats:

* similarity: tab-separated lines "word1<TAB>word2<TAB>score";
* analogy: a file, or a directory tree of category files, with lines
  "a b / c d1/d2/..." (question a:b = c:?, slash-separated gold answers);
* relations: tab-separated lines "word1<TAB>word2<TAB>label" with labels
  synonymy, antonymy, hypernymy, meronymy, no_relation (case-insensitive).

Out-of-vocabulary items are always skipped and counted, never substituted.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from lexprobe import kernels
from lexprobe.distill import TypeEmbeddingMatrix
from lexprobe.errors import InsufficientCoverageError, StoreFormatError
from lexprobe.numerics import cosine, l2_normalize_rows, spearman

RELATION_LABELS = ("synonymy", "antonymy", "hypernymy", "meronymy", "no_relation")

FEATURES_MAGIC = b"LXRF"
FEATURES_VERSION = 1


@dataclass(frozen=True)
class SimilarityPair:
    word1: str
    word2: str
    gold_score: float


@dataclass(frozen=True)
class AnalogyQuestion:
    a: str
    b: str
    c: str
    gold: frozenset[str]
    category: str = ""


@dataclass(frozen=True)
class RelationPair:
    word1: str
    word2: str
    label: str  # one of RELATION_LABELS


def load_similarity_pairs(path: str | os.PathLike) -> list[SimilarityPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected word1<TAB>word2<TAB>score")
            pairs.append(
                SimilarityPair(parts[0].lower(), parts[1].lower(), float(parts[2]))
            )
    return pairs


def _parse_analogy_line(line: str, where: str) -> AnalogyQuestion | None:
    line = line.strip()
    if not line or line.startswith("#"):
        return None
    left, sep, right = line.partition("/")
    ab = left.split()
    rest = right.split()
    if not sep or len(ab) != 2 or len(rest) != 2:
        raise ValueError(f"{where}: expected 'a b / c d1/d2/...'")
    a, b = (w.lower() for w in ab)
    c = rest[0].lower()
    gold = frozenset(w.lower() for w in rest[1].split("/") if w)
    if not gold:
        raise ValueError(f"{where}: empty gold answer set")
    if len({a, b, c}) != 3:
        raise ValueError(f"{where}: a, b, c must be pairwise distinct")
    return AnalogyQuestion(a, b, c, gold)


def load_analogy_questions(path: str | os.PathLike) -> list[AnalogyQuestion]:
    """Load analogy questions from one file or a directory of category files.

    Directory entries are walked in sorted order; the file stem (without
    extension) becomes the question's category.
    """
    path = os.fspath(path)
    questions: list[AnalogyQuestion] = []
    if os.path.isdir(path):
        files = []
        for root, _dirs, names in os.walk(path):
            files.extend(os.path.join(root, n) for n in names if n.endswith(".txt"))
        for f in sorted(files):
            category = os.path.splitext(os.path.basename(f))[0]
            with open(f, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    q = _parse_analogy_line(line, f"{f}:{lineno}")
                    if q is not None:
                        questions.append(
                            AnalogyQuestion(q.a, q.b, q.c, q.gold, category)
                        )
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                q = _parse_analogy_line(line, f"{path}:{lineno}")
                if q is not None:
                    questions.append(q)
    return questions


def load_relation_pairs(path: str | os.PathLike) -> list[RelationPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected word1<TAB>word2<TAB>label")
            label = parts[2].strip().lower().replace("-", "_")
            if label not in RELATION_LABELS:
                raise ValueError(f"{path}:{lineno}: unknown relation label {parts[2]!r}")
            pairs.append(RelationPair(parts[0].lower(), parts[1].lower(), label))
    return pairs


@dataclass
class LsimResult:
    rho: float
    coverage: float
    covered: int
    total: int


def eval_lsim(matrix: TypeEmbeddingMatrix, pairs: list[SimilarityPair]) -> LsimResult:
    """Spearman correlation between gold scores and cosine similarities."""
    gold = []
    predicted = []
    for pair in pairs:
        if pair.word1 in matrix and pair.word2 in matrix:
            gold.append(pair.gold_score)
            predicted.append(cosine(matrix.row(pair.word1), matrix.row(pair.word2)))
    if len(gold) < 2:
        raise InsufficientCoverageError(
            f"only {len(gold)} of {len(pairs)} similarity pairs are covered"
        )
    rho = spearman(np.array(gold), np.array(predicted))
    return LsimResult(rho, len(gold) / len(pairs), len(gold), len(pairs))


@dataclass
class AnalogyResult:
    p_at_1: float
    coverage: float
    correct: int
    evaluable: int
    total: int
    per_category: dict[str, float] = field(default_factory=dict)


def eval_analogy(
    matrix: TypeEmbeddingMatrix,
    questions: list[AnalogyQuestion],
    batch_size: int = 256,
) -> AnalogyResult:
    """Vector-offset analogy resolution.

    For each question with a, b, c in vocabulary, the predicted word is
    argmax over the vocabulary (excluding a, b, c) of cos(row, c - a + b)
    computed on unit-normalized rows; ties go to the lower vocabulary
    index. A question is correct when the prediction is in its gold set.
    """
    vocab = matrix.vocabulary
    normalized = l2_normalize_rows(matrix.data.astype(np.float64))
    evaluable: list[AnalogyQuestion] = []
    triples: list[tuple[int, int, int]] = []
    for q in questions:
        if q.a in vocab and q.b in vocab and q.c in vocab:
            evaluable.append(q)
            triples.append(
                (vocab.index_of(q.a), vocab.index_of(q.b), vocab.index_of(q.c))
            )
    if not evaluable:
        raise InsufficientCoverageError("no analogy question has a, b, c in vocabulary")

    correct = 0
    cat_correct: dict[str, int] = {}
    cat_total: dict[str, int] = {}
    for start in range(0, len(evaluable), batch_size):
        chunk = evaluable[start : start + batch_size]
        idx = np.array(triples[start : start + batch_size], np.int64)
        targets = normalized[idx[:, 2]] - normalized[idx[:, 0]] + normalized[idx[:, 1]]
        scores = targets @ normalized.T  # [chunk, V]
        for row, q, (ia, ib, ic) in zip(scores, chunk, idx):
            excluded = np.array([ia, ib, ic], np.int64)
            pred = int(kernels.argmax_excluding(np.ascontiguousarray(row), excluded))
            hit = pred >= 0 and vocab.words[pred] in q.gold
            correct += int(hit)
            cat_total[q.category] = cat_total.get(q.category, 0) + 1
            cat_correct[q.category] = cat_correct.get(q.category, 0) + int(hit)
    per_category = {
        cat: cat_correct[cat] / cat_total[cat] for cat in sorted(cat_total)
    }
    return AnalogyResult(
        p_at_1=correct / len(evaluable),
        coverage=len(evaluable) / len(questions),
        correct=correct,
        evaluable=len(evaluable),
        total=len(questions),
        per_category=per_category,
    )


@dataclass
class FeatureExportResult:
    path: str
    exported: int
    skipped: int
    dim: int


def export_relp_features(
    matrix: TypeEmbeddingMatrix,
    pairs: list[RelationPair],
    path: str | os.PathLike,
) -> FeatureExportResult:
    """Write one [v1 || v2] feature record per covered pair.

    Record layout: u8 label code (index into RELATION_LABELS) followed by
    2 * dim float32 values. Pairs with an out-of-vocabulary word are
    skipped and counted in the header.
    """
    d = matrix.dim
    records = io.BytesIO()
    exported = 0
    skipped = 0
    for pair in pairs:
        if pair.word1 not in matrix or pair.word2 not in matrix:
            skipped += 1
            continue
        records.write(struct.pack("<B", RELATION_LABELS.index(pair.label)))
        records.write(np.ascontiguousarray(matrix.row(pair.word1), "<f4").tobytes())
        records.write(np.ascontiguousarray(matrix.row(pair.word2), "<f4").tobytes())
        exported += 1
    header = json.dumps(
        {
            "dim": d,
            "count": exported,
            "skipped": skipped,
            "labels": list(RELATION_LABELS),
        },
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<I", FEATURES_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(records.getvalue())
    return FeatureExportResult(os.fspath(path), exported, skipped, d)


def load_relp_features(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read an LXRF feature file; returns (features [n, 2d], labels [n])."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != FEATURES_MAGIC:
        raise StoreFormatError(f"{path}: bad feature magic {raw[:4]!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FEATURES_VERSION:
        raise StoreFormatError(f"{path}: unsupported feature version {version}")
    (json_len,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + json_len].decode("utf-8"))
    d, count = int(header["dim"]), int(header["count"])
    rec_size = 1 + 2 * d * 4
    pos = 16 + json_len
    if pos + count * rec_size != len(raw):
        raise StoreFormatError(f"{path}: feature payload size mismatch")
    labels = np.empty(count, np.int64)
    features = np.empty((count, 2 * d), np.float32)
    for i in range(count):
        labels[i] = raw[pos]
        features[i] = np.frombuffer(raw, "<f4", count=2 * d, offset=pos + 1)
        pos += rec_size
    return features, labels


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _train_softmax_regression(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    l2: float = 1.0,
    epochs: int = 100,
    lr: float = 0.1,
) -> tuple[np.ndarray, np.ndarray]:
    """Full-batch gradient descent on multinomial logistic regression.

    Loss = mean cross-entropy + 0.5 * l2 * ||W||_F^2 / n (bias excluded).
    The learning rate decays linearly to zero: lr_e = lr * (1 - e / epochs).
    Weights start at zero, so training is deterministic given the data order.
    """
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for epoch in range(epochs):
        step = lr * (1.0 - epoch / epochs)
        probs = _softmax(x @ w + b)
        grad_logits = (probs - onehot) / n
        w -= step * (x.T @ grad_logits + l2 * w / n)
        b -= step * grad_logits.sum(axis=0)
    return w, b


@dataclass
class RelpBaselineResult:
    micro_f1_mean: float
    micro_f1_std: float
    per_run: list[float]
    folds: int


def train_relation_baseline(
    features: np.ndarray,
    labels: np.ndarray,
    folds: int = 5,
    seed: int = 0,
    runs: int = 5,
) -> RelpBaselineResult:
    """Cross-validated relation classifier on [v1 || v2 || v1*v2] features.

    Each run shuffles the fold assignment with its own seed and reports
    pooled micro-averaged F1 over the held-out folds (for single-label
    classification this equals pooled accuracy). Returns mean and
    population stdev over `runs` runs.
    """
    features = np.asarray(features, np.float64)
    labels = np.asarray(labels, np.int64)
    n = features.shape[0]
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise ValueError("relation baseline needs at least two classes")
    if n < folds:
        raise ValueError(f"{n} examples cannot fill {folds} folds")
    d = features.shape[1] // 2
    v1, v2 = features[:, :d], features[:, d:]
    x = np.concatenate([v1, v2, v1 * v2], axis=1)
    n_classes = int(classes.max()) + 1

    scores = []
    for run in range(runs):
        rng = np.random.default_rng(seed + run)
        order = rng.permutation(n)
        fold_of = np.empty(n, np.int64)
        fold_of[order] = np.arange(n) % folds
        correct = 0
        for k in range(folds):
            test = fold_of == k
            w, b = _train_softmax_regression(x[~test], labels[~test], n_classes)
            pred = np.argmax(x[test] @ w + b, axis=1)
            correct += int((pred == labels[test]).sum())
        scores.append(correct / n)
    arr = np.array(scores)
    return RelpBaselineResult(float(arr.mean()), float(arr.std()), scores, folds)
