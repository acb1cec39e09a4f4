"""Run whole extraction-configuration grids and emit result tables.

A grid spec is a key-value text file ("key = value", '#' comments, repeated
`config` keys accumulate):

    vocab = vocab.txt               # source-side vocabulary
    store.mono.iso = en.iso.lxts    # stores, keyed source_kind.context_kind
    store.mono.aoc = en.aoc.lxts
    tgt.vocab = de-vocab.txt        # target side, needed by bli/clir
    tgt.store.mono.iso = de.iso.lxts
    language = en                   # label for monolingual rows
    pair = en-de                    # label for cross-lingual rows
    config = mono.iso.nospec.l0     # one line per configuration
    tasks = lsim,wa,bli,clir,relp,cka
    data.lsim = lsim.tsv
    data.wa = analogies.txt
    data.bli.train = train.tsv
    data.bli.test = test.tsv
    data.clir = clir_dir
    data.relp = relp.tsv
    out = results_dir
    seed = 7
    workers = 1
    cka.words = 500                 # optional cap for cka self-similarity

Distilled matrices are cached under <out>/cache keyed by a hash of store
contents, vocabulary and config, so each matrix is built once per grid.
Results are written both as a flat CSV (deterministic: identical spec and
inputs give byte-identical bytes, so wall times live only in the JSON) and
as JSON nested by task.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

from lexprobe import cka as cka_mod
from lexprobe import eval_mono, eval_xling
from lexprobe.configs import ConfigId, parse_config_id
from lexprobe.distill import (
    TypeEmbeddingMatrix,
    build_matrix,
    load_matrix_binary,
    save_matrix_binary,
)
from lexprobe.errors import GridSpecError
from lexprobe.store import StoreHandle, Vocabulary, open_store

TASKS = ("lsim", "wa", "bli", "clir", "relp", "cka")

_TASK_DATA_KEYS = {
    "lsim": ("data.lsim",),
    "wa": ("data.wa",),
    "bli": ("data.bli.train", "data.bli.test"),
    "clir": ("data.bli.train", "data.clir"),
    "relp": ("data.relp",),
    "cka": (),
}

_XLING_TASKS = ("bli", "clir")


@dataclass
class GridSpec:
    vocab: str
    stores: dict[str, str]  # "mono.iso" etc. -> path
    configs: list[ConfigId]
    tasks: list[str]
    data: dict[str, str]
    out: str
    seed: int = 0
    workers: int = 1
    language: str = "src"
    pair: str = "src-tgt"
    tgt_vocab: str | None = None
    tgt_stores: dict[str, str] = field(default_factory=dict)
    cka_words: int | None = None


def parse_grid_spec(path: str | os.PathLike) -> GridSpec:
    """Parse and validate a grid spec file; missing paths abort here."""
    path = os.fspath(path)
    base = os.path.dirname(os.path.abspath(path))
    raw: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise GridSpecError(f"{path}:{lineno}: expected 'key = value'")
            raw.append((key.strip().lower(), value.strip()))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    stores: dict[str, str] = {}
    tgt_stores: dict[str, str] = {}
    data: dict[str, str] = {}
    configs: list[str] = []
    scalars: dict[str, str] = {}
    for key, value in raw:
        if key == "config":
            configs.append(value)
        elif key.startswith("store."):
            stores[key[len("store.") :]] = resolve(value)
        elif key.startswith("tgt.store."):
            tgt_stores[key[len("tgt.store.") :]] = resolve(value)
        elif key.startswith("data."):
            data[key] = resolve(value)
        elif key in ("vocab", "tgt.vocab", "out", "seed", "workers", "tasks",
                     "language", "pair", "cka.words"):
            scalars[key] = value
        else:
            raise GridSpecError(f"{path}: unknown key {key!r}")

    for required in ("vocab", "out", "tasks"):
        if required not in scalars:
            raise GridSpecError(f"{path}: missing required key {required!r}")
    if not configs:
        raise GridSpecError(f"{path}: no config lines")

    tasks = [t.strip() for t in scalars["tasks"].split(",") if t.strip()]
    for task in tasks:
        if task not in TASKS:
            raise GridSpecError(f"{path}: unknown task {task!r}")

    parsed_configs = [parse_config_id(c) for c in configs]

    spec = GridSpec(
        vocab=resolve(scalars["vocab"]),
        stores=stores,
        configs=parsed_configs,
        tasks=tasks,
        data=data,
        out=resolve(scalars["out"]),
        seed=int(scalars.get("seed", "0")),
        workers=int(scalars.get("workers", "1")),
        language=scalars.get("language", "src"),
        pair=scalars.get("pair", "src-tgt"),
        tgt_vocab=resolve(scalars["tgt.vocab"]) if "tgt.vocab" in scalars else None,
        tgt_stores=tgt_stores,
        cka_words=int(scalars["cka.words"]) if "cka.words" in scalars else None,
    )
    _validate_spec(spec)
    return spec


def _store_key(config: ConfigId) -> tuple[str, str | None]:
    """(primary store key, back-off store key) for a config."""
    if config.config.context.kind == "iso":
        return f"{config.source}.iso", None
    return f"{config.source}.aoc", f"{config.source}.iso"


def _validate_spec(spec: GridSpec) -> None:
    missing: list[str] = []
    if not os.path.exists(spec.vocab):
        missing.append(spec.vocab)
    for config in spec.configs:
        primary, backoff = _store_key(config)
        for key in filter(None, (primary, backoff)):
            if key not in spec.stores:
                raise GridSpecError(f"config {config.canonical()!r} needs store.{key}")
            if not os.path.exists(spec.stores[key]):
                missing.append(spec.stores[key])
            if any(t in spec.tasks for t in _XLING_TASKS):
                if key not in spec.tgt_stores:
                    raise GridSpecError(
                        f"cross-lingual tasks need tgt.store.{key} for config "
                        f"{config.canonical()!r}"
                    )
                if not os.path.exists(spec.tgt_stores[key]):
                    missing.append(spec.tgt_stores[key])
    if any(t in spec.tasks for t in _XLING_TASKS):
        if spec.tgt_vocab is None:
            raise GridSpecError("cross-lingual tasks need tgt.vocab")
        if not os.path.exists(spec.tgt_vocab):
            missing.append(spec.tgt_vocab)
    for task in spec.tasks:
        for key in _TASK_DATA_KEYS[task]:
            if key not in spec.data:
                raise GridSpecError(f"task {task!r} needs {key}")
            if not os.path.exists(spec.data[key]):
                missing.append(spec.data[key])
    if missing:
        raise GridSpecError("missing input path(s): " + ", ".join(sorted(set(missing))))


@dataclass
class ResultRow:
    config: str
    task: str
    language: str
    metric: str
    value: float
    coverage: float
    wall_time_s: float
    provenance: str
    status: str = "ok"
    error: str = ""
    artifact: str = ""

    CSV_FIELDS = (
        "config", "task", "language", "metric", "value", "coverage",
        "status", "error", "artifact", "provenance",
    )

    def csv_values(self) -> list[str]:
        return [
            self.config,
            self.task,
            self.language,
            self.metric,
            _fmt(self.value),
            _fmt(self.coverage),
            self.status,
            self.error,
            self.artifact,
            self.provenance,
        ]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "task": self.task,
            "language": self.language,
            "metric": self.metric,
            "value": self.value,
            "coverage": self.coverage,
            "wall_time_s": self.wall_time_s,
            "status": self.status,
            "error": self.error,
            "artifact": self.artifact,
            "provenance": self.provenance,
        }


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.12g}"


def _file_sha256(path: str) -> str:
    """Content hash of a file, or of a directory's files by relative path."""
    h = hashlib.sha256()
    if os.path.isdir(path):
        names = []
        for root, _dirs, files in os.walk(path):
            names.extend(os.path.join(root, f) for f in files)
        for name in sorted(names):
            h.update(os.path.relpath(name, path).encode())
            h.update(_file_sha256(name).encode())
        return h.hexdigest()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _MatrixCache:
    """On-disk matrix cache keyed by store/vocab content and config string."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self._file_hashes: dict[str, str] = {}

    def file_hash(self, path: str) -> str:
        if path not in self._file_hashes:
            self._file_hashes[path] = _file_sha256(path)
        return self._file_hashes[path]

    def key(self, store_path: str, backoff_path: str | None, vocab_path: str,
            config: ConfigId) -> str:
        parts = [
            self.file_hash(store_path),
            self.file_hash(backoff_path) if backoff_path else "-",
            self.file_hash(vocab_path),
            config.canonical(),
        ]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()

    def get_or_build(
        self,
        store_path: str,
        backoff_path: str | None,
        vocab_path: str,
        config: ConfigId,
    ) -> tuple[TypeEmbeddingMatrix, str]:
        key = self.key(store_path, backoff_path, vocab_path, config)
        cached = os.path.join(self.directory, f"{key}.lxtm")
        if os.path.exists(cached):
            return load_matrix_binary(cached), key
        vocab = Vocabulary.from_file(vocab_path)
        with open_store(store_path) as store:
            if backoff_path is not None:
                with open_store(backoff_path) as backoff:
                    matrix = build_matrix(vocab, store, config.config, backoff)
            else:
                matrix = build_matrix(vocab, store, config.config)
        save_matrix_binary(matrix, cached)
        return matrix, key


def _provenance(cache: _MatrixCache, matrix_key: str, task: str,
                data_paths: list[str], seed: int) -> str:
    parts = [matrix_key, task] + [cache.file_hash(p) for p in data_paths] + [str(seed)]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _run_config_tasks(spec: GridSpec, config: ConfigId, cache: _MatrixCache,
                      artifacts_dir: str) -> list[ResultRow]:
    rows: list[ResultRow] = []
    cid = config.canonical()
    primary_key, backoff_key = _store_key(config)
    store_path = spec.stores[primary_key]
    backoff_path = spec.stores[backoff_key] if backoff_key else None

    src_matrix: TypeEmbeddingMatrix | None = None
    src_key = ""
    tgt_matrix: TypeEmbeddingMatrix | None = None
    alignment = None

    def get_src() -> tuple[TypeEmbeddingMatrix, str]:
        nonlocal src_matrix, src_key
        if src_matrix is None:
            src_matrix, src_key = cache.get_or_build(
                store_path, backoff_path, spec.vocab, config
            )
        return src_matrix, src_key

    def get_tgt() -> TypeEmbeddingMatrix:
        nonlocal tgt_matrix
        if tgt_matrix is None:
            tgt_matrix, _ = cache.get_or_build(
                spec.tgt_stores[primary_key],
                spec.tgt_stores[backoff_key] if backoff_key else None,
                spec.tgt_vocab,
                config,
            )
        return tgt_matrix

    def get_alignment():
        nonlocal alignment
        if alignment is None:
            train = eval_xling.load_lexicon(spec.data["data.bli.train"], "train")
            alignment = eval_xling.align_spaces(get_src()[0], get_tgt(), train)
        return alignment

    for task in spec.tasks:
        started = time.perf_counter()
        data_paths = [spec.data[k] for k in _TASK_DATA_KEYS[task]]
        language = spec.pair if task in _XLING_TASKS else spec.language
        try:
            matrix, matrix_key = get_src()
            prov = _provenance(cache, matrix_key, task, data_paths, spec.seed)
            if task == "lsim":
                pairs = eval_mono.load_similarity_pairs(spec.data["data.lsim"])
                res = eval_mono.eval_lsim(matrix, pairs)
                rows.append(ResultRow(cid, task, language, "spearman_rho", res.rho,
                                      res.coverage, 0.0, prov))
            elif task == "wa":
                questions = eval_mono.load_analogy_questions(spec.data["data.wa"])
                res = eval_mono.eval_analogy(matrix, questions)
                rows.append(ResultRow(cid, task, language, "p_at_1", res.p_at_1,
                                      res.coverage, 0.0, prov))
            elif task == "bli":
                test = eval_xling.load_lexicon(spec.data["data.bli.test"], "test")
                train = eval_xling.load_lexicon(spec.data["data.bli.train"], "train")
                eval_xling.check_disjoint(train, test)
                res = eval_xling.eval_bli(matrix, get_tgt(), get_alignment().w, test)
                rows.append(ResultRow(cid, task, language, "mrr", res.mrr,
                                      res.coverage, 0.0, prov))
            elif task == "clir":
                collection = eval_xling.load_collection(spec.data["data.clir"])
                res = eval_xling.eval_clir(collection, matrix, get_tgt(),
                                           get_alignment().w)
                covered = res.evaluated / max(res.evaluated + res.skipped, 1)
                rows.append(ResultRow(cid, task, language, "map", res.map_score,
                                      covered, 0.0, prov))
            elif task == "relp":
                pairs = eval_mono.load_relation_pairs(spec.data["data.relp"])
                feat_path = os.path.join(artifacts_dir, f"{cid}.relp.lxrf")
                export = eval_mono.export_relp_features(matrix, pairs, feat_path)
                features, labels = eval_mono.load_relp_features(feat_path)
                res = eval_mono.train_relation_baseline(features, labels,
                                                        seed=spec.seed)
                coverage = export.exported / max(len(pairs), 1)
                rel_feat = os.path.relpath(feat_path, spec.out)
                rows.append(ResultRow(cid, task, language, "micro_f1_mean",
                                      res.micro_f1_mean, coverage, 0.0, prov,
                                      artifact=rel_feat))
                rows.append(ResultRow(cid, task, language, "micro_f1_std",
                                      res.micro_f1_std, coverage, 0.0, prov,
                                      artifact=rel_feat))
            elif task == "cka":
                vocab = Vocabulary.from_file(spec.vocab)
                words = list(vocab)
                if spec.cka_words is not None:
                    words = words[: spec.cka_words]
                with open_store(store_path) as store:
                    backoff = open_store(backoff_path) if backoff_path else None
                    try:
                        result = cka_mod.self_similarity(
                            store, words, config.config.context,
                            config.config.policy, backoff,
                        )
                    finally:
                        if backoff is not None:
                            backoff.close()
                art_base = os.path.join(artifacts_dir, f"{cid}.cka_self")
                result.to_json(art_base + ".json")
                result.to_csv(art_base + ".csv")
                layers = result.scores.shape[0]
                off_diag = (result.scores.sum() - layers) / (layers * layers - layers)
                covered = result.word_count / max(len(words), 1)
                rows.append(ResultRow(cid, task, language, "cka_self_mean_offdiag",
                                      float(off_diag), covered, 0.0, prov,
                                      artifact=os.path.relpath(art_base + ".json",
                                                               spec.out)))
            else:  # pragma: no cover - guarded by spec validation
                raise GridSpecError(f"unknown task {task!r}")
        except Exception as exc:  # noqa: BLE001 - row-level fault isolation
            rows.append(ResultRow(cid, task, language, "error", float("nan"),
                                  float("nan"), time.perf_counter() - started, "",
                                  status="error", error=f"{type(exc).__name__}: {exc}"))
            continue
        rows[-1].wall_time_s = time.perf_counter() - started
        if task == "relp" and len(rows) >= 2 and rows[-2].task == "relp":
            rows[-2].wall_time_s = rows[-1].wall_time_s
    return rows


def run_grid(spec: GridSpec) -> list[ResultRow]:
    """Evaluate every (config, task) cell; failures land in their row.

    Returns the rows and writes <out>/results.csv and <out>/results.json.
    """
    os.makedirs(spec.out, exist_ok=True)
    artifacts_dir = os.path.join(spec.out, "artifacts")
    os.makedirs(artifacts_dir, exist_ok=True)
    cache = _MatrixCache(os.path.join(spec.out, "cache"))

    results: dict[int, list[ResultRow]] = {}
    if spec.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(spec.workers) as pool:
            futures = {
                pool.submit(_run_config_tasks, spec, config, cache, artifacts_dir): i
                for i, config in enumerate(spec.configs)
            }
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
    else:
        for i, config in enumerate(spec.configs):
            results[i] = _run_config_tasks(spec, config, cache, artifacts_dir)

    rows = [row for i in range(len(spec.configs)) for row in results[i]]
    write_results(rows, spec.out)
    return rows


def write_results(rows: list[ResultRow], out_dir: str) -> tuple[str, str]:
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ResultRow.CSV_FIELDS)
        for row in rows:
            writer.writerow(row.csv_values())
    json_path = os.path.join(out_dir, "results.json")
    nested: dict[str, list[dict]] = {}
    for row in rows:
        nested.setdefault(row.task, []).append(row.to_dict())
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(nested, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_results(path: str | os.PathLike) -> list[dict]:
    """Load rows from a results.json (nested by task) or results.csv file."""
    path = os.fspath(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            nested = json.load(fh)
        return [row for task in sorted(nested) for row in nested[task]]
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            row["value"] = float(row["value"]) if row["value"] else float("nan")
            row["coverage"] = float(row["coverage"]) if row["coverage"] else float("nan")
            out.append(row)
        return out


def _parse_selector(selector: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in selector.split(","):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"bad selector clause {part!r} (expected key=value)")
        key = key.strip()
        if key not in ("task", "config", "language", "metric", "status"):
            raise ValueError(f"unknown selector key {key!r}")
        out[key] = value.strip()
    return out


def _layer_x(config_id: str) -> str:
    try:
        return str(parse_config_id(config_id).config.layers.n)
    except Exception:  # noqa: BLE001 - plotting never fails on odd ids
        return config_id


def emit_plot_data(
    rows: list[dict],
    selector: str,
    results_dir: str | None = None,
) -> list[tuple[str, str, str, str]]:
    """Long-format (config, x, series, value) tuples for matching rows.

    Scalar rows plot at x = the config's layer index with series
    "task/language/metric". Rows referencing a CKA artifact expand to one
    tuple per heatmap cell (x = axis_a, series = axis_b). Output is sorted
    by (task, config, series, x) so mixed selections group stably.
    """
    filters = _parse_selector(selector)
    keyed: list[tuple[tuple, tuple[str, str, str, str]]] = []
    for row in rows:
        if any(str(row.get(k, "")) != v for k, v in filters.items()):
            continue
        if row.get("status", "ok") != "ok":
            continue
        task = str(row["task"])
        config = str(row["config"])
        artifact = str(row.get("artifact", "") or "")
        if task == "cka" and artifact.endswith(".json") and results_dir:
            with open(os.path.join(results_dir, artifact), encoding="utf-8") as fh:
                art = json.load(fh)
            scores = art["scores"]
            for i, a in enumerate(art["axis_a"]):
                for j, b in enumerate(art["axis_b"]):
                    value = scores[i][j] if isinstance(scores[i], list) else scores[j]
                    keyed.append(
                        ((task, config, str(b), _sort_x(str(a))),
                         (config, str(a), str(b), _fmt(float(value))))
                    )
        else:
            series = f"{task}/{row['language']}/{row['metric']}"
            x = _layer_x(config)
            keyed.append(
                ((task, config, series, _sort_x(x)),
                 (config, x, series, _fmt(float(row["value"]))))
            )
    if not keyed:
        raise ValueError(f"selector {selector!r} matched no rows")
    keyed.sort(key=lambda kv: kv[0])
    return [kv[1] for kv in keyed]


def _sort_x(x: str):
    try:
        return (0, float(x), "")
    except ValueError:
        return (1, 0.0, x)


def write_plot_csv(series: list[tuple[str, str, str, str]],
                   path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "x", "series", "value"])
        writer.writerows(series)
