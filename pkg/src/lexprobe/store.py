"""Binary store of per-word, per-occurrence, per-layer token embeddings.

File layout (all integers little-endian):

    bytes 0-3    magic "LXTS"
    bytes 4-7    format_version, u32
    bytes 8-15   header_json_length, u64
    ...          UTF-8 JSON header: model_id, source_kind, num_layers, dim,
                 export_seed, index = [{word, offset, count}, ...]
    ...          payload: records in index order

Each record is: u32 token_count, token_count flag bytes
(0=CONTENT, 1=CLS, 2=SEP), then num_layers * token_count * dim f32 values,
layer-major (all tokens of layer 0, then layer 1, ...) so that single-layer
slices are contiguous. Index offsets are byte offsets into the payload,
i.e. relative to the end of the JSON header.

A store is immutable once written; handles are backed by mmap and safe for
concurrent reads.
"""

from __future__ import annotations

import io
import json
import mmap
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from lexprobe.errors import (
    DimensionMismatchError,
    DuplicateWordError,
    StoreCorruptionError,
    StoreFormatError,
    WordNotFoundError,
)

MAGIC = b"LXTS"
FORMAT_VERSION = 1

FLAG_CONTENT = 0
FLAG_CLS = 1
FLAG_SEP = 2

SOURCE_KINDS = ("mono", "multi")


class Vocabulary:
    """Ordered list of unique lowercase words; canonical matrix row order."""

    def __init__(self, words: Iterable[str]):
        self.words: list[str] = []
        self._index: dict[str, int] = {}
        for w in words:
            lw = w.strip().lower()
            if not lw:
                continue
            if lw in self._index:
                raise ValueError(f"duplicate vocabulary word: {lw!r}")
            self._index[lw] = len(self.words)
            self.words.append(lw)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls(line.strip() for line in fh if line.strip())

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self) -> Iterator[str]:
        return iter(self.words)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._index

    def index_of(self, word: str) -> int:
        try:
            return self._index[word.lower()]
        except KeyError:
            raise WordNotFoundError(word) from None

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words


@dataclass
class StoreHeader:
    """Descriptive store metadata (the index is managed by the writer)."""

    model_id: str
    source_kind: str
    num_layers: int
    dim: int
    export_seed: int | None = None
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        if self.source_kind not in SOURCE_KINDS:
            raise ValueError(f"source_kind must be one of {SOURCE_KINDS}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


@dataclass
class OccurrenceRecord:
    """One occurrence of a word: token flags plus per-layer token vectors.

    vectors has shape [num_layers, token_count, dim], float32.
    """

    word: str
    token_flags: np.ndarray
    vectors: np.ndarray

    @property
    def token_count(self) -> int:
        return int(self.token_flags.shape[0])

    @property
    def subword_count(self) -> int:
        return int(np.count_nonzero(self.token_flags == FLAG_CONTENT))

    def validate(self, num_layers: int, dim: int) -> None:
        flags = np.asarray(self.token_flags)
        vecs = np.asarray(self.vectors)
        if vecs.ndim != 3 or vecs.shape != (num_layers, flags.shape[0], dim):
            raise DimensionMismatchError(
                f"record for {self.word!r}: vectors shape {vecs.shape} does not "
                f"match (num_layers={num_layers}, tokens={flags.shape[0]}, dim={dim})"
            )
        if flags.shape[0] < 1:
            raise DimensionMismatchError(f"record for {self.word!r} has no tokens")
        if not np.isin(flags, (FLAG_CONTENT, FLAG_CLS, FLAG_SEP)).all():
            raise ValueError(f"record for {self.word!r} carries unknown token flags")
        if int(np.count_nonzero(flags == FLAG_CLS)) > 1:
            raise ValueError(f"record for {self.word!r} has more than one CLS token")
        if int(np.count_nonzero(flags == FLAG_SEP)) > 1:
            raise ValueError(f"record for {self.word!r} has more than one SEP token")
        if not np.isfinite(vecs).all():
            raise ValueError(f"record for {self.word!r} contains non-finite values")


def _encode_record(record: OccurrenceRecord) -> bytes:
    flags = np.ascontiguousarray(record.token_flags, dtype=np.uint8)
    vecs = np.ascontiguousarray(record.vectors, dtype="<f4")
    buf = io.BytesIO()
    buf.write(struct.pack("<I", flags.shape[0]))
    buf.write(flags.tobytes())
    buf.write(vecs.tobytes())
    return buf.getvalue()


def write_store(
    header: StoreHeader,
    records: Iterable[OccurrenceRecord],
    path: str | os.PathLike,
) -> None:
    """Write a token store. Records must arrive grouped by word.

    Rejects records whose shape disagrees with the header and word groups
    that reappear after ending. The payload is spooled to a temporary file
    beside the output so arbitrarily large streams can be written.
    """
    header.validate()
    path = os.fspath(path)
    out_dir = os.path.dirname(os.path.abspath(path))
    index: list[dict] = []
    seen: set[str] = set()
    current: str | None = None
    tmp = tempfile.NamedTemporaryFile(dir=out_dir, delete=False, suffix=".lxts.tmp")
    try:
        offset = 0
        for record in records:
            word = record.word.lower()
            record.validate(header.num_layers, header.dim)
            if word != current:
                if word in seen:
                    raise DuplicateWordError(
                        f"records for {word!r} are not contiguous"
                    )
                seen.add(word)
                current = word
                index.append({"word": word, "offset": offset, "count": 0})
            index[-1]["count"] += 1
            data = _encode_record(record)
            tmp.write(data)
            offset += len(data)
        tmp.flush()

        header_json = json.dumps(
            {
                "model_id": header.model_id,
                "source_kind": header.source_kind,
                "num_layers": header.num_layers,
                "dim": header.dim,
                "export_seed": header.export_seed,
                "index": index,
            },
            ensure_ascii=False,
            separators=(",", ":"),
        ).encode("utf-8")

        with open(path, "wb") as out:
            out.write(MAGIC)
            out.write(struct.pack("<I", header.format_version))
            out.write(struct.pack("<Q", len(header_json)))
            out.write(header_json)
            tmp.seek(0)
            shutil.copyfileobj(tmp, out)
    finally:
        tmp.close()
        os.unlink(tmp.name)


@dataclass
class _IndexEntry:
    offset: int
    count: int


class StoreHandle:
    """Read-only, random-access view of a token store file."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._file = open(self.path, "rb")
        try:
            self._mm = mmap.mmap(self._file.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError:
            self._file.close()
            raise StoreFormatError(f"{self.path}: empty file")
        self._parse_header()

    def _parse_header(self) -> None:
        mm = self._mm
        if len(mm) < 16:
            raise StoreFormatError(f"{self.path}: too short for a store header")
        if mm[0:4] != MAGIC:
            raise StoreFormatError(f"{self.path}: bad magic {bytes(mm[0:4])!r}")
        (version,) = struct.unpack("<I", mm[4:8])
        if version != FORMAT_VERSION:
            raise StoreFormatError(f"{self.path}: unsupported version {version}")
        (json_len,) = struct.unpack("<Q", mm[8:16])
        if 16 + json_len > len(mm):
            raise StoreCorruptionError(f"{self.path}: header extends past file end")
        try:
            meta = json.loads(mm[16 : 16 + json_len].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise StoreFormatError(f"{self.path}: invalid header JSON: {exc}") from exc

        self.header = StoreHeader(
            model_id=meta["model_id"],
            source_kind=meta["source_kind"],
            num_layers=int(meta["num_layers"]),
            dim=int(meta["dim"]),
            export_seed=meta.get("export_seed"),
            format_version=version,
        )
        self.header.validate()
        self._payload_start = 16 + json_len
        payload_len = len(mm) - self._payload_start

        self._index: dict[str, _IndexEntry] = {}
        self.words: list[str] = []
        prev = -1
        for entry in meta["index"]:
            word = entry["word"]
            off = int(entry["offset"])
            count = int(entry["count"])
            if count < 1:
                raise StoreCorruptionError(
                    f"{self.path}: word {word!r} indexed with zero occurrences"
                )
            if off <= prev:
                raise StoreCorruptionError(
                    f"{self.path}: index offsets not strictly increasing at {word!r}"
                )
            if off >= payload_len:
                raise StoreCorruptionError(
                    f"{self.path}: offset of {word!r} is past the payload end"
                )
            if word in self._index:
                raise StoreCorruptionError(f"{self.path}: duplicate index word {word!r}")
            prev = off
            self._index[word] = _IndexEntry(off, count)
            self.words.append(word)

    @property
    def vocab_size(self) -> int:
        return len(self.words)

    @property
    def num_layers(self) -> int:
        return self.header.num_layers

    @property
    def dim(self) -> int:
        return self.header.dim

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._index

    def occurrence_count(self, word: str) -> int:
        return self._entry(word).count

    def _entry(self, word: str) -> _IndexEntry:
        try:
            return self._index[word.lower()]
        except KeyError:
            raise WordNotFoundError(word) from None

    def _walk_records(self, word: str, limit: int | None):
        """Yield (flags, vectors) views for up to `limit` stored records."""
        entry = self._entry(word)
        n = entry.count if limit is None else min(limit, entry.count)
        mm = self._mm
        pos = self._payload_start + entry.offset
        layers, dim = self.header.num_layers, self.header.dim
        for _ in range(n):
            if pos + 4 > len(mm):
                raise StoreCorruptionError(f"{self.path}: truncated record header")
            (ntok,) = struct.unpack("<I", mm[pos : pos + 4])
            pos += 4
            vec_bytes = layers * ntok * dim * 4
            if pos + ntok + vec_bytes > len(mm):
                raise StoreCorruptionError(
                    f"{self.path}: truncated payload while reading {word!r}"
                )
            flags = np.frombuffer(mm, dtype=np.uint8, count=ntok, offset=pos)
            pos += ntok
            vecs = np.frombuffer(mm, dtype="<f4", count=layers * ntok * dim, offset=pos)
            pos += vec_bytes
            yield flags, vecs.reshape(layers, ntok, dim)

    def read_occurrences(
        self, word: str, limit: int | None = None
    ) -> list[OccurrenceRecord]:
        """Return up to `limit` occurrence records for `word`, in stored order."""
        lw = word.lower()
        return [
            OccurrenceRecord(word=lw, token_flags=flags.copy(), vectors=vecs.copy())
            for flags, vecs in self._walk_records(word, limit)
        ]

    def word_arrays(
        self, word: str, limit: int | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated (vectors, flags, token_bounds) for kernel consumption."""
        vec_parts: list[np.ndarray] = []
        flag_parts: list[np.ndarray] = []
        bounds = [0]
        for flags, vecs in self._walk_records(word, limit):
            flag_parts.append(flags)
            vec_parts.append(vecs.ravel())
            bounds.append(bounds[-1] + flags.shape[0])
        return (
            np.concatenate(vec_parts) if vec_parts else np.empty(0, np.float32),
            np.concatenate(flag_parts) if flag_parts else np.empty(0, np.uint8),
            np.asarray(bounds, np.int64),
        )

    def close(self) -> None:
        if getattr(self, "_mm", None) is not None:
            self._mm.close()
            self._mm = None  # type: ignore[assignment]
        if getattr(self, "_file", None) is not None:
            self._file.close()
            self._file = None  # type: ignore[assignment]

    def __enter__(self) -> "StoreHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_store(path: str | os.PathLike) -> StoreHandle:
    """Open a token store read-only, validating magic, version and index."""
    return StoreHandle(path)
