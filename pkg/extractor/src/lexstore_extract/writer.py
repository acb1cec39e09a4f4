"""Standalone writer for the LXTS token-store wire format.

Layout: magic "LXTS", u32 format version, u64 JSON header length, UTF-8
JSON header (model_id, source_kind, num_layers, dim, export_seed, index of
{word, offset, count} with offsets relative to the payload start), then per
record: u32 token_count, token_count flag bytes (0=content, 1=CLS, 2=SEP),
num_layers * token_count * dim float32 little-endian values, layer-major.

Records must be appended grouped by word.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import tempfile

import numpy as np

MAGIC = b"LXTS"
FORMAT_VERSION = 1

FLAG_CONTENT = 0
FLAG_CLS = 1
FLAG_SEP = 2


class StoreWriter:
    def __init__(self, path, model_id: str, source_kind: str, num_layers: int,
                 dim: int, export_seed: int | None):
        self.path = os.fspath(path)
        self.model_id = model_id
        self.source_kind = source_kind
        self.num_layers = num_layers
        self.dim = dim
        self.export_seed = export_seed
        self._index: list[dict] = []
        self._seen: set[str] = set()
        self._current: str | None = None
        self._offset = 0
        out_dir = os.path.dirname(os.path.abspath(self.path))
        self._spool = tempfile.NamedTemporaryFile(
            dir=out_dir, delete=False, suffix=".lxts.tmp"
        )

    def add(self, word: str, flags: np.ndarray, vectors: np.ndarray) -> None:
        word = word.lower()
        flags = np.ascontiguousarray(flags, np.uint8)
        vectors = np.ascontiguousarray(vectors, "<f4")
        if vectors.shape != (self.num_layers, flags.shape[0], self.dim):
            raise ValueError(
                f"record for {word!r}: shape {vectors.shape} does not match "
                f"({self.num_layers}, {flags.shape[0]}, {self.dim})"
            )
        if not np.isfinite(vectors).all():
            raise ValueError(f"record for {word!r} contains non-finite values")
        if word != self._current:
            if word in self._seen:
                raise ValueError(f"records for {word!r} are not contiguous")
            self._seen.add(word)
            self._current = word
            self._index.append({"word": word, "offset": self._offset, "count": 0})
        self._index[-1]["count"] += 1
        blob = struct.pack("<I", flags.shape[0]) + flags.tobytes() + vectors.tobytes()
        self._spool.write(blob)
        self._offset += len(blob)

    def finish(self) -> None:
        try:
            self._spool.flush()
            header = json.dumps(
                {
                    "model_id": self.model_id,
                    "source_kind": self.source_kind,
                    "num_layers": self.num_layers,
                    "dim": self.dim,
                    "export_seed": self.export_seed,
                    "index": self._index,
                },
                ensure_ascii=False,
                separators=(",", ":"),
            ).encode("utf-8")
            with open(self.path, "wb") as out:
                out.write(MAGIC)
                out.write(struct.pack("<I", FORMAT_VERSION))
                out.write(struct.pack("<Q", len(header)))
                out.write(header)
                self._spool.seek(0)
                shutil.copyfileobj(self._spool, out)
        finally:
            self._spool.close()
            os.unlink(self._spool.name)

    def __enter__(self) -> "StoreWriter":
        return self

    def __exit__(self, exc_type, *exc) -> None:
        if exc_type is None:
            self.finish()
        else:
            self._spool.close()
            os.unlink(self._spool.name)
