"""Exact inner-product exemplar index and its versioned binary file format.

File layout (all integers little-endian)::

    magic      8 bytes  b"EGPINDEX"
    version    u16
    dimension  u32
    count      u32
    meta_len   u32
    metadata   meta_len bytes of UTF-8 JSON (sorted keys)
    id table   count x (u32 length + UTF-8 bytes)
    vectors    count x dimension float64, row-major
"""

from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from egp.exemplars.embedding import EmbeddingProvider, embed_batch
from egp.exemplars.records import TrainingQuestion
from egp.exemplars.templating import TEMPLATING_VERSION, template_question

MAGIC = b"EGPINDEX"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHIII")
_U32 = struct.Struct("<I")


class IndexBuildError(ValueError):
    pass


class IndexFormatError(ValueError):
    """Wrong magic bytes or unsupported version."""


class IndexCorruptionError(ValueError):
    """File is truncated or internally inconsistent."""


@dataclass(eq=False)
class ExemplarIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError("vectors must be a (count, dimension) array aligned with ids")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")
        self.vectors.setflags(write=False)
        # ranks[i] = position of ids[i] in ascending id order, used for tie-breaking
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        self._rank = np.empty(len(self.ids), dtype=np.int64)
        self._rank[order] = np.arange(len(self.ids))

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExemplarIndex):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.metadata == other.metadata
            and self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    def vector(self, question_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(question_id)]

    def ranked(self, query: np.ndarray, n: int) -> list[tuple[str, float]]:
        """Top ``n`` entries by inner product, ties by ascending id."""
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dimension,):
            raise ValueError(f"query dimension {query.shape} does not match index dimension {self.dimension}")
        scores = self.vectors @ query
        order = np.lexsort((self._rank, -scores))[:n]
        return [(self.ids[i], float(scores[i])) for i in order]


def build_index(
    records: Sequence[TrainingQuestion],
    provider: EmbeddingProvider,
    category_lookup: Callable[[str], str | None] | None = None,
    batch_size: int = 64,
    parallelism: int = 1,
) -> ExemplarIndex:
    """Template and embed every record's question text."""
    if not records:
        raise IndexBuildError("no records to index")
    dupes = sorted(i for i, c in Counter(r.id for r in records).items() if c > 1)
    if dupes:
        raise IndexBuildError(f"duplicate record ids: {', '.join(dupes)}")
    texts = [template_question(r.text, r.topic_entities, category_lookup).text for r in records]
    vectors = embed_batch(provider, texts, batch_size=batch_size, parallelism=parallelism)
    meta = {"provider": provider.name, "templating_version": TEMPLATING_VERSION}
    return ExemplarIndex(tuple(r.id for r in records), vectors, meta)


def dump_index(index: ExemplarIndex) -> bytes:
    meta = json.dumps(index.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, index.dimension, len(index), len(meta)), meta]
    for qid in index.ids:
        raw = qid.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    parts.append(index.vectors.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def parse_index(data: bytes) -> ExemplarIndex:
    if len(data) < _HEADER.size:
        if not MAGIC.startswith(data[: len(MAGIC)]):
            raise IndexFormatError("bad magic bytes")
        raise IndexCorruptionError("truncated header")
    magic, version, dim, count, meta_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise IndexFormatError("bad magic bytes")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    pos = _HEADER.size

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise IndexCorruptionError("truncated index file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    try:
        metadata = json.loads(take(meta_len).decode("utf-8"))
        ids = []
        for _ in range(count):
            (n,) = _U32.unpack(take(_U32.size))
            ids.append(take(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IndexCorruptionError(f"unreadable index section: {exc}") from exc
    block = take(count * dim * 8)
    if pos != len(data):
        raise IndexCorruptionError(f"{len(data) - pos} trailing bytes after vector block")
    vectors = np.frombuffer(block, dtype="<f8").reshape(count, dim).astype(np.float64)
    try:
        return ExemplarIndex(tuple(ids), vectors, metadata)
    except ValueError as exc:
        raise IndexCorruptionError(str(exc)) from exc


def save_index(index: ExemplarIndex, path) -> None:
    Path(path).write_bytes(dump_index(index))


def load_index(path) -> ExemplarIndex:
    return parse_index(Path(path).read_bytes())
