"""Quantized impact inverted index with exact term-at-a-time retrieval.

On-disk layout (all integers little-endian):

    header   magic "SPLXIDX\\0", u32 version, u32 scale, u32 n_docs,
             u32 n_terms, u64 total_postings
    doc table  n_docs x (u32 byte length, utf-8 external id)
    postings   per term, ascending term id:
               u32 term_id, u32 count, u32[count] doc-id gaps, u32[count] impacts
    trailer  u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import heapq
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .lexical import DEFAULT_SCALE, SparseVector, quantize

INDEX_MAGIC = b"SPLXIDX\x00"
INDEX_VERSION = 1
_HEADER = struct.Struct("<8sIIIIQ")


class IndexBuildError(ValueError):
    pass


class IndexFormatError(ValueError):
    pass


class IndexIntegrityError(IndexFormatError):
    pass


@dataclass(frozen=True)
class Posting:
    doc_id: int
    impact: int


@dataclass(frozen=True)
class IndexStats:
    num_docs: int = 0
    total_postings: int = 0
    avg_nnz: float = 0.0
    size_bytes: int | None = None


@dataclass
class ImpactIndex:
    """Term id -> (doc ids, impacts), both int64 arrays sorted by doc id."""

    scale: int
    doc_table: list[str]
    postings: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    size_bytes: int | None = None

    @property
    def stats(self) -> IndexStats:
        n = len(self.doc_table)
        total = sum(int(d.size) for d, _ in self.postings.values())
        return IndexStats(n, total, total / n if n else 0.0, self.size_bytes)

    def posting_list(self, term_id: int) -> list[Posting]:
        if term_id not in self.postings:
            return []
        docs, imps = self.postings[term_id]
        return [Posting(d, i) for d, i in zip(docs.tolist(), imps.tolist())]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImpactIndex):
            return NotImplemented
        if self.scale != other.scale or self.doc_table != other.doc_table:
            return False
        if self.postings.keys() != other.postings.keys():
            return False
        return all(
            np.array_equal(self.postings[t][0], other.postings[t][0])
            and np.array_equal(self.postings[t][1], other.postings[t][1])
            for t in self.postings
        )


def build(vectors: Iterable[tuple[str, SparseVector]], scale: int = DEFAULT_SCALE) -> ImpactIndex:
    doc_table: list[str] = []
    seen: set[str] = set()
    lists: dict[int, tuple[list[int], list[int]]] = {}
    for ext_id, vec in vectors:
        if ext_id in seen:
            raise IndexBuildError(f"duplicate document id {ext_id!r}")
        seen.add(ext_id)
        doc = len(doc_table)
        doc_table.append(ext_id)
        q = quantize(vec, scale)
        for t, imp in zip(q.ids.tolist(), q.impacts.tolist()):
            docs, imps = lists.setdefault(t, ([], []))
            docs.append(doc)
            imps.append(imp)
    postings = {
        t: (np.array(d, dtype=np.int64), np.array(i, dtype=np.int64)) for t, (d, i) in sorted(lists.items())
    }
    return ImpactIndex(scale, doc_table, postings)


def search(
    index: ImpactIndex, query: SparseVector, top_k: int = 10, scale: int | None = None
) -> list[tuple[str, int]]:
    """Rank documents by the sum over shared terms of query impact x document impact.

    Ties go to the earlier-indexed document; zero-score documents are never returned.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    q = quantize(query, index.scale if scale is None else scale)
    acc = np.zeros(len(index.doc_table), dtype=np.int64)
    for t, qi in zip(q.ids.tolist(), q.impacts.tolist()):
        hit = index.postings.get(t)
        if hit is not None:
            acc[hit[0]] += qi * hit[1]
    matched = np.flatnonzero(acc)
    best = heapq.nsmallest(top_k, zip((-acc[matched]).tolist(), matched.tolist()))
    return [(index.doc_table[d], -neg) for neg, d in best]


def to_bytes(index: ImpactIndex) -> bytes:
    parts = [
        _HEADER.pack(
            INDEX_MAGIC, INDEX_VERSION, index.scale, len(index.doc_table), len(index.postings), index.stats.total_postings
        )
    ]
    for ext in index.doc_table:
        raw = ext.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    for t in sorted(index.postings):
        docs, imps = index.postings[t]
        gaps = np.diff(docs, prepend=0)
        parts.append(struct.pack("<II", t, docs.size))
        parts.append(gaps.astype("<u4").tobytes())
        parts.append(imps.astype("<u4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> ImpactIndex:
    if len(data) < _HEADER.size + 4:
        raise IndexFormatError("index file truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    magic, version, scale, n_docs, n_terms, total = _HEADER.unpack_from(body)
    if magic != INDEX_MAGIC:
        raise IndexFormatError("not an impact index file")
    if version != INDEX_VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    if zlib.crc32(body) != crc:
        raise IndexIntegrityError("index checksum mismatch")
    pos = _HEADER.size
    try:
        doc_table = []
        for _ in range(n_docs):
            (n,) = struct.unpack_from("<I", body, pos)
            pos += 4
            if pos + n > len(body):
                raise IndexFormatError("doc table truncated")
            doc_table.append(body[pos : pos + n].decode("utf-8"))
            pos += n
        postings = {}
        for _ in range(n_terms):
            t, count = struct.unpack_from("<II", body, pos)
            pos += 8
            if pos + 8 * count > len(body):
                raise IndexFormatError("posting block truncated")
            gaps = np.frombuffer(body, dtype="<u4", count=count, offset=pos).astype(np.int64)
            pos += 4 * count
            imps = np.frombuffer(body, dtype="<u4", count=count, offset=pos).astype(np.int64)
            pos += 4 * count
            postings[t] = (np.cumsum(gaps), imps)
    except struct.error as e:
        raise IndexFormatError(f"index file truncated ({e})") from e
    if pos != len(body):
        raise IndexFormatError("trailing bytes after posting blocks")
    index = ImpactIndex(scale, doc_table, postings, size_bytes=len(data))
    if index.stats.total_postings != total:
        raise IndexFormatError("posting count does not match header")
    return index


def save(index: ImpactIndex, path: str | Path) -> int:
    data = to_bytes(index)
    Path(path).write_bytes(data)
    index.size_bytes = len(data)
    return len(data)


def load(path: str | Path) -> ImpactIndex:
    return from_bytes(Path(path).read_bytes())
