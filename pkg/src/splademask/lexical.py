"""Vocabulary-dimensional sparse vectors: similarity, quantization, IO."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

DEFAULT_SCALE = 100
BERT_VOCAB_SIZE = 30522
DESK_VOCAB_SIZE = 1000


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def synthetic(cls, size: int = DESK_VOCAB_SIZE) -> "Vocabulary":
        return cls(tuple(f"t{i}" for i in range(size)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _check_ids(ids: np.ndarray) -> None:
    if ids.size and (ids[0] < 0 or np.any(np.diff(ids) <= 0)):
        raise ValueError("term ids must be non-negative and strictly increasing")


class SparseVector:
    """Term weights keyed by vocabulary index.

    Entries are kept as two parallel read-only arrays sorted by term id.
    Zero weights are never stored.
    """

    __slots__ = ("ids", "weights")

    def __init__(self, ids: Sequence[int] | np.ndarray = (), weights: Sequence[float] | np.ndarray = ()):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if ids.shape != weights.shape:
            raise ValueError("ids and weights must have the same length")
        _check_ids(ids)
        if weights.size and not (np.all(np.isfinite(weights)) and np.all(weights > 0)):
            raise ValueError("weights must be finite and strictly positive")
        self.ids = _frozen(ids.copy())
        self.weights = _frozen(weights.copy())

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        pairs = sorted(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def from_dict(cls, d: Mapping[int | str, float]) -> "SparseVector":
        return cls.from_pairs((int(k), float(v)) for k, v in d.items() if float(v) != 0.0)

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.weights.tolist()))

    def to_dict(self) -> dict[int, float]:
        return dict(self.items())

    def __len__(self) -> int:
        return int(self.ids.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.ids.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        return f"SparseVector({self.items()!r})"


class QuantizedVector:
    """Integer impacts keyed by term id; impacts are always >= 1."""

    __slots__ = ("ids", "impacts")

    def __init__(self, ids: Sequence[int] | np.ndarray = (), impacts: Sequence[int] | np.ndarray = ()):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        impacts = np.asarray(impacts, dtype=np.int64).reshape(-1)
        if ids.shape != impacts.shape:
            raise ValueError("ids and impacts must have the same length")
        _check_ids(ids)
        if impacts.size and impacts.min() < 1:
            raise ValueError("impacts must be >= 1")
        self.ids = _frozen(ids.copy())
        self.impacts = _frozen(impacts.copy())

    def items(self) -> list[tuple[int, int]]:
        return list(zip(self.ids.tolist(), self.impacts.tolist()))

    def __len__(self) -> int:
        return int(self.ids.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedVector):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.impacts, other.impacts)

    def __repr__(self) -> str:
        return f"QuantizedVector({self.items()!r})"


def inner_product(a: SparseVector, b: SparseVector) -> float:
    _, ia, ib = np.intersect1d(a.ids, b.ids, assume_unique=True, return_indices=True)
    if ia.size == 0:
        return 0.0
    return float(np.dot(a.weights[ia], b.weights[ib]))


def round_half_away(x: float, scale: int) -> int:
    """Round ``x * scale`` to the nearest integer, halves away from zero.

    Halves are judged on the decimal value of ``x`` (its shortest repr), so
    2.675 at scale 100 gives 268 even though the binary product is
    267.49999...
    """
    y = x * scale
    frac = y - math.floor(y)
    if abs(frac - 0.5) > 1e-6:
        return int(math.copysign(math.floor(abs(y) + 0.5), y))
    d = Decimal(repr(float(x))) * scale
    return int(d.to_integral_value(rounding=ROUND_HALF_UP))


def quantize(v: SparseVector, scale: int = DEFAULT_SCALE) -> QuantizedVector:
    if scale < 1:
        raise ValueError("scale must be >= 1")
    w = v.weights
    y = w * scale
    impacts = np.floor(y + 0.5).astype(np.int64)
    # Resolve the rare near-half cases with decimal arithmetic.
    near_half = np.abs((y - np.floor(y)) - 0.5) <= 1e-6
    for i in np.flatnonzero(near_half):
        impacts[i] = round_half_away(float(w[i]), scale)
    keep = impacts > 0
    return QuantizedVector(v.ids[keep], impacts[keep])


def nnz(v: SparseVector | QuantizedVector) -> int:
    return len(v)


def densify(v: SparseVector, size: int) -> np.ndarray:
    if len(v) and v.ids[-1] >= size:
        raise ValueError(f"term id {int(v.ids[-1])} out of range for |V|={size}")
    out = np.zeros(size, dtype=np.float64)
    out[v.ids] = v.weights
    return out


def sparsify(dense: np.ndarray) -> SparseVector:
    dense = np.asarray(dense, dtype=np.float64)
    if np.any(dense < 0):
        raise ValueError("dense vector has negative weights")
    ids = np.flatnonzero(dense)
    return SparseVector(ids, dense[ids])


# JSONL vector files: {"id": "...", "vector": {"<term_id>": weight, ...}}


def vector_to_json(vid: str, v: SparseVector) -> str:
    body = {str(t): w for t, w in v.items()}
    return json.dumps({"id": vid, "vector": body}, separators=(",", ":"))


def vector_from_json(line: str) -> tuple[str, SparseVector]:
    obj = json.loads(line)
    raw = obj["vector"]
    for w in raw.values():
        if not (isinstance(w, (int, float)) and math.isfinite(w) and w >= 0):
            raise ValueError(f"invalid weight {w!r} for {obj.get('id')!r}")
    return str(obj["id"]), SparseVector.from_dict(raw)


def write_vectors(path: str | Path, items: Iterable[tuple[str, SparseVector]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for vid, v in items:
            f.write(vector_to_json(vid, v))
            f.write("\n")
            n += 1
    return n


def iter_vectors(path: str | Path) -> Iterator[tuple[str, SparseVector]]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield vector_from_json(line)
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: bad vector line ({e})") from e


def read_vectors(path: str | Path) -> list[tuple[str, SparseVector]]:
    return list(iter_vectors(path))
