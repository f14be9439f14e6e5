"""MRR@10 / nDCG@10 and TREC run/qrels file IO."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

CUTOFF = 10

Qrels = dict[tuple[str, str], int]


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str = "splademask"


def _by_query(run: Iterable[RunEntry]) -> dict[str, list[RunEntry]]:
    out: dict[str, list[RunEntry]] = defaultdict(list)
    for e in run:
        out[e.query_id].append(e)
    for entries in out.values():
        entries.sort(key=lambda e: e.rank)
    return out


def _qrels_by_query(qrels: Mapping[tuple[str, str], int]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = defaultdict(dict)
    for (qid, did), grade in qrels.items():
        out[qid][did] = grade
    return out


def mrr_at_10(run: Iterable[RunEntry], qrels: Mapping[tuple[str, str], int]) -> float:
    """Mean over qrels queries of 1/rank of the first relevant doc within the top 10."""
    judged = _qrels_by_query(qrels)
    if not judged:
        return 0.0
    ranked = _by_query(run)
    total = 0.0
    for qid, grades in judged.items():
        for e in ranked.get(qid, ()):
            if e.rank > CUTOFF:
                break
            if grades.get(e.doc_id, 0) >= 1:
                total += 1.0 / e.rank
                break
    return total / len(judged)


def dcg(grades: Iterable[int]) -> float:
    return sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(grades))


def ndcg_at_10(run: Iterable[RunEntry], qrels: Mapping[tuple[str, str], int]) -> float:
    """Gain 2^grade - 1, discount log2(rank + 1). Queries with no relevant docs are skipped."""
    judged = _qrels_by_query(qrels)
    ranked = _by_query(run)
    scores = []
    for qid, grades in judged.items():
        ideal = dcg(sorted(grades.values(), reverse=True)[:CUTOFF])
        if ideal <= 0:
            continue
        top = [e for e in ranked.get(qid, ()) if e.rank <= CUTOFF]
        scores.append(dcg(grades.get(e.doc_id, 0) for e in top) / ideal)
    return sum(scores) / len(scores) if scores else 0.0


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 'qid 0 docid grade', got {line.rstrip()!r}")
            try:
                grade = int(parts[3])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: grade {parts[3]!r} is not an integer") from None
            if grade < 0:
                raise ParseError(f"{path}:{lineno}: negative grade")
            qrels[(parts[0], parts[2])] = grade
    return qrels


def write_qrels(path: str | Path, qrels: Mapping[tuple[str, str], int]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (qid, did), grade in qrels.items():
            f.write(f"{qid} 0 {did} {grade}\n")


def read_run(path: str | Path) -> list[RunEntry]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(f"{path}:{lineno}: expected 'qid Q0 docid rank score tag', got {line.rstrip()!r}")
            try:
                rank, score = int(parts[3]), float(parts[4])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad rank or score") from None
            if rank < 1:
                raise ParseError(f"{path}:{lineno}: rank must be >= 1")
            entries.append(RunEntry(parts[0], parts[2], rank, score, parts[5]))
    return entries


def _fmt_score(score: float) -> str:
    return str(int(score)) if float(score).is_integer() else repr(float(score))


def write_run(path: str | Path, entries: Iterable[RunEntry]) -> None:
    """Write entries grouped by query (first-seen order), rank ascending."""
    with open(path, "w", encoding="utf-8") as f:
        for qid, rows in _by_query(entries).items():
            for e in rows:
                f.write(f"{qid} Q0 {e.doc_id} {e.rank} {_fmt_score(e.score)} {e.tag}\n")
