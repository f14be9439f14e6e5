"""Glue for encode -> mask -> index -> search -> evaluate runs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .encoder import EncoderParams, encode_many
from .evaluation import RunEntry, mrr_at_10, ndcg_at_10
from .index import ImpactIndex, build, search
from .lexical import DEFAULT_SCALE, SparseVector, nnz
from .sparsifier import top_k_mask

DEFAULT_TAG = "splademask"


def encode_items(
    params: EncoderParams, items: Sequence[tuple[str, Sequence[int]]], threads: int = 1
) -> list[tuple[str, SparseVector]]:
    vecs = encode_many(params, [tokens for _, tokens in items], threads=threads)
    return [(key, v) for (key, _), v in zip(items, vecs)]


def mask_items(items: Sequence[tuple[str, SparseVector]], k: int | None) -> list[tuple[str, SparseVector]]:
    if k is None:
        return list(items)
    return [(key, top_k_mask(v, k)) for key, v in items]


def run_queries(
    index: ImpactIndex, queries: Sequence[tuple[str, SparseVector]], top_k: int = 10, tag: str = DEFAULT_TAG
) -> list[RunEntry]:
    run = []
    for qid, qv in queries:
        for rank, (doc, score) in enumerate(search(index, qv, top_k), 1):
            run.append(RunEntry(qid, doc, rank, float(score), tag))
    return run


@dataclass
class RetrievalReport:
    mrr_at_10: float
    ndcg_at_10: float
    avg_nnz: float
    total_postings: int
    avg_query_nnz: float


def evaluate_params(
    params: EncoderParams,
    passages: Sequence[tuple[str, Sequence[int]]],
    queries: Sequence[tuple[str, Sequence[int]]],
    qrels,
    k: int | None = None,
    query_k: int | None = None,
    scale: int = DEFAULT_SCALE,
    threads: int = 1,
) -> RetrievalReport:
    """Encode, optionally top-k mask, index, and score one parameter set."""
    docs = mask_items(encode_items(params, passages, threads), k)
    qs = mask_items(encode_items(params, queries, threads), query_k if query_k is not None else k)
    index = build(docs, scale)
    run = run_queries(index, qs)
    stats = index.stats
    return RetrievalReport(
        mrr_at_10(run, qrels),
        ndcg_at_10(run, qrels),
        stats.avg_nnz,
        stats.total_postings,
        sum(nnz(v) for _, v in qs) / len(qs) if qs else 0.0,
    )
