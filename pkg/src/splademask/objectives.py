"""Contrastive ranking loss, KL self-learning loss, and their score gradients.

A row holds one query's similarity scores against its candidates, positive
first. The masked row comes from top-k masked representations and the
unmasked row from the raw pooled ones; both share the candidate order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class SimilarityRow:
    positive_score: float
    negative_scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "negative_scores", tuple(float(s) for s in self.negative_scores))
        if not self.negative_scores:
            raise ValueError("a similarity row needs at least one negative")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("similarity scores must be finite")

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> "SimilarityRow":
        return cls(float(scores[0]), tuple(scores[1:]))

    @property
    def scores(self) -> np.ndarray:
        return np.array((self.positive_score, *self.negative_scores), dtype=np.float64)

    def __len__(self) -> int:
        return 1 + len(self.negative_scores)


@dataclass(frozen=True)
class LossBreakdown:
    rank_loss: float
    kl_loss: float
    combined: float
    lambda_kl: float

    @classmethod
    def mean(cls, parts: Sequence["LossBreakdown"]) -> "LossBreakdown":
        n = len(parts)
        lam = parts[0].lambda_kl
        rank = sum(p.rank_loss for p in parts) / n
        kl = sum(p.kl_loss for p in parts) / n
        return cls(rank, kl, rank + lam * kl, lam)


def _scores(row) -> np.ndarray:
    return row.scores if isinstance(row, SimilarityRow) else np.asarray(row, dtype=np.float64)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    return scores - logsumexp(scores)


def softmax_distribution(row: SimilarityRow) -> np.ndarray:
    s = _scores(row)
    e = np.exp(s - s.max())
    return e / e.sum()


def rank_loss(row: SimilarityRow) -> float:
    s = _scores(row)
    pos, neg = s[0], s[1:]
    m = neg.max()
    if pos >= m:
        # log1p keeps precision when the positive dominates.
        return float(np.log1p(np.exp(neg - pos).sum()))
    return float(m - pos + np.log(np.exp(pos - m) + np.exp(neg - m).sum()))


def _check_arity(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"row arity mismatch: {a.shape[0]} vs {b.shape[0]}")


def kl_loss(masked: SimilarityRow, unmasked: SimilarityRow) -> float:
    """KL(P_masked || P_unmasked) over the shared candidate list."""
    a, b = _scores(masked), _scores(unmasked)
    _check_arity(a, b)
    log_p, log_q = log_softmax(a), log_softmax(b)
    return max(0.0, float(np.sum(np.exp(log_p) * (log_p - log_q))))


def combined_loss(masked: SimilarityRow, unmasked: SimilarityRow, lambda_kl: float = 1.0) -> LossBreakdown:
    if lambda_kl < 0:
        raise ValueError("lambda_kl must be non-negative")
    r = rank_loss(masked)
    kl = kl_loss(masked, unmasked)
    return LossBreakdown(r, kl, r + lambda_kl * kl, lambda_kl)


def loss_gradients(
    masked: SimilarityRow,
    unmasked: SimilarityRow,
    lambda_kl: float = 1.0,
    stop_gradient_unmasked: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of ``combined_loss`` w.r.t. the masked and unmasked scores.

    rank:  d/da = softmax(a) - onehot(0)
    kl:    d/da = p * (log p - log q - KL),   d/db = q - p
    """
    a, b = _scores(masked), _scores(unmasked)
    _check_arity(a, b)
    log_p, log_q = log_softmax(a), log_softmax(b)
    p, q = np.exp(log_p), np.exp(log_q)

    grad_a = p.copy()
    grad_a[0] -= 1.0
    grad_b = np.zeros_like(b)
    if lambda_kl:
        diff = log_p - log_q
        kl = float(np.sum(p * diff))
        grad_a += lambda_kl * p * (diff - kl)
        if not stop_gradient_unmasked:
            grad_b += lambda_kl * (q - p)
    return grad_a, grad_b
