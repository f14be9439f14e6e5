"""Top-k masking of pooled weights and the k schedule used during training."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lexical import SparseVector

DEFAULT_R_DECAY = 0.2


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def top_k_indices(weights: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k largest weights, ties to the lower position, returned sorted."""
    _check_k(k)
    n = weights.shape[0]
    if k >= n:
        return np.arange(n)
    # Stable sort on -w keeps lower positions first among equal weights.
    order = np.argsort(-weights, kind="stable")[:k]
    return np.sort(order)


def top_k_mask(v: SparseVector, k: int) -> SparseVector:
    keep = top_k_indices(v.weights, k)
    return SparseVector(v.ids[keep], v.weights[keep])


def top_k_mask_dense(weights: np.ndarray, k: int) -> np.ndarray:
    """0/1 mask over a dense weight vector keeping its top-k positive entries."""
    _check_k(k)
    mask = np.zeros_like(weights)
    support = np.flatnonzero(weights > 0)
    mask[support[top_k_indices(weights[support], k)]] = 1.0
    return mask


@dataclass(frozen=True)
class DecaySchedule:
    """Constant k, or k decaying exponentially from |V| with fractional epochs.

    Exponential mode: k = max(k_min, floor(|V| * (1 - r_decay) ** (step / steps_per_epoch))).
    """

    mode: str = "constant"
    k_constant: int = 305
    r_decay: float = DEFAULT_R_DECAY
    steps_per_epoch: int = 1
    k_min: int = 1

    def __post_init__(self):
        if self.mode not in ("constant", "exponential"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if self.mode == "constant" and self.k_constant < 1:
            raise ValueError("k_constant must be >= 1")
        if self.mode == "exponential":
            if not 0.0 < self.r_decay < 1.0:
                raise ValueError("r_decay must lie in (0, 1)")
            if self.steps_per_epoch < 1:
                raise ValueError("steps_per_epoch must be >= 1")

    @classmethod
    def constant(cls, k: int) -> "DecaySchedule":
        return cls(mode="constant", k_constant=k)

    @classmethod
    def exponential(cls, r_decay: float, steps_per_epoch: int, k_min: int = 1) -> "DecaySchedule":
        return cls(mode="exponential", r_decay=r_decay, steps_per_epoch=steps_per_epoch, k_min=k_min)


def scheduled_k(schedule: DecaySchedule, step: int, vocab_size: int) -> int:
    if step < 0:
        raise ValueError("step must be non-negative")
    if schedule.mode == "constant":
        return schedule.k_constant
    k = math.floor(vocab_size * (1.0 - schedule.r_decay) ** (step / schedule.steps_per_epoch))
    return max(schedule.k_min, k)


def one_percent_k(vocab_size: int) -> int:
    """k = 1% of the vocabulary, rounded (305 for a 30522-token vocabulary)."""
    return max(1, round(0.01 * vocab_size))
