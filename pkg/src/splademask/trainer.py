"""Mini-batch training of the toy encoder with optional joint top-k masking.

Each query in a batch is scored against its own positive, its own explicit
negatives, and the other queries' positives (in-batch negatives). With joint
masking, the loss combines the ranking loss on masked representations with
KL(masked || unmasked); gradients pass straight through the mask on the
retained entries.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import EncoderParams, InvalidTokenError, backward, forward, zero_grads
from .objectives import LossBreakdown, SimilarityRow, combined_loss, loss_gradients
from .sparsifier import DecaySchedule, scheduled_k, top_k_mask_dense

MASKING_MODES = ("off", "post_process", "joint")
PROJECTION_GROUPS = ("projection",)
PROJECTION_BIAS_GROUPS = ("projection_bias",)


class ConfigError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingTriple:
    query: tuple[int, ...]
    positive: tuple[int, ...]
    negatives: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "query", tuple(int(t) for t in self.query))
        object.__setattr__(self, "positive", tuple(int(t) for t in self.positive))
        object.__setattr__(self, "negatives", tuple(tuple(int(t) for t in n) for n in self.negatives))


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    Desk-scale defaults (batch 8, SGD lr 0.05, 5 epochs). ``FULL_SCALE``
    holds the settings for a DistilBERT-sized encoder.
    """

    batch_size: int = 8
    learning_rate: float = 0.05
    epochs: int = 5
    seed: int = 0
    freeze_projection: bool = False
    # None follows freeze_projection.
    freeze_projection_bias: bool | None = None
    masking: str = "off"
    schedule: DecaySchedule | None = None
    # None uses the document schedule for queries too.
    query_schedule: DecaySchedule | None = None
    lambda_kl: float = 0.0
    stop_gradient_unmasked: bool = False
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.masking not in MASKING_MODES:
            raise ConfigError(f"masking must be one of {MASKING_MODES}")
        if self.masking == "joint" and self.schedule is None:
            raise ConfigError("joint masking requires a schedule")
        if self.lambda_kl < 0:
            raise ConfigError("lambda_kl must be non-negative")
        if self.lambda_kl > 0 and self.masking != "joint":
            raise ConfigError("lambda_kl > 0 requires joint masking")
        if self.optimizer not in ("sgd", "adamw"):
            raise ConfigError("optimizer must be 'sgd' or 'adamw'")

    @property
    def frozen_groups(self) -> tuple[str, ...]:
        groups: tuple[str, ...] = ()
        if self.freeze_projection:
            groups += PROJECTION_GROUPS
        bias = self.freeze_projection if self.freeze_projection_bias is None else self.freeze_projection_bias
        if bias:
            groups += PROJECTION_BIAS_GROUPS
        return groups


FULL_SCALE = TrainConfig(batch_size=48, learning_rate=1e-5, epochs=20, optimizer="adamw", freeze_projection=True)


def ablation_configs(
    base: TrainConfig, k: int, steps_per_epoch: int, r_decay: float = 0.2, lambda_kl: float = 1.0
) -> dict[str, TrainConfig]:
    """Training configs for the masking/decay/KL ablation grid.

    "2" full fine-tuning, "a" frozen projection, "b" = "a" masked only at
    inference, "c"/"d" joint masking with constant/decaying k, "e"/"f" the
    same plus the KL term. Decay bottoms out at ``k``.
    """
    constant = DecaySchedule.constant(k)
    decay = DecaySchedule.exponential(r_decay, steps_per_epoch, k_min=k)
    common = replace(base, freeze_projection=True, freeze_projection_bias=None, lambda_kl=0.0)
    return {
        "2": replace(base, freeze_projection=False, masking="off", schedule=None, lambda_kl=0.0),
        "a": replace(common, masking="off", schedule=None),
        "b": replace(common, masking="post_process", schedule=constant),
        "c": replace(common, masking="joint", schedule=constant),
        "d": replace(common, masking="joint", schedule=decay),
        "e": replace(common, masking="joint", schedule=constant, lambda_kl=lambda_kl),
        "f": replace(common, masking="joint", schedule=decay, lambda_kl=lambda_kl),
    }


@dataclass
class EncodedBatch:
    """Dense pooled weights for one batch plus the candidate layout.

    Documents are stored positives first (one per query), then every
    explicit negative in batch order.
    """

    q_unmasked: np.ndarray  # (B, V)
    q_masked: np.ndarray
    d_unmasked: np.ndarray  # (M, V)
    d_masked: np.ndarray
    candidates: list[list[int]]  # per query, indices into the document arrays


def candidate_layout(num_negatives: Sequence[int]) -> list[list[int]]:
    B = len(num_negatives)
    layout = []
    offset = B
    for i, n in enumerate(num_negatives):
        own = list(range(offset, offset + n))
        offset += n
        layout.append([i, *own, *(j for j in range(B) if j != i)])
    return layout


def build_inbatch_rows(batch: EncodedBatch) -> list[tuple[SimilarityRow, SimilarityRow]]:
    rows = []
    for i, cands in enumerate(batch.candidates):
        masked = batch.d_masked[cands] @ batch.q_masked[i]
        unmasked = batch.d_unmasked[cands] @ batch.q_unmasked[i]
        rows.append((SimilarityRow.from_scores(masked), SimilarityRow.from_scores(unmasked)))
    return rows


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def update(self, params: EncoderParams, grads: dict[str, np.ndarray], frozen: Sequence[str]) -> None:
        if self.lr == 0:
            return
        for name, g in grads.items():
            if name not in frozen:
                getattr(params, name)[...] -= self.lr * g


class AdamW:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        self.lr, self.beta1, self.beta2, self.eps, self.weight_decay = lr, beta1, beta2, eps, weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def update(self, params: EncoderParams, grads: dict[str, np.ndarray], frozen: Sequence[str]) -> None:
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name in frozen:
                continue
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p = getattr(params, name)
            p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adamw":
        return AdamW(config.learning_rate)
    return SGD(config.learning_rate)


def step_ks(config: TrainConfig, step: int, vocab_size: int) -> tuple[int, int]:
    """(document k, query k) used at a training step; |V| when not jointly masking."""
    if config.masking != "joint":
        return vocab_size, vocab_size
    kd = scheduled_k(config.schedule, step, vocab_size)
    kq = kd if config.query_schedule is None else scheduled_k(config.query_schedule, step, vocab_size)
    return kd, kq


@dataclass
class StepRecord:
    step: int
    loss: LossBreakdown
    k_effective: int


def loss_and_grads(params: EncoderParams, batch: Sequence[TrainingTriple], config: TrainConfig, step: int):
    """Batch-mean loss and its gradient w.r.t. every parameter array."""
    if not batch:
        raise ConfigError("empty batch")
    V = params.vocab_size
    B = len(batch)
    seqs = [t.query for t in batch] + [t.positive for t in batch] + [n for t in batch for n in t.negatives]
    try:
        caches = [forward(params, s) for s in seqs]
    except InvalidTokenError as e:
        raise ConfigError(str(e)) from e
    W = np.stack([c.weights for c in caches])
    kd, kq = step_ks(config, step, V)
    joint = config.masking == "joint"
    if joint:
        mask = np.stack([top_k_mask_dense(w, kq if i < B else kd) for i, w in enumerate(W)])
        Wm = W * mask
    else:
        mask, Wm = None, W

    enc = EncodedBatch(W[:B], Wm[:B], W[B:], Wm[B:], candidate_layout([len(t.negatives) for t in batch]))
    rows = build_inbatch_rows(enc)

    dW = np.zeros_like(W)
    dWm = np.zeros_like(W)
    parts = []
    for i, ((m_row, u_row), cands) in enumerate(zip(rows, enc.candidates)):
        parts.append(combined_loss(m_row, u_row, config.lambda_kl))
        ga, gb = loss_gradients(m_row, u_row, config.lambda_kl, config.stop_gradient_unmasked)
        ga /= B
        gb /= B
        docs = [B + c for c in cands]
        dWm[i] += ga @ Wm[docs]
        np.add.at(dWm, docs, np.outer(ga, Wm[i]))
        dW[i] += gb @ W[docs]
        np.add.at(dW, docs, np.outer(gb, W[i]))

    loss = LossBreakdown.mean(parts)
    if not math.isfinite(loss.combined):
        raise TrainingDivergedError(f"non-finite loss at step {step}")
    dW += dWm * mask if joint else dWm

    grads = zero_grads(params)
    for cache, dw in zip(caches, dW):
        backward(params, cache, dw, grads)
    return loss, grads, kd


def train_step(
    params: EncoderParams,
    batch: Sequence[TrainingTriple],
    config: TrainConfig,
    step: int,
    optimizer=None,
) -> tuple[EncoderParams, LossBreakdown]:
    """One optimizer update; returns new params and the pre-update loss.

    Pass the same ``optimizer`` across steps to keep AdamW moments.
    """
    loss, grads, _ = loss_and_grads(params, batch, config, step)
    new = params.copy()
    (optimizer or make_optimizer(config)).update(new, grads, config.frozen_groups)
    return new, loss


@dataclass
class TrainResult:
    params: EncoderParams
    history: list[StepRecord] = field(default_factory=list)


def steps_per_epoch(dataset_size: int, batch_size: int) -> int:
    return max(1, math.ceil(dataset_size / batch_size))


def train(params: EncoderParams, dataset: Sequence[TrainingTriple], config: TrainConfig, log=None) -> TrainResult:
    if not dataset:
        raise ConfigError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config)
    current = params.copy()
    history: list[StepRecord] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            loss, grads, kd = loss_and_grads(current, batch, config, step)
            opt.update(current, grads, config.frozen_groups)
            history.append(StepRecord(step, loss, kd))
            if log is not None:
                log(epoch, history[-1])
            step += 1
    return TrainResult(current, history)


def read_triples(path: str | Path) -> list[TrainingTriple]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(TrainingTriple(obj["query"], obj["positive"], tuple(obj.get("negatives", ()))))
            except (ValueError, KeyError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: bad triple ({e})") from e
    return out


def write_triples(path: str | Path, triples: Sequence[TrainingTriple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triples:
            obj = {"query": list(t.query), "positive": list(t.positive), "negatives": [list(n) for n in t.negatives]}
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")


def write_history(path: str | Path, history: Sequence[StepRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "rank_loss", "kl_loss", "combined", "k_effective"])
        for r in history:
            w.writerow([r.step, repr(r.loss.rank_loss), repr(r.loss.kl_loss), repr(r.loss.combined), r.k_effective])
