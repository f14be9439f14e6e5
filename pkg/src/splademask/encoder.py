"""Toy MLM-head encoder producing vocabulary-sized term weights.

Pipeline per token sequence of length N:

    E  = embedding_table[tokens]                      (N, h)
    C  = (E + mean(E)) / 2                            contextualize
    P  = LayerNorm(GeLU(C @ W.T + b))                 psi
    S  = P @ projection.T + projection_bias           (N, |V|)
    w  = max_i log1p(relu(S[i]))                      pooled weights

The contextualizer is a stand-in for a transformer: one mean-mixing step so
each position sees the whole sequence. Defaults are desk scale (h=32);
a DistilBERT-sized model would use h=768 and |V|=30522.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erf

from .lexical import SparseVector, sparsify

LN_EPS = 1e-12
INIT_STD = 0.02
DEFAULT_HIDDEN = 32
DEFAULT_MAX_LEN = 64

PARAM_MAGIC = b"SPLXENC\x00"
PARAM_VERSION = 1


class InvalidTokenError(ValueError):
    pass


@dataclass
class EncoderParams:
    embedding_table: np.ndarray  # (V, h)
    psi_linear: np.ndarray  # (h, h)
    psi_bias: np.ndarray  # (h,)
    psi_norm_gain: np.ndarray  # (h,)
    psi_norm_bias: np.ndarray  # (h,)
    projection: np.ndarray  # (V, h), rows are e_j
    projection_bias: np.ndarray  # (V,)
    seed: int = 0

    def __post_init__(self):
        V, h = self.embedding_table.shape
        expected = {
            "psi_linear": (h, h),
            "psi_bias": (h,),
            "psi_norm_gain": (h,),
            "psi_norm_bias": (h,),
            "projection": (V, h),
            "projection_bias": (V,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        for name in self.array_names():
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite values")

    @staticmethod
    def array_names() -> tuple[str, ...]:
        return tuple(f.name for f in fields(EncoderParams) if f.name != "seed")

    @property
    def vocab_size(self) -> int:
        return self.embedding_table.shape[0]

    @property
    def hidden(self) -> int:
        return self.embedding_table.shape[1]

    @classmethod
    def init(
        cls, vocab_size: int, hidden: int = DEFAULT_HIDDEN, seed: int = 0, projection_bias: float = 0.0
    ) -> "EncoderParams":
        """Gaussian(0, 0.02) weights; a negative ``projection_bias`` starts the vectors sparser."""
        rng = np.random.default_rng(seed)
        return cls(
            embedding_table=rng.normal(0.0, INIT_STD, (vocab_size, hidden)),
            psi_linear=rng.normal(0.0, INIT_STD, (hidden, hidden)),
            psi_bias=np.zeros(hidden),
            psi_norm_gain=np.ones(hidden),
            psi_norm_bias=np.zeros(hidden),
            projection=rng.normal(0.0, INIT_STD, (vocab_size, hidden)),
            projection_bias=np.full(vocab_size, float(projection_bias)),
            seed=seed,
        )

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{n: getattr(self, n).copy() for n in self.array_names()}, seed=self.seed)

    def checksum(self, names: Sequence[str] | None = None) -> str:
        h = hashlib.sha256()
        for n in names or self.array_names():
            h.update(np.ascontiguousarray(getattr(self, n), dtype="<f8").tobytes())
        return h.hexdigest()

    def equals(self, other: "EncoderParams") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self.array_names())


def check_sequence(params: EncoderParams, token_ids, max_len: int = DEFAULT_MAX_LEN) -> np.ndarray:
    seq = np.asarray(token_ids, dtype=np.int64).reshape(-1)
    if seq.size == 0:
        raise ValueError("token sequence is empty")
    if seq.size > max_len:
        raise ValueError(f"token sequence length {seq.size} exceeds max length {max_len}")
    bad = (seq < 0) | (seq >= params.vocab_size)
    if bad.any():
        raise InvalidTokenError(f"token id {int(seq[bad][0])} outside vocabulary of size {params.vocab_size}")
    return seq


def contextualize(params: EncoderParams, token_ids) -> np.ndarray:
    seq = check_sequence(params, token_ids)
    emb = params.embedding_table[seq]
    return 0.5 * (emb + emb.mean(axis=0))


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def _layer_norm(g, gain, bias):
    mu = g.mean(axis=-1, keepdims=True)
    centered = g - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = centered * inv_std
    return xhat * gain + bias, xhat, inv_std


def psi(params: EncoderParams, c: np.ndarray) -> np.ndarray:
    """Linear -> GeLU -> LayerNorm. Works on a single vector or a stack of them."""
    z = c @ params.psi_linear.T + params.psi_bias
    out, _, _ = _layer_norm(gelu(z), params.psi_norm_gain, params.psi_norm_bias)
    return out


def project_vocab(params: EncoderParams, p: np.ndarray) -> np.ndarray:
    return p @ params.projection.T + params.projection_bias


def pool_max_saturate_dense(scores: np.ndarray) -> np.ndarray:
    scores = np.atleast_2d(scores)
    return np.log1p(np.maximum(scores, 0.0)).max(axis=0)


def pool_max_saturate(scores: np.ndarray) -> SparseVector:
    return sparsify(pool_max_saturate_dense(scores))


@dataclass
class ForwardCache:
    """Intermediates kept from one forward pass for the backward pass."""

    seq: np.ndarray
    c: np.ndarray
    z: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    p: np.ndarray
    scores: np.ndarray
    argmax: np.ndarray
    weights: np.ndarray  # dense pooled weights, (V,)


def forward(params: EncoderParams, token_ids) -> ForwardCache:
    seq = check_sequence(params, token_ids)
    emb = params.embedding_table[seq]
    c = 0.5 * (emb + emb.mean(axis=0))
    z = c @ params.psi_linear.T + params.psi_bias
    p, xhat, inv_std = _layer_norm(gelu(z), params.psi_norm_gain, params.psi_norm_bias)
    scores = p @ params.projection.T + params.projection_bias
    argmax = scores.argmax(axis=0)
    top = scores[argmax, np.arange(scores.shape[1])]
    weights = np.log1p(np.maximum(top, 0.0))
    return ForwardCache(seq, c, z, xhat, inv_std, p, scores, argmax, weights)


def encode_dense(params: EncoderParams, token_ids) -> np.ndarray:
    return forward(params, token_ids).weights


def encode(params: EncoderParams, token_ids) -> SparseVector:
    return sparsify(encode_dense(params, token_ids))


def encode_many(params: EncoderParams, sequences: Sequence, threads: int = 1) -> list[SparseVector]:
    """Encode many sequences over shared read-only params; output order matches input."""
    if threads <= 1 or len(sequences) < 2:
        return [encode(params, s) for s in sequences]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: encode(params, s), sequences))


def zero_grads(params: EncoderParams) -> dict[str, np.ndarray]:
    return {n: np.zeros_like(getattr(params, n)) for n in params.array_names()}


def backward(params: EncoderParams, cache: ForwardCache, dweights: np.ndarray, grads: dict[str, np.ndarray]) -> None:
    """Accumulate d(loss)/d(params) into ``grads`` given d(loss)/d(pooled weights).

    Max pooling routes each column's gradient to its argmax position; ReLU
    zeroes columns whose max score is not positive.
    """
    V = params.vocab_size
    cols = np.arange(V)
    top = cache.scores[cache.argmax, cols]
    live = top > 0.0
    dscores = np.zeros_like(cache.scores)
    dscores[cache.argmax[live], cols[live]] = dweights[live] / (1.0 + top[live])

    grads["projection"] += dscores.T @ cache.p
    grads["projection_bias"] += dscores.sum(axis=0)
    dp = dscores @ params.projection

    grads["psi_norm_gain"] += (dp * cache.xhat).sum(axis=0)
    grads["psi_norm_bias"] += dp.sum(axis=0)
    dxhat = dp * params.psi_norm_gain
    dg = cache.inv_std * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - cache.xhat * (dxhat * cache.xhat).mean(axis=-1, keepdims=True)
    )
    dz = dg * gelu_grad(cache.z)
    grads["psi_linear"] += dz.T @ cache.c
    grads["psi_bias"] += dz.sum(axis=0)
    dc = dz @ params.psi_linear

    demb = 0.5 * dc + 0.5 * dc.mean(axis=0)
    np.add.at(grads["embedding_table"], cache.seq, demb)


# Parameter file: magic, version, |V|, h, seed, then arrays in field order
# as little-endian float64, row-major.
_HEADER = struct.Struct("<8sIIIq")


def save_params(params: EncoderParams, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(PARAM_MAGIC, PARAM_VERSION, params.vocab_size, params.hidden, params.seed))
        for name in params.array_names():
            f.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_params(path: str | Path) -> EncoderParams:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated parameter file")
    magic, version, V, h, seed = _HEADER.unpack_from(data)
    if magic != PARAM_MAGIC:
        raise ValueError(f"{path}: not an encoder parameter file")
    if version != PARAM_VERSION:
        raise ValueError(f"{path}: unsupported parameter file version {version}")
    shapes = [(V, h), (h, h), (h,), (h,), (h,), (V, h), (V,)]
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    arrays = {}
    offset = _HEADER.size
    for name, shape in zip(EncoderParams.array_names(), shapes):
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    return EncoderParams(**arrays, seed=seed)


def hash_tokenize(text: str, vocab_size: int, max_len: int = DEFAULT_MAX_LEN) -> list[int]:
    """Whitespace split + stable hash into [0, vocab_size). Demo use only."""
    ids = []
    for word in text.lower().split()[:max_len]:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        ids.append(int.from_bytes(digest, "little") % vocab_size)
    return ids
