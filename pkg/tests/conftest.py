import numpy as np
from hypothesis import strategies as st

from splademask.encoder import EncoderParams
from splademask.lexical import SparseVector


@st.composite
def sparse_vectors(draw, vocab_size=200, max_nnz=40, min_weight=1e-3, max_weight=5.0):
    ids = draw(st.lists(st.integers(0, vocab_size - 1), unique=True, max_size=max_nnz))
    weights = draw(
        st.lists(
            st.floats(min_weight, max_weight, allow_nan=False, allow_infinity=False),
            min_size=len(ids),
            max_size=len(ids),
        )
    )
    return SparseVector.from_pairs(zip(ids, weights))


def random_sparse(rng: np.random.Generator, vocab_size: int, nnz: int, low=0.0, high=3.0) -> SparseVector:
    ids = np.sort(rng.choice(vocab_size, size=nnz, replace=False))
    return SparseVector(ids, rng.uniform(low, high, size=nnz) + 1e-6)


def wide_params(vocab=30, hidden=6, seed=0):
    """Larger-scale weights so every stage is well away from LayerNorm's flat region."""
    rng = np.random.default_rng(seed)
    return EncoderParams(
        embedding_table=rng.normal(0, 0.5, (vocab, hidden)),
        psi_linear=rng.normal(0, 0.5, (hidden, hidden)),
        psi_bias=rng.normal(0, 0.1, hidden),
        psi_norm_gain=rng.uniform(0.5, 1.5, hidden),
        psi_norm_bias=rng.normal(0, 0.1, hidden),
        projection=rng.normal(0, 0.5, (vocab, hidden)),
        projection_bias=rng.normal(0.3, 0.2, vocab),
        seed=seed,
    )
