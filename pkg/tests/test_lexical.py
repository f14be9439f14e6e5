import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import sparse_vectors
from splademask.lexical import (
    QuantizedVector,
    SparseVector,
    Vocabulary,
    densify,
    inner_product,
    nnz,
    quantize,
    read_vectors,
    round_half_away,
    sparsify,
    write_vectors,
)


def sv(*pairs):
    return SparseVector.from_pairs(pairs)


def dense_dot(a, b, size=200):
    return float(np.dot(densify(a, size), densify(b, size)))


class TestInnerProduct:
    def test_single_shared_term(self):
        assert inner_product(sv((1, 2.0), (5, 3.0)), sv((5, 4.0))) == 12.0

    def test_disjoint(self):
        assert inner_product(sv((1, 2.0)), sv((2, 7.0))) == 0.0

    def test_hand_sum(self):
        assert inner_product(sv((0, 1.5), (3, 2.0), (9, 0.5)), sv((0, 2.0), (9, 4.0))) == 5.0

    @given(sparse_vectors(), sparse_vectors())
    def test_symmetric_and_matches_dense(self, a, b):
        assert inner_product(a, b) == inner_product(b, a)
        assert inner_product(a, b) == pytest.approx(dense_dot(a, b), rel=1e-12, abs=1e-12)

    @given(sparse_vectors(), sparse_vectors(), st.floats(0.1, 10.0))
    def test_scaling(self, a, b, c):
        scaled = SparseVector(a.ids, a.weights * c)
        assert inner_product(scaled, b) == pytest.approx(c * inner_product(a, b), rel=1e-9, abs=1e-12)

    @given(sparse_vectors())
    def test_self_product(self, v):
        ip = inner_product(v, v)
        assert ip >= 0
        assert (ip == 0) == (nnz(v) == 0)


class TestQuantize:
    def test_forced_by_rule(self):
        assert quantize(sv((3, 1.234)), 100) == QuantizedVector([3], [123])

    def test_drops_zero(self):
        assert quantize(sv((3, 0.004)), 100) == QuantizedVector()

    def test_halves_round_away_from_zero(self):
        assert quantize(sv((1, 0.005), (2, 2.675)), 100).items() == [(1, 1), (2, 268)]

    @pytest.mark.parametrize("x, expected", [(0.125, 13), (1.5, 150), (0.994999, 99), (0.995, 100), (3.0, 300)])
    def test_round_half_away(self, x, expected):
        assert round_half_away(x, 100) == expected

    @given(sparse_vectors(max_weight=50.0), st.sampled_from([1, 10, 100, 1000]))
    def test_bound_and_nnz(self, v, scale):
        q = quantize(v, scale)
        assert nnz(q) <= nnz(v)
        w = v.to_dict()
        for t, imp in q.items():
            assert imp >= 1
            assert abs(imp / scale - w[t]) <= 0.5 / scale + 1e-12

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            quantize(sv((1, 1.0)), 0)


class TestDenseRoundTrip:
    def test_empty(self):
        assert densify(SparseVector(), 4).tolist() == [0, 0, 0, 0]

    def test_single(self):
        assert densify(sv((1, 2.0)), 3).tolist() == [0, 2.0, 0]

    @given(sparse_vectors())
    def test_identity_laws(self, v):
        assert sparsify(densify(v, 200)) == v
        d = densify(v, 200)
        assert np.array_equal(densify(sparsify(d), 200), d)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            densify(sv((5, 1.0)), 3)

    def test_negative_dense(self):
        with pytest.raises(ValueError):
            sparsify(np.array([0.0, -1.0]))


class TestSparseVector:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SparseVector([3, 1], [1.0, 1.0])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            SparseVector([1], [0.0])
        with pytest.raises(ValueError):
            SparseVector([1], [float("nan")])

    def test_read_only(self):
        v = sv((1, 1.0))
        with pytest.raises(ValueError):
            v.weights[0] = 2.0

    def test_nnz(self):
        assert nnz(SparseVector()) == 0
        assert nnz(sv((1, 0.1), (7, 0.2))) == 2


def test_vocabulary():
    assert Vocabulary.synthetic(30).size == 30
    with pytest.raises(ValueError):
        Vocabulary(("a", "a"))


@given(st.lists(sparse_vectors(max_nnz=8), max_size=5))
def test_jsonl_round_trip(tmp_path_factory, vecs):
    path = tmp_path_factory.mktemp("v") / "v.jsonl"
    items = [(f"d{i}", v) for i, v in enumerate(vecs)]
    write_vectors(path, items)
    assert read_vectors(path) == items


def test_jsonl_error_has_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id":"a","vector":{}}\nnot json\n')
    with pytest.raises(ValueError, match=":2:"):
        read_vectors(p)
