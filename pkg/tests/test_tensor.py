import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensorfill.tensor import (
    DenseTensor,
    DuplicateIndexError,
    IndexOutOfBoundsError,
    NonFiniteValueError,
    ShapeError,
    SparseTensor,
    SplitSpec,
    all_indices,
    check_shape,
    mae,
    normalized_error,
    rmse,
    sample_observed,
    split_entries,
    unobserved_indices,
)

shapes = st.lists(st.integers(1, 5), min_size=1, max_size=4).map(tuple)


def dense(shape, seed=0):
    return DenseTensor(np.random.default_rng(seed).normal(size=shape))


class TestShapes:
    @pytest.mark.parametrize("bad", [(), (0, 3), (2, -1), (2.5,)])
    def test_rejects_bad_shapes(self, bad):
        with pytest.raises(ShapeError):
            check_shape(bad)

    def test_dense_is_read_only(self):
        t = dense((2, 3))
        with pytest.raises(ValueError):
            t.values[0, 0] = 1.0

    def test_dense_rejects_nan(self):
        with pytest.raises(NonFiniteValueError):
            DenseTensor(np.array([1.0, np.nan]))


class TestSparseTensor:
    def test_canonical_order(self):
        s = SparseTensor((3, 3), [[2, 0], [0, 1], [1, 2]], [3.0, 1.0, 2.0])
        assert s.indices.tolist() == [[0, 1], [1, 2], [2, 0]]
        assert s.values.tolist() == [1.0, 2.0, 3.0]

    def test_duplicate_rejected(self):
        with pytest.raises(DuplicateIndexError):
            SparseTensor((2, 2), [[0, 1], [0, 1]], [1.0, 2.0])

    @pytest.mark.parametrize("idx", [[[5, 0]], [[0, -1]]])
    def test_out_of_bounds(self, idx):
        with pytest.raises(IndexOutOfBoundsError):
            SparseTensor((3, 3), idx, [1.0])

    def test_non_finite(self):
        with pytest.raises(NonFiniteValueError):
            SparseTensor((2,), [[0]], [np.inf])

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            SparseTensor((2, 2), [[0, 0]], [1.0, 2.0])

    def test_membership_and_mask(self):
        s = SparseTensor((2, 3), [[1, 2], [0, 0]], [5.0, 6.0])
        assert s.contains((1, 2)) and not s.contains((1, 1))
        assert s.mask().sum() == 2 and s.mask()[1, 2]

    def test_to_dense_fill(self):
        s = SparseTensor((2, 2), [[0, 1]], [7.0])
        assert s.to_dense(fill=-1).values.tolist() == [[-1, 7], [-1, -1]]

    def test_empty(self):
        s = SparseTensor((2, 2), np.zeros((0, 2)), [])
        assert s.nnz == 0 and s.observed_fraction == 0.0


class TestSampling:
    def test_full_observation(self):
        t = dense((3, 4, 2))
        s = sample_observed(t, 1.0, seed=0)
        assert s.nnz == t.size
        assert np.array_equal(s.to_dense().values, t.values)

    def test_five_percent_count(self):
        s = sample_observed(dense((10, 10, 10)), 0.05, seed=3)
        assert s.nnz == 50
        assert len(set(map(tuple, s.indices.tolist()))) == 50

    def test_deterministic(self):
        t = dense((6, 6))
        assert sample_observed(t, 0.3, 9) == sample_observed(t, 0.3, 9)

    def test_at_least_one(self):
        assert sample_observed(dense((2, 2)), 0.01, 0).nnz == 1

    @pytest.mark.parametrize("fraction", [0.0, -0.1, 1.5])
    def test_rejects_fraction(self, fraction):
        with pytest.raises(ValueError):
            sample_observed(dense((2, 2)), fraction, 0)

    def test_values_come_from_tensor(self):
        t = dense((5, 5))
        s = sample_observed(t, 0.4, 1)
        assert np.array_equal(s.values, t.values[tuple(s.indices.T)])

    @settings(max_examples=40, deadline=None)
    @given(shape=shapes, fraction=st.floats(0.01, 1.0), seed=st.integers(0, 2**31))
    def test_count_property(self, shape, fraction, seed):
        t = DenseTensor(np.zeros(shape))
        s = sample_observed(t, fraction, seed)
        assert s.nnz == min(t.size, max(1, int(np.floor(fraction * t.size + 0.5))))


class TestSplit:
    def make(self, n=100):
        return sample_observed(dense((10, 10)), n / 100, 0)

    def test_full_fraction(self):
        s = self.make()
        train, hold = split_entries(s, SplitSpec(1, 1.0))
        assert train == s and hold.nnz == 0

    def test_ninety_ten(self):
        s = self.make()
        train, hold = split_entries(s, SplitSpec(1, 0.9))
        assert (train.nnz, hold.nnz) == (90, 10)
        ft, fh = set(train.flat_indices.tolist()), set(hold.flat_indices.tolist())
        assert not ft & fh and ft | fh == set(s.flat_indices.tolist())

    def test_seeds_differ(self):
        s = self.make()
        holds = {tuple(split_entries(s, SplitSpec(seed, 0.9))[1].flat_indices.tolist()) for seed in range(20)}
        assert len(holds) >= 19

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            SplitSpec(0, 0.0)
        with pytest.raises(ValueError):
            SplitSpec(0, 0.5, role="other")


class TestIndices:
    def test_all_indices_row_major(self):
        assert all_indices((2, 2)).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_unobserved_complement(self):
        s = SparseTensor((2, 2), [[0, 1], [1, 0]], [1.0, 1.0])
        assert unobserved_indices(s).tolist() == [[0, 0], [1, 1]]


class TestMetrics:
    def test_identical(self):
        t = dense((3, 3))
        assert mae(t, t) == 0.0 and rmse(t, t) == 0.0

    def test_hand_values(self):
        pred, truth = np.array([1.0, 3.0]), np.array([0.0, 0.0])
        assert mae(pred, truth) == 2.0
        assert rmse(pred, truth) == pytest.approx(np.sqrt(5.0))

    def test_normalized_error_of_zero_prediction(self):
        assert normalized_error(np.zeros(4), np.arange(1.0, 5.0)) == 1.0

    def test_over_forms_agree(self):
        a, b = dense((3, 4), 1), dense((3, 4), 2)
        s = sample_observed(a, 0.5, 0)
        by_idx = mae(a, b, over=s.indices)
        assert by_idx == mae(a, b, over=s) == mae(a, b, over=s.mask())

    def test_empty_set_raises(self):
        with pytest.raises(ValueError):
            mae(np.zeros(2), np.zeros(2), over=np.zeros((0, 1), dtype=int))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mae(np.zeros(2), np.zeros(3))
