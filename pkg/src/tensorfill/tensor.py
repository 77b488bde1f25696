"""Dense and sparse (COO) tensors, sampling, splitting and error metrics.

Dense tensors are stored as row-major numpy arrays (last mode fastest).
Sparse tensors keep their observed entries in canonical lexicographic
order; the observation mask is implicit (an index is observed iff it
appears in the entry list).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "TensorError",
    "ShapeError",
    "IndexOutOfBoundsError",
    "DuplicateIndexError",
    "NonFiniteValueError",
    "DenseTensor",
    "SparseTensor",
    "SplitSpec",
    "check_shape",
    "sample_observed",
    "split_entries",
    "all_indices",
    "unobserved_indices",
    "mae",
    "rmse",
    "normalized_error",
]

# flat indices are int64; keep one bit of headroom
_MAX_ELEMENTS = 2**62
_FISHER_YATES_LIMIT = 10**7


class TensorError(ValueError):
    """Base class for invalid tensor data."""


class ShapeError(TensorError):
    pass


class IndexOutOfBoundsError(TensorError):
    pass


class DuplicateIndexError(TensorError):
    pass


class NonFiniteValueError(TensorError):
    pass


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    """Validate a shape and return it as a tuple of Python ints."""
    try:
        dims = tuple(int(d) for d in shape)
    except (TypeError, ValueError) as exc:
        raise ShapeError(f"shape must be a sequence of integers, got {shape!r}") from exc
    if any(d != s for d, s in zip(dims, shape)):
        raise ShapeError(f"shape must be a sequence of integers, got {shape!r}")
    if len(dims) < 1:
        raise ShapeError("tensor order must be at least 1")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all mode sizes must be >= 1, got {dims}")
    total = 1
    for d in dims:
        total *= d
        if total > _MAX_ELEMENTS:
            raise ShapeError(f"shape {dims} overflows 64-bit index arithmetic")
    return dims


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """A fully materialized tensor.

    Parameters
    ----------
    values : array_like
        N-d array of finite reals. Copied and made read-only.
    name : str
        Free-form label, carried through file I/O.
    meta : dict
        Sidecar metadata (axis labels, scaling constants, flags). Not
        part of equality or serialization of the values.
    """

    values: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 0:
            raise ShapeError("a dense tensor needs at least one mode")
        check_shape(arr.shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValueError("dense tensor contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def to_sparse(self) -> SparseTensor:
        """Every entry as an observed COO entry."""
        return SparseTensor(self.shape, all_indices(self.shape), self.flat(), name=self.name)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"DenseTensor(shape={self.shape}, name={self.name!r})"


class SparseTensor:
    """Observed entries of a tensor in coordinate (COO) format.

    Entries are sorted lexicographically by index at construction, which
    gives a canonical form for serialization and ``O(log M)`` membership
    tests. Duplicate or out-of-range indices are rejected.
    """

    __slots__ = ("shape", "indices", "values", "name", "_flat")

    def __init__(self, shape, indices, values, name: str = ""):
        shape = check_shape(shape)
        idx = np.asarray(indices, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        if idx.size == 0:
            idx = idx.reshape(0, len(shape))
        if idx.ndim != 2 or idx.shape[1] != len(shape):
            raise ShapeError(
                f"indices must have shape (M, {len(shape)}), got {idx.shape}"
            )
        if idx.shape[0] != vals.shape[0]:
            raise ShapeError(
                f"{idx.shape[0]} index tuples but {vals.shape[0]} values"
            )
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.asarray(shape))):
            bad = np.argwhere((idx < 0) | (idx >= np.asarray(shape)))[0]
            raise IndexOutOfBoundsError(
                f"index {tuple(idx[bad[0]])} out of bounds for shape {shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValueError("sparse tensor contains NaN or Inf")

        flat = np.ravel_multi_index(idx.T, shape) if idx.size else np.zeros(0, np.int64)
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        if flat.size > 1 and np.any(flat[1:] == flat[:-1]):
            dup = flat[1:][flat[1:] == flat[:-1]][0]
            raise DuplicateIndexError(
                f"duplicate index {np.unravel_index(dup, shape)}"
            )
        idx = np.ascontiguousarray(idx[order])
        vals = np.ascontiguousarray(vals[order])
        for a in (idx, vals, flat):
            a.setflags(write=False)
        self.shape = shape
        self.indices = idx
        self.values = vals
        self.name = name
        self._flat = flat

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.nnz

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def observed_fraction(self) -> float:
        return self.nnz / self.size

    @property
    def flat_indices(self) -> np.ndarray:
        return self._flat

    def contains(self, index) -> bool:
        flat = np.ravel_multi_index(tuple(int(i) for i in index), self.shape)
        pos = np.searchsorted(self._flat, flat)
        return bool(pos < self._flat.size and self._flat[pos] == flat)

    def mask(self) -> np.ndarray:
        """Boolean dense mask, ``True`` at observed positions."""
        m = np.zeros(self.size, dtype=bool)
        m[self._flat] = True
        return m.reshape(self.shape)

    def subset(self, rows) -> SparseTensor:
        rows = np.asarray(rows)
        return SparseTensor(self.shape, self.indices[rows], self.values[rows], name=self.name)

    def entries(self):
        """Iterate ``(index_tuple, value)`` pairs in canonical order."""
        for idx, v in zip(self.indices, self.values):
            yield tuple(int(i) for i in idx), float(v)

    def to_dense(self, fill: float = 0.0) -> DenseTensor:
        out = np.full(self.size, fill, dtype=np.float64)
        out[self._flat] = self.values
        return DenseTensor(out.reshape(self.shape), name=self.name)

    def __eq__(self, other):
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseTensor(shape={self.shape}, nnz={self.nnz}, name={self.name!r})"


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/holdout split of observed entries.

    ``role`` is informational: ``"validation"`` for early-stopping
    holdouts, ``"base-model-exclusion"`` for ensemble base splits.
    """

    seed: int
    train_fraction: float = 0.9
    role: str = "validation"

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if self.role not in ("validation", "base-model-exclusion"):
            raise ValueError(f"unknown split role {self.role!r}")


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _sample_without_replacement(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if n < _FISHER_YATES_LIMIT:
        # Generator.permutation is a seeded Fisher-Yates shuffle
        return rng.permutation(n)[:m]
    chosen: dict[int, None] = {}
    while len(chosen) < m:
        for v in rng.integers(0, n, size=2 * (m - len(chosen))):
            chosen.setdefault(int(v))
            if len(chosen) == m:
                break
    return np.fromiter(chosen, dtype=np.int64, count=m)


def sample_observed(dense: DenseTensor, fraction: float, seed: int) -> SparseTensor:
    """Uniformly sample ``round(fraction * size)`` distinct entries.

    At least one entry is always kept. Deterministic for a fixed seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n = dense.size
    m = min(n, max(1, _round_half_up(fraction * n)))
    rng = np.random.default_rng(seed)
    flat = _sample_without_replacement(n, m, rng)
    idx = np.stack(np.unravel_index(flat, dense.shape), axis=1)
    return SparseTensor(dense.shape, idx, dense.flat()[flat], name=dense.name)


def split_entries(sparse: SparseTensor, spec: SplitSpec) -> tuple[SparseTensor, SparseTensor]:
    """Partition observed entries into ``(train, holdout)``."""
    if sparse.nnz == 0:
        raise ValueError("cannot split an empty sparse tensor")
    m = sparse.nnz
    n_train = min(m, max(1, _round_half_up(spec.train_fraction * m)))
    perm = np.random.default_rng(spec.seed).permutation(m)
    train = np.sort(perm[:n_train])
    hold = np.sort(perm[n_train:])
    return sparse.subset(train), sparse.subset(hold)


def all_indices(shape) -> np.ndarray:
    """Every index tuple of ``shape`` in row-major order, shape ``(size, N)``."""
    shape = check_shape(shape)
    grids = np.indices(shape).reshape(len(shape), -1)
    return np.ascontiguousarray(grids.T, dtype=np.int64)


def unobserved_indices(sparse: SparseTensor) -> np.ndarray:
    """Index tuples not present in ``sparse``, row-major order."""
    missing = np.flatnonzero(~sparse.mask().reshape(-1))
    return np.stack(np.unravel_index(missing, sparse.shape), axis=1).astype(np.int64)


def _residuals(predicted, truth, over):
    p = predicted.values if isinstance(predicted, DenseTensor) else np.asarray(predicted, float)
    t = truth.values if isinstance(truth, DenseTensor) else np.asarray(truth, float)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    if over is None:
        pv, tv = p.reshape(-1), t.reshape(-1)
    else:
        over = over.indices if isinstance(over, SparseTensor) else np.asarray(over)
        if over.dtype == bool:
            if over.shape != p.shape:
                raise ShapeError("boolean index set must match tensor shape")
            pv, tv = p[over], t[over]
        else:
            over = over.reshape(-1, p.ndim)
            pv, tv = p[tuple(over.T)], t[tuple(over.T)]
    if pv.size == 0:
        raise ValueError("error metric over an empty index set")
    return pv, tv


def mae(predicted, truth, over=None) -> float:
    """Mean absolute error over ``over`` (all entries if ``None``).

    ``over`` may be an ``(K, N)`` integer index array, a boolean mask of
    the tensor's shape, or a :class:`SparseTensor` whose indices are used.
    """
    pv, tv = _residuals(predicted, truth, over)
    return float(np.mean(np.abs(pv - tv)))


def rmse(predicted, truth, over=None) -> float:
    pv, tv = _residuals(predicted, truth, over)
    return float(np.sqrt(np.mean((pv - tv) ** 2)))


def normalized_error(predicted, truth, over=None) -> float:
    """``||pred - truth|| / ||truth||`` restricted to ``over``."""
    pv, tv = _residuals(predicted, truth, over)
    denom = np.linalg.norm(tv)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(pv) == 0.0 else float("inf")
    return float(np.linalg.norm(pv - tv) / denom)
