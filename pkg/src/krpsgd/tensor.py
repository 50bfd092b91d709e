"""Dense tensors, Kruskal models and mode-n index arithmetic.

Storage is first-index-fastest (Fortran order), so the column order of the
mode-n unfolding is exactly the order produced by :func:`linear_index`.
All public indices (modes and tuple entries) are 1-based; conversion to
0-based offsets happens inside this module only.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np

from krpsgd.errors import IndexRangeError, ShapeError, UndefinedMeasureError


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """N-way dense tensor stored as a flat first-index-fastest vector."""

    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ShapeError(f"dimensions must be positive, got {dims}")
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size != prod(dims):
            raise ShapeError(
                f"{values.size} values do not fill a tensor of dims {dims}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array) -> DenseTensor:
        array = np.asarray(array, dtype=np.float64)
        return cls(array.shape, array.ravel(order="F"))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> DenseTensor:
        return cls(tuple(dims), np.zeros(prod(dims)))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def to_array(self) -> np.ndarray:
        """Return an N-d view indexed ``[i_1 - 1, ..., i_N - 1]``."""
        return self.values.reshape(self.dims, order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True, eq=False)
class KruskalModel:
    """CP model: ``N`` factor matrices, factor ``n`` of shape ``(I_n, R)``."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = []
        for A in self.factors:
            A = np.array(A, dtype=np.float64)
            if A.ndim != 2:
                raise ShapeError("factor matrices must be 2-d")
            A.flags.writeable = False
            factors.append(A)
        if not factors:
            raise ShapeError("a model needs at least one factor")
        ranks = {A.shape[1] for A in factors}
        if len(ranks) != 1:
            raise ShapeError(f"factor column counts differ: {sorted(ranks)}")
        object.__setattr__(self, "factors", tuple(factors))

    @classmethod
    def random_uniform(cls, dims: Sequence[int], rank: int, rng) -> KruskalModel:
        """Factors with i.i.d. uniform [0, 1) entries, drawn mode by mode."""
        return cls(tuple(rng.random((d, rank)) for d in dims))

    @classmethod
    def zeros(cls, dims: Sequence[int], rank: int) -> KruskalModel:
        return cls(tuple(np.zeros((d, rank)) for d in dims))

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(A.shape[0] for A in self.factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)

    def factor(self, mode: int) -> np.ndarray:
        return self.factors[mode - 1]

    def other_factors(self, mode: int) -> list[np.ndarray]:
        """Factors of every mode except ``mode``, in increasing mode order."""
        return [A for k, A in enumerate(self.factors, start=1) if k != mode]

    def replace_factor(self, mode: int, A: np.ndarray) -> KruskalModel:
        if A.shape != self.factors[mode - 1].shape:
            raise ShapeError(
                f"replacement for mode {mode} has shape {A.shape}, "
                f"expected {self.factors[mode - 1].shape}"
            )
        factors = list(self.factors)
        factors[mode - 1] = A
        return KruskalModel(tuple(factors))


def check_mode(mode: int, ndim: int) -> None:
    if not 1 <= mode <= ndim:
        raise IndexRangeError(f"mode {mode} outside [1, {ndim}]")


def fiber_count(dims: Sequence[int], mode: int) -> int:
    """``J_n``: the number of mode-n fibers."""
    check_mode(mode, len(dims))
    return prod(d for k, d in enumerate(dims, start=1) if k != mode)


def mode_strides(dims: Sequence[int], mode: int) -> np.ndarray:
    """Weights ``J'_k = prod_{m<k, m!=n} I_m`` for each mode ``k != n``."""
    check_mode(mode, len(dims))
    other = [d for k, d in enumerate(dims, start=1) if k != mode]
    return np.concatenate(([1], np.cumprod(other[:-1], dtype=np.int64))).astype(
        np.int64
    )[: len(other)]


def _as_index_matrix(idx, dims: Sequence[int], mode: int) -> np.ndarray:
    """Validate a ``B x (N-1)`` matrix of 1-based tuple entries."""
    other = np.array([d for k, d in enumerate(dims, start=1) if k != mode])
    idx = np.asarray(idx)
    if idx.ndim == 1:
        idx = idx.reshape(1, -1) if idx.size == other.size else idx.reshape(-1, 1)
    if idx.ndim != 2 or idx.shape[1] != other.size:
        raise IndexRangeError(
            f"expected tuples of length {other.size} for mode {mode}, "
            f"got array of shape {idx.shape}"
        )
    if not np.issubdtype(idx.dtype, np.integer):
        if not np.all(np.mod(idx, 1) == 0):
            raise IndexRangeError("tuple entries must be integers")
        idx = idx.astype(np.int64)
    if idx.size and (idx.min() >= 1) and (idx <= other).all():
        return idx.astype(np.int64, copy=False)
    bad = (idx < 1) | (idx > other)
    if bad.any():
        b, k = np.argwhere(bad)[0]
        raise IndexRangeError(
            f"tuple {b} entry {k} = {idx[b, k]} outside [1, {other[k]}]"
        )
    return idx.astype(np.int64, copy=False)


def linear_index(mode: int, entries: Sequence[int], dims: Sequence[int]) -> int:
    """Column of the mode-n unfolding holding the fiber at ``entries``.

    ``entries`` lists ``(i_1, ..., i_{n-1}, i_{n+1}, ..., i_N)``, 1-based.

    >>> linear_index(1, (3, 4), (2, 3, 4))
    12
    """
    return int(linear_indices(mode, [list(entries)], dims)[0])


def linear_indices(mode: int, idx, dims: Sequence[int]) -> np.ndarray:
    """Vectorised :func:`linear_index` over the rows of ``idx``."""
    idx = _as_index_matrix(idx, dims, mode)
    return 1 + (idx - 1) @ mode_strides(dims, mode)


def extract_fibers(X: DenseTensor, mode: int, idx) -> np.ndarray:
    """Gather the mode-n fibers named by ``idx`` into an ``I_n x B`` matrix.

    Column ``b`` equals column ``linear_index(idx[b])`` of the mode-n
    unfolding. Entries are read with strided gathers from ``X.values``;
    the unfolding itself is never formed.
    """
    check_mode(mode, X.ndim)
    idx = _as_index_matrix(idx, X.dims, mode)
    strides = np.concatenate(([1], np.cumprod(X.dims[:-1], dtype=np.int64)))
    other = [k for k in range(X.ndim) if k != mode - 1]
    base = (idx - 1) @ strides[other]
    along = strides[mode - 1] * np.arange(X.dims[mode - 1])
    return X.values[along[:, None] + base[None, :]]


def khatri_rao(factors: Sequence[np.ndarray], rank: int | None = None) -> np.ndarray:
    """Khatri-Rao product with the first factor's row index varying fastest.

    For ``factors = [A1, A2, ..., AK]`` this is ``AK (.) ... (.) A1``, the
    row order used by the mode-n unfolding.
    """
    if not factors:
        if rank is None:
            raise ShapeError("rank is required for an empty Khatri-Rao product")
        return np.ones((1, rank))
    R = factors[0].shape[1]
    Z = np.ones((1, R))
    for A in factors:
        Z = (Z[None, :, :] * A[:, None, :]).reshape(-1, R)
    return Z


def reconstruct(model: KruskalModel) -> DenseTensor:
    """Full tensor ``sum_r a^(1)_r o ... o a^(N)_r``."""
    first, rest = model.factors[0], list(model.factors[1:])
    unfolded = first @ khatri_rao(rest, model.rank).T
    return DenseTensor(model.dims, unfolded.ravel(order="F"))


def _check_shapes(X: DenseTensor, model: KruskalModel) -> None:
    if X.dims != model.dims:
        raise ShapeError(f"tensor dims {X.dims} != model dims {model.dims}")


def _residual(X: DenseTensor, model: KruskalModel) -> np.ndarray:
    _check_shapes(X, model)
    return X.values - reconstruct(model).values


def residual_norm(X: DenseTensor, model: KruskalModel) -> float:
    return float(np.linalg.norm(_residual(X, model)))


def objective(X: DenseTensor, model: KruskalModel) -> float:
    """``0.5 * ||X - [[A^(1), ..., A^(N)]]||_F^2``."""
    r = _residual(X, model)
    return 0.5 * float(r @ r)


def relative_error(X: DenseTensor, model: KruskalModel) -> float:
    """``||X - [[A^(1), ..., A^(N)]]||_F / ||X||_F``.

    Measured against ``X`` as given (noisy data included).
    """
    _check_shapes(X, model)
    ref = X.norm()
    if ref == 0.0:
        raise UndefinedMeasureError("relative error is undefined for a zero tensor")
    return residual_norm(X, model) / ref
