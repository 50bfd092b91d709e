"""Importance sampling of Khatri-Rao rows without forming the product.

Rows of ``Z^(n) = A^(N) (.) ... (.) A^(1)`` (mode ``n`` skipped) are chosen by
sampling one row index per mode ``k != n`` from a distribution over the rows
of ``A^(k)``. The probability of a multi-index is the product of the per-mode
probabilities, which is what the importance weights use. Sampled rows are
assembled as Hadamard products of factor rows.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np
import scipy.linalg

from krpsgd.errors import DegenerateDistributionError, IndexRangeError, ShapeError
from krpsgd.tensor import KruskalModel, check_mode, fiber_count

UNIFORM = "uniform"
LEVERAGE = "leverage"
EUCLIDEAN = "euclidean"
BLOCK_LEVERAGE = "block-leverage"
BLOCK_EUCLIDEAN = "block-euclidean"
STRATEGIES = (UNIFORM, LEVERAGE, EUCLIDEAN, BLOCK_LEVERAGE, BLOCK_EUCLIDEAN)
ROWWISE = (LEVERAGE, EUCLIDEAN)
BLOCKWISE = (BLOCK_LEVERAGE, BLOCK_EUCLIDEAN)


def leverage_scores(A, rank_tol: float | None = None) -> np.ndarray:
    """Squared row norms of an orthonormal basis for ``range(A)``.

    The basis comes from a column-pivoted QR factorisation. Columns of ``R``
    whose diagonal falls below ``rank_tol * max column norm`` are dropped;
    the default ``rank_tol`` is ``max(m, R) * eps``.
    """
    A = np.asarray(A, dtype=np.float64)
    m, r = A.shape
    colmax = np.linalg.norm(A, axis=0).max(initial=0.0)
    if colmax == 0.0:
        return np.zeros(m)
    if rank_tol is None:
        rank_tol = max(m, r) * np.finfo(np.float64).eps
    Q, Rf, _ = scipy.linalg.qr(A, mode="economic", pivoting=True)
    rank = int(np.count_nonzero(np.abs(np.diag(Rf)) > rank_tol * colmax))
    return np.einsum("ij,ij->i", Q[:, :rank], Q[:, :rank])


def _normalize(weights: np.ndarray, what: str) -> np.ndarray:
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateDistributionError(f"{what}: weights sum to {total}")
    return weights / total


def leverage_probabilities(A) -> np.ndarray:
    """Leverage scores normalised by their sum (``rank(A)``, not ``R``)."""
    return _normalize(leverage_scores(A), "leverage probabilities")


def euclidean_probabilities(A) -> np.ndarray:
    """Squared row norms over the squared Frobenius norm."""
    A = np.asarray(A, dtype=np.float64)
    return _normalize(np.einsum("ij,ij->i", A, A), "euclidean probabilities")


def block_probabilities(per_row, blocks) -> np.ndarray:
    """Sum per-row weights inside each block and renormalise over blocks.

    ``blocks`` is a ``D x B`` array of 1-based row indices. Repeated indices
    count once per occurrence.
    """
    per_row = np.asarray(per_row, dtype=np.float64)
    blocks = np.asarray(blocks)
    if blocks.min() < 1 or blocks.max() > per_row.size:
        raise IndexRangeError(f"block entries must lie in [1, {per_row.size}]")
    return _normalize(per_row[blocks - 1].sum(axis=1), "block probabilities")


def multinomial_sample(p, count: int, rng) -> np.ndarray:
    """``count`` i.i.d. 1-based draws from ``p`` (with replacement)."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0 or not np.isfinite(p).all() or p.min() < 0 or p.sum() <= 0:
        raise DegenerateDistributionError("weights must be finite, nonnegative and not all zero")
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(count), side="right") + 1


def skr_product(idx, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Rows of the Khatri-Rao product selected by the tuples in ``idx``.

    ``idx`` is ``B x (N-1)`` with 1-based entries; column ``k`` indexes
    ``factors[k]``. Row ``b`` is the Hadamard product of the selected factor
    rows, accumulated in factor order starting from a row of ones.
    """
    idx = np.asarray(idx)
    if idx.ndim != 2 or idx.shape[1] != len(factors):
        raise ShapeError(f"idx of shape {idx.shape} does not match {len(factors)} factors")
    R = factors[0].shape[1]
    Z = np.ones((idx.shape[0], R))
    for k, A in enumerate(factors):
        col = idx[:, k]
        if col.size and (col.min() < 1 or col.max() > A.shape[0]):
            raise IndexRangeError(f"idx column {k} outside [1, {A.shape[0]}]")
        Z = Z * A[col - 1]
    return Z


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Row blocks of every factor ``k != mode``.

    ``blocks[k]`` is a ``D_k x B`` array of 1-based row indices of the k-th
    non-sampled factor. A draw picks one block per mode; fiber ``b`` pairs up
    the ``b``-th entries of the chosen blocks.
    """

    mode: int
    dims: tuple[int, ...]
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        check_mode(self.mode, len(self.dims))
        other = [d for k, d in enumerate(self.dims, start=1) if k != self.mode]
        blocks = tuple(np.asarray(b, dtype=np.int64) for b in self.blocks)
        if len(blocks) != len(other):
            raise ShapeError(f"need {len(other)} block sets, got {len(blocks)}")
        widths = {b.shape[1] for b in blocks if b.ndim == 2}
        if len(widths) != 1 or any(b.ndim != 2 for b in blocks):
            raise ShapeError("every block must hold the same number of indices")
        for b, size in zip(blocks, other):
            if b.min() < 1 or b.max() > size:
                raise IndexRangeError(f"block entries must lie in [1, {size}]")
        object.__setattr__(self, "dims", tuple(self.dims))
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def cyclic(cls, dims: Sequence[int], mode: int, batch_size: int) -> BlockPartition:
        """One window per row: block ``d`` of mode ``k`` is ``d, d+1, ..., d+B-1 (mod I_k)``.

        Each row sits at every window position exactly once, so all fibers
        are covered equally often across the multi-blocks.
        """
        blocks = []
        for k, size in enumerate(dims, start=1):
            if k == mode:
                continue
            start = np.arange(size)[:, None]
            blocks.append((start + np.arange(batch_size)[None, :]) % size + 1)
        return cls(mode, tuple(dims), tuple(blocks))

    @property
    def batch_size(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def block_counts(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    @property
    def coverage(self) -> float:
        """Mean number of times a fiber appears across all multi-blocks."""
        return self.batch_size * prod(self.block_counts) / fiber_count(self.dims, self.mode)

    def is_balanced(self) -> bool:
        """True when every fiber appears exactly ``coverage`` times."""
        for b in range(self.batch_size):
            for blk, size in zip(self.blocks, self._other_dims()):
                counts = np.bincount(blk[:, b] - 1, minlength=size)
                if counts.min() != counts.max():
                    return False
        return True

    def _other_dims(self):
        return [d for k, d in enumerate(self.dims, start=1) if k != self.mode]


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``B`` sampled mode-n fibers with their sampling probabilities.

    Row-wise and uniform strategies fill ``row_probs`` (probability of each
    fiber's multi-index); block strategies fill ``batch_prob`` (probability
    of the selected multi-block) and ``coverage``.
    """

    mode: int
    strategy: str
    idx: np.ndarray
    krp_rows: np.ndarray
    row_probs: np.ndarray | None = None
    batch_prob: float | None = None
    coverage: float = 1.0
    block_ids: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        if (self.row_probs is None) == (self.batch_prob is None):
            raise ValueError("exactly one of row_probs and batch_prob must be set")
        if (self.batch_prob is not None) != (self.strategy in BLOCKWISE):
            raise ValueError(f"strategy {self.strategy!r} does not match probability kind")

    @property
    def batch_size(self) -> int:
        return self.idx.shape[0]


def krp_samp1(
    batch_size: int,
    probs: Sequence[np.ndarray],
    factors: Sequence[np.ndarray],
    rng,
    mode: int = 1,
    strategy: str = LEVERAGE,
) -> SampleBatch:
    """Sample ``B`` KRP rows, each mode independently, with exact row probabilities."""
    if len(probs) != len(factors):
        raise ShapeError("one distribution per non-sampled factor is required")
    idx = np.empty((batch_size, len(factors)), dtype=np.int64)
    row_probs = np.ones(batch_size)
    for k, p in enumerate(probs):
        p = np.asarray(p, dtype=np.float64)
        if p.size != factors[k].shape[0]:
            raise ShapeError(f"distribution {k} has {p.size} weights for {factors[k].shape[0]} rows")
        if not np.isfinite(p).all() or p.min() < 0 or p.sum() <= 0:
            raise DegenerateDistributionError(f"distribution {k} is not a probability vector")
        idx[:, k] = multinomial_sample(p, batch_size, rng)
        row_probs *= p[idx[:, k] - 1]
    return SampleBatch(mode, strategy, idx, skr_product(idx, factors), row_probs=row_probs)


def krp_samp2(
    block_probs: Sequence[np.ndarray],
    partition: BlockPartition,
    factors: Sequence[np.ndarray],
    rng,
    strategy: str = BLOCK_LEVERAGE,
) -> SampleBatch:
    """Draw one block per mode and return the resulting multi-block."""
    if len(block_probs) != len(partition.blocks):
        raise ShapeError("one block distribution per non-sampled factor is required")
    B = partition.batch_size
    idx = np.empty((B, len(factors)), dtype=np.int64)
    batch_prob = 1.0
    chosen = []
    for k, (p, blocks) in enumerate(zip(block_probs, partition.blocks)):
        p = np.asarray(p, dtype=np.float64)
        if p.size != blocks.shape[0]:
            raise ShapeError(f"block distribution {k} has {p.size} weights for {blocks.shape[0]} blocks")
        if not np.isfinite(p).all() or p.min() < 0 or p.sum() <= 0:
            raise DegenerateDistributionError(f"block distribution {k} is not a probability vector")
        d = int(multinomial_sample(p, 1, rng)[0])
        chosen.append(d)
        idx[:, k] = blocks[d - 1]
        batch_prob *= float(p[d - 1])
    return SampleBatch(
        partition.mode,
        strategy,
        idx,
        skr_product(idx, factors),
        batch_prob=batch_prob,
        coverage=partition.coverage,
        block_ids=tuple(chosen),
    )


def uniform_sample(batch_size: int, factors: Sequence[np.ndarray], rng, mode: int = 1) -> SampleBatch:
    """Uniform fiber sampling with replacement, each mode independently."""
    sizes = [A.shape[0] for A in factors]
    idx = np.empty((batch_size, len(factors)), dtype=np.int64)
    for k, size in enumerate(sizes):
        idx[:, k] = rng.integers(1, size + 1, size=batch_size)
    row_probs = np.full(batch_size, 1.0 / prod(sizes))
    return SampleBatch(mode, UNIFORM, idx, skr_product(idx, factors), row_probs=row_probs)


_ROW_PROBS = {
    LEVERAGE: leverage_probabilities,
    EUCLIDEAN: euclidean_probabilities,
    BLOCK_LEVERAGE: leverage_probabilities,
    BLOCK_EUCLIDEAN: euclidean_probabilities,
}


class FiberSampler:
    """Draws mode-n fiber batches from the current factors.

    Probabilities are recomputed from scratch on every call, since the
    factors change between iterations.
    """

    def __init__(self, strategy: str, dims: Sequence[int], batch_size: int):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown sampler {strategy!r}; choose from {', '.join(STRATEGIES)}")
        if batch_size < 1:
            raise ValueError("batch size must be at least 1")
        self.strategy = strategy
        self.dims = tuple(dims)
        self.batch_size = batch_size
        self._partitions: dict[int, BlockPartition] = {}

    def partition(self, mode: int) -> BlockPartition:
        if mode not in self._partitions:
            self._partitions[mode] = BlockPartition.cyclic(self.dims, mode, self.batch_size)
        return self._partitions[mode]

    def mode_probabilities(self, model: KruskalModel, mode: int) -> list[np.ndarray]:
        """Per-mode row (or block) distributions for every factor ``k != mode``."""
        rowwise = [_ROW_PROBS[self.strategy](A) for A in model.other_factors(mode)]
        if self.strategy in BLOCKWISE:
            part = self.partition(mode)
            return [block_probabilities(p, b) for p, b in zip(rowwise, part.blocks)]
        return rowwise

    def sample(self, model: KruskalModel, mode: int, rng) -> SampleBatch:
        factors = model.other_factors(mode)
        if self.strategy == UNIFORM:
            return uniform_sample(self.batch_size, factors, rng, mode)
        probs = self.mode_probabilities(model, mode)
        if self.strategy in BLOCKWISE:
            return krp_samp2(probs, self.partition(mode), factors, rng, self.strategy)
        return krp_samp1(self.batch_size, probs, factors, rng, mode, self.strategy)


def write_probabilities_csv(path, weights) -> None:
    """Dump a distribution as ``index,weight`` rows (1-based index)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "weight"])
        for i, w in enumerate(np.asarray(weights), start=1):
            writer.writerow([i, repr(float(w))])
