"""Slow reference implementations, written straight from the definitions.

Nothing here shares code with the fast paths in :mod:`krpsgd.tensor`,
:mod:`krpsgd.sampling` or :mod:`krpsgd.solver`; explicit constructions are
capped so they cannot be run at experiment scale by accident.
"""
from __future__ import annotations

import itertools
from math import prod
from typing import Callable, Sequence

import numpy as np

from krpsgd.errors import OracleCapError
from krpsgd.tensor import DenseTensor, KruskalModel, objective

DEFAULT_ROW_CAP = 100_000


def ordered_tuples(sizes: Sequence[int]):
    """All 1-based tuples over ``sizes`` with the first entry varying fastest."""
    for t in itertools.product(*(range(1, s + 1) for s in reversed(sizes))):
        yield tuple(reversed(t))


def _check_cap(rows: int, cap: int) -> None:
    if rows > cap:
        raise OracleCapError(f"{rows} rows exceed the oracle cap of {cap}")


def explicit_krp(factors: Sequence[np.ndarray], cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """Full Khatri-Rao product, one row per tuple in unfolding column order."""
    sizes = [A.shape[0] for A in factors]
    _check_cap(prod(sizes), cap)
    R = factors[0].shape[1]
    rows = []
    for t in ordered_tuples(sizes):
        row = np.ones(R)
        for A, i in zip(factors, t):
            row = row * A[i - 1]
        rows.append(row)
    return np.array(rows).reshape(-1, R)


def unfold_by_definition(X: DenseTensor, mode: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """Mode-n unfolding filled entry by entry from the index map."""
    dims = X.dims
    _check_cap(X.values.size, cap)
    J = prod(d for k, d in enumerate(dims, start=1) if k != mode)
    out = np.empty((dims[mode - 1], J))
    full = X.to_array()
    for pos in np.ndindex(*dims):
        i = [p + 1 for p in pos]
        j, weight = 1, 1
        for k in range(1, len(dims) + 1):
            if k == mode:
                continue
            j += (i[k - 1] - 1) * weight
            weight *= dims[k - 1]
        out[i[mode - 1] - 1, j - 1] = full[pos]
    return out


def naive_objective(X: DenseTensor, model: KruskalModel) -> float:
    """Half squared residual, accumulated one entry at a time."""
    full = X.to_array()
    total = 0.0
    for pos in np.ndindex(*X.dims):
        model_entry = 0.0
        for r in range(model.rank):
            term = 1.0
            for A, i in zip(model.factors, pos):
                term *= A[i, r]
            model_entry += term
        total += (full[pos] - model_entry) ** 2
    return 0.5 * total


def exact_krp_leverage(factors: Sequence[np.ndarray], cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """Leverage scores of the explicit KRP from its thin SVD."""
    Z = explicit_krp(factors, cap)
    U, s, _ = np.linalg.svd(Z, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros(Z.shape[0])
    rank = int(np.count_nonzero(s > max(Z.shape) * np.finfo(float).eps * s[0]))
    return (U[:, :rank] ** 2).sum(axis=1)


def full_gradient(X: DenseTensor, model: KruskalModel, mode: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """``(A^(n) Z^T Z - X_(n) Z) / J_n`` with ``Z`` the explicit KRP."""
    Z = explicit_krp(model.other_factors(mode), cap)
    Xn = unfold_by_definition(X, mode, cap)
    A = model.factor(mode)
    return (A @ Z.T @ Z - Xn @ Z) / Z.shape[0]


def finite_difference_gradient(X: DenseTensor, model: KruskalModel, mode: int, h: float = 1e-6) -> np.ndarray:
    """Central differences of ``objective / J_n`` w.r.t. each entry of ``A^(mode)``."""
    A = np.array(model.factor(mode))
    J = prod(d for k, d in enumerate(X.dims, start=1) if k != mode)
    grad = np.empty_like(A)
    for pos in np.ndindex(*A.shape):
        plus, minus = A.copy(), A.copy()
        plus[pos] += h
        minus[pos] -= h
        f_plus = objective(X, model.replace_factor(mode, plus))
        f_minus = objective(X, model.replace_factor(mode, minus))
        grad[pos] = (f_plus - f_minus) / (2 * h) / J
    return grad


def monte_carlo_mean_gradient(
    X: DenseTensor,
    model: KruskalModel,
    mode: int,
    draw: Callable[[np.random.Generator], object],
    gradient: Callable,
    trials: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of ``trials`` stochastic gradients and per-entry standard errors.

    ``draw(rng)`` returns a batch; ``gradient(model, X, batch)`` evaluates it.
    Trials are accumulated in trial order.
    """
    mean = np.zeros_like(model.factor(mode))
    m2 = np.zeros_like(mean)
    for t in range(1, trials + 1):
        # Welford update: no cancellation when the estimator barely varies
        G = gradient(model, X, draw(rng))
        delta = G - mean
        mean += delta / t
        m2 += delta * (G - mean)
    if trials < 2:
        return mean, np.zeros_like(mean)
    return mean, np.sqrt(m2 / (trials - 1) / trials)


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_F / ||b||_F``."""
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
