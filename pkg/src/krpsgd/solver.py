"""Mini-batch SGD for CP decomposition with importance-sampled fibers.

Each iteration picks a mode uniformly at random, samples ``B`` mode-n fibers
through a :class:`~krpsgd.sampling.FiberSampler`, forms an importance-weighted
stochastic gradient for that factor and takes either a Robbins-Monro step
or an AdaGrad-style adaptive step.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from krpsgd.errors import DegenerateDistributionError, ShapeError
from krpsgd.sampling import BLOCKWISE, STRATEGIES, UNIFORM, FiberSampler, SampleBatch
from krpsgd.tensor import (
    DenseTensor,
    KruskalModel,
    extract_fibers,
    fiber_count,
    relative_error,
)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
FAILED = "error"


@dataclass(frozen=True)
class FixedSchedule:
    """Robbins-Monro steps ``alpha0 / (1 + r) ** exponent``."""

    alpha0: float = 0.05
    exponent: float = 0.6

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        # sum alpha = inf needs exponent <= 1; sum alpha^2 < inf needs exponent > 1/2
        if not 0.5 < self.exponent <= 1.0:
            raise ValueError("Robbins-Monro exponent must lie in (0.5, 1]")

    def __call__(self, r: int) -> float:
        return self.alpha0 / (1.0 + r) ** self.exponent


@dataclass(frozen=True)
class AdaptiveSchedule:
    """Per-entry steps ``eta / (b + sum_t G_t**2) ** (1/2 + eps)``."""

    eta: float = 1.0
    b: float = 1e-6
    eps: float = 0.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.b > 0:
            raise ValueError("b must be positive (b = 0 divides by zero on the first step)")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    batch_size: int
    sampler: str = UNIFORM
    step: FixedSchedule | AdaptiveSchedule = field(default_factory=AdaptiveSchedule)
    tol: float = 1e-4
    max_iters: int = 1000
    cadence: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.sampler not in STRATEGIES:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {', '.join(STRATEGIES)}")
        if not isinstance(self.step, (FixedSchedule, AdaptiveSchedule)):
            raise TypeError("step must be a FixedSchedule or AdaptiveSchedule")
        if not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.cadence < 1:
            raise ValueError("cadence must be at least 1")


@dataclass(frozen=True)
class AdaptiveState:
    """Running sums of squared gradient entries, one matrix per mode."""

    sums: tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, model: KruskalModel) -> AdaptiveState:
        return cls(tuple(np.zeros_like(A) for A in model.factors))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    seconds: float
    rel_error: float
    mode: int


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = MAX_ITERS
    message: str = ""

    def append(self, record: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            assert record.iteration > last.iteration and record.seconds >= last.seconds
        self.records.append(record)

    def iters_to_tol(self, tol: float) -> int | None:
        """First evaluated iteration whose relative error is ``<= tol``."""
        for rec in self.records:
            if rec.rel_error <= tol:
                return rec.iteration
        return None

    @property
    def final_rel_error(self) -> float:
        return self.records[-1].rel_error

    @property
    def seconds(self) -> float:
        return self.records[-1].seconds


class SolverError(RuntimeError):
    """Raised when a run aborts; ``trace`` holds the records up to the failure."""

    def __init__(self, message: str, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


def stochastic_gradient_rowwise(model: KruskalModel, X: DenseTensor, batch: SampleBatch) -> np.ndarray:
    """Importance-weighted gradient for row-wise sampled fibers.

    ``G = (A Z^T D Z - X_F D Z) / (B J_n)`` with ``D = diag(1 / p_b)``.
    """
    p = batch.row_probs
    if p is None or np.any(p <= 0):
        raise DegenerateDistributionError("row-wise gradient needs positive row probabilities")
    n = batch.mode
    A = model.factor(n)
    Z = batch.krp_rows
    XF = extract_fibers(X, n, batch.idx)
    w = 1.0 / p
    Zw = Z * w[:, None]
    scale = 1.0 / (batch.batch_size * fiber_count(X.dims, n))
    return scale * (A @ (Zw.T @ Z) - XF @ Zw)


def stochastic_gradient_block(model: KruskalModel, X: DenseTensor, batch: SampleBatch) -> np.ndarray:
    """Gradient for a sampled multi-block.

    ``G = (A Z^T Z - X_F Z) / (c p J_n)`` where ``p`` is the multi-block
    probability and ``c`` the partition's fiber coverage (1 for a disjoint
    partition of the fibers).
    """
    p = batch.batch_prob
    if p is None or not p > 0:
        raise DegenerateDistributionError("block gradient needs a positive batch probability")
    n = batch.mode
    A = model.factor(n)
    Z = batch.krp_rows
    XF = extract_fibers(X, n, batch.idx)
    scale = 1.0 / (batch.coverage * p * fiber_count(X.dims, n))
    return scale * (A @ (Z.T @ Z) - XF @ Z)


def stochastic_gradient_uniform(model: KruskalModel, X: DenseTensor, batch: SampleBatch) -> np.ndarray:
    """Unweighted mini-batch gradient ``(A Z^T Z - X_F Z) / B``."""
    n = batch.mode
    A = model.factor(n)
    Z = batch.krp_rows
    XF = extract_fibers(X, n, batch.idx)
    return (A @ (Z.T @ Z) - XF @ Z) / batch.batch_size


def stochastic_gradient(model: KruskalModel, X: DenseTensor, batch: SampleBatch) -> np.ndarray:
    """Dispatch to the estimator matching ``batch.strategy``."""
    if batch.strategy == UNIFORM:
        return stochastic_gradient_uniform(model, X, batch)
    if batch.strategy in BLOCKWISE:
        return stochastic_gradient_block(model, X, batch)
    return stochastic_gradient_rowwise(model, X, batch)


def _check_gradient(model: KruskalModel, mode: int, G: np.ndarray) -> None:
    if G.shape != model.factor(mode).shape:
        raise ShapeError(f"gradient shape {G.shape} != factor {mode} shape {model.factor(mode).shape}")


def sgd_step(model: KruskalModel, mode: int, G: np.ndarray, alpha: float) -> KruskalModel:
    _check_gradient(model, mode, G)
    return model.replace_factor(mode, model.factor(mode) - alpha * G)


def adaptive_step(
    model: KruskalModel,
    mode: int,
    G: np.ndarray,
    state: AdaptiveState,
    eta: float,
    b: float,
    eps: float,
) -> tuple[KruskalModel, AdaptiveState]:
    _check_gradient(model, mode, G)
    sums = list(state.sums)
    sums[mode - 1] = sums[mode - 1] + G * G
    steps = eta / (b + sums[mode - 1]) ** (0.5 + eps)
    return model.replace_factor(mode, model.factor(mode) - steps * G), AdaptiveState(tuple(sums))


GradientFn = Callable[[KruskalModel, DenseTensor, SampleBatch], np.ndarray]


def run(
    X: DenseTensor,
    config: SolverConfig,
    init: KruskalModel | None = None,
    gradient: GradientFn = stochastic_gradient,
) -> tuple[KruskalModel, RunTrace]:
    """Run SGD until the relative error reaches ``config.tol`` or ``max_iters``.

    With no ``init`` the factors are drawn uniform on [0, 1] from the run's
    generator before any sampling, so runs with equal seeds share a start.
    Per iteration the generator is consumed in a fixed order: mode first,
    then the fiber indices.
    """
    rng = np.random.default_rng(config.seed)
    model = init if init is not None else KruskalModel.random_uniform(X.dims, config.rank, rng)
    if model.dims != X.dims or model.rank != config.rank:
        raise ValueError(f"initial model {model.dims} x {model.rank} does not fit tensor {X.dims} at rank {config.rank}")
    sampler = FiberSampler(config.sampler, X.dims, config.batch_size)
    adaptive = isinstance(config.step, AdaptiveSchedule)
    state = AdaptiveState.zeros_like(model) if adaptive else None
    trace = RunTrace()

    start = time.perf_counter()
    err = relative_error(X, model)
    trace.append(TraceRecord(0, time.perf_counter() - start, err, 0))
    if err <= config.tol:
        trace.status = CONVERGED
        return model, trace

    for r in range(1, config.max_iters + 1):
        mode = int(rng.integers(1, X.ndim + 1))
        try:
            batch = sampler.sample(model, mode, rng)
            G = gradient(model, X, batch)
        except (DegenerateDistributionError, ValueError) as exc:
            trace.status, trace.message = FAILED, str(exc)
            raise SolverError(f"iteration {r}: {exc}", trace) from exc
        if adaptive:
            step = config.step
            model, state = adaptive_step(model, mode, G, state, step.eta, step.b, step.eps)
        else:
            model = sgd_step(model, mode, G, config.step(r - 1))
        if r % config.cadence == 0 or r == config.max_iters:
            err = relative_error(X, model)
            trace.append(TraceRecord(r, time.perf_counter() - start, err, mode))
            if not np.isfinite(err):
                trace.status, trace.message = FAILED, "relative error diverged"
                raise SolverError(f"iteration {r}: relative error is {err}", trace)
            if err <= config.tol:
                trace.status = CONVERGED
                break
    return model, trace
