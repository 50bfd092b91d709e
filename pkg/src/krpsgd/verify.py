"""Desk-scale verification suite comparing fast paths against the oracles."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from math import prod
from typing import Callable

import numpy as np

from krpsgd import oracle
from krpsgd.sampling import (
    BLOCK_EUCLIDEAN,
    BLOCK_LEVERAGE,
    EUCLIDEAN,
    LEVERAGE,
    BlockPartition,
    FiberSampler,
    SampleBatch,
    block_probabilities,
    euclidean_probabilities,
    krp_samp1,
    krp_samp2,
    leverage_probabilities,
    leverage_scores,
    skr_product,
)
from krpsgd.solver import stochastic_gradient
from krpsgd.synth import add_noise
from krpsgd.tensor import DenseTensor, KruskalModel, linear_indices

IMPORTANCE_STRATEGIES = (LEVERAGE, EUCLIDEAN, BLOCK_LEVERAGE, BLOCK_EUCLIDEAN)


@dataclass
class CheckResult:
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0


@dataclass
class OracleReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{status}  {c.name:<18} measured={c.measured:.6g}  "
                f"threshold={c.threshold:.6g}  ({c.seconds:.2f}s) {c.detail}".rstrip()
            )
        lines.append(f"{len(self.checks) - len(self.failures())}/{len(self.checks)} checks passed")
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "measured", "threshold", "passed", "detail"])
            for c in self.checks:
                writer.writerow([c.name, repr(float(c.measured)), repr(float(c.threshold)), int(c.passed), c.detail])


def tiny_problem(seed: int = 7, dims=(3, 3, 3), rank: int = 2) -> tuple[DenseTensor, KruskalModel]:
    """Fixed small tensor and model for statistical gradient checks."""
    rng = np.random.default_rng(seed)
    X = DenseTensor.from_array(rng.standard_normal(dims))
    model = KruskalModel(tuple(rng.uniform(0.5, 1.5, size=(d, rank)) for d in dims))
    return X, model


def total_variation(counts: np.ndarray, probs: np.ndarray) -> float:
    return 0.5 * float(np.abs(counts / counts.sum() - probs).sum())


def check_index_bijection(rng, shapes: int = 200, max_dim: int = 6) -> CheckResult:
    failures = 0
    for _ in range(shapes):
        N = int(rng.integers(3, 5))
        dims = tuple(int(d) for d in rng.integers(1, max_dim + 1, size=N))
        mode = int(rng.integers(1, N + 1))
        others = [d for k, d in enumerate(dims, start=1) if k != mode]
        tuples = np.array(list(oracle.ordered_tuples(others)))
        j = linear_indices(mode, tuples, dims)
        if not np.array_equal(np.sort(j), np.arange(1, prod(others) + 1)):
            failures += 1
    return CheckResult("index_bijection", failures, 0, failures == 0, f"{shapes} shapes")


def random_factor_set(rng, max_rows: int = 5, max_rank: int = 3, count: int | None = None):
    count = count if count is not None else int(rng.integers(2, 4))
    R = int(rng.integers(1, max_rank + 1))
    return [rng.standard_normal((int(rng.integers(1, max_rows + 1)), R)) for _ in range(count)]


def check_skr_fidelity(rng, sets: int = 100) -> CheckResult:
    mismatches = 0
    for _ in range(sets):
        factors = random_factor_set(rng)
        tuples = np.array(list(oracle.ordered_tuples([A.shape[0] for A in factors])))
        if not np.array_equal(skr_product(tuples, factors), oracle.explicit_krp(factors)):
            mismatches += 1
    return CheckResult("skr_fidelity", mismatches, 0, mismatches == 0, f"{sets} factor sets, bitwise")


def check_leverage_bound(rng, sets: int = 100, slack: float = 1e-10) -> CheckResult:
    worst = -np.inf
    for _ in range(sets):
        factors = random_factor_set(rng)
        exact = oracle.exact_krp_leverage(factors)
        per_mode = [leverage_scores(A) for A in factors]
        bound = np.array([prod(s[i - 1] for s, i in zip(per_mode, t))
                          for t in oracle.ordered_tuples([A.shape[0] for A in factors])])
        worst = max(worst, float((exact - bound).max()))
    return CheckResult("leverage_bound", worst, slack, worst <= slack, "max(exact - bound)")


def product_law_factors() -> list[np.ndarray]:
    return [np.array([[1.0, 0.2], [0.3, 1.0], [1.0, 1.0]]),
            np.array([[2.0, 0.0], [0.5, 0.5], [0.0, 1.0], [1.0, -1.0]])]


def check_product_law(rng, draws: int = 10**6, block_draws: int = 10**5, tv_max: float = 0.02) -> CheckResult:
    factors = product_law_factors()
    sizes = [A.shape[0] for A in factors]
    probs = [leverage_probabilities(A) for A in factors]
    batch = krp_samp1(draws, probs, factors, rng, mode=1, strategy=LEVERAGE)
    counts = np.zeros(sizes)
    np.add.at(counts, (batch.idx[:, 0] - 1, batch.idx[:, 1] - 1), 1)
    tv_rows = total_variation(counts, np.outer(*probs))

    dims = (2, *sizes)
    part = BlockPartition.cyclic(dims, 1, 2)
    bprobs = [np.asarray(euclidean_probabilities(A)) for A in factors]
    bprobs = [block_probabilities(p, b) for p, b in zip(bprobs, part.blocks)]
    bcounts = np.zeros(part.block_counts)
    for _ in range(block_draws):
        d2, d3 = krp_samp2(bprobs, part, factors, rng, BLOCK_EUCLIDEAN).block_ids
        bcounts[d2 - 1, d3 - 1] += 1
    tv_blocks = total_variation(bcounts, np.outer(*bprobs))
    worst = max(tv_rows, tv_blocks)
    return CheckResult("product_law", worst, tv_max, worst <= tv_max,
                       f"tv rows={tv_rows:.4g} blocks={tv_blocks:.4g}")


def unbiasedness_errors(trials: int, rng, gradient: Callable = stochastic_gradient,
                        batch_size: int = 2, mode: int = 1) -> dict[str, tuple[float, float]]:
    """Relative Frobenius error of the Monte-Carlo mean for each importance estimator.

    Returns ``{strategy: (relative error, relative standard error)}``.
    """
    X, model = tiny_problem()
    target = oracle.full_gradient(X, model, mode)
    factors = model.other_factors(mode)
    out = {}
    for strategy in IMPORTANCE_STRATEGIES:
        sampler = FiberSampler(strategy, X.dims, batch_size)
        probs = sampler.mode_probabilities(model, mode)
        if strategy in (BLOCK_LEVERAGE, BLOCK_EUCLIDEAN):
            part = sampler.partition(mode)
            draw = lambda g, p=probs, s=strategy: krp_samp2(p, part, factors, g, s)
        else:
            draw = lambda g, p=probs, s=strategy: krp_samp1(batch_size, p, factors, g, mode, s)
        mean, stderr = oracle.monte_carlo_mean_gradient(X, model, mode, draw, gradient, trials, rng)
        out[strategy] = (oracle.relative_frobenius(mean, target),
                         float(np.linalg.norm(stderr) / np.linalg.norm(target)))
    return out


def check_unbiasedness(rng, trials: int = 10**5, tol: float = 0.02, gradient: Callable = stochastic_gradient) -> CheckResult:
    errors = unbiasedness_errors(trials, rng, gradient)
    worst = max(e for e, _ in errors.values())
    detail = " ".join(f"{s}={e:.4f}(se {se:.4f})" for s, (e, se) in errors.items())
    return CheckResult("unbiasedness", worst, tol, worst <= tol, detail)


def exhaustive_batch(X: DenseTensor, model: KruskalModel, mode: int) -> SampleBatch:
    """Every fiber once, in unfolding order, each with probability ``1/J_n``."""
    others = [d for k, d in enumerate(X.dims, start=1) if k != mode]
    tuples = np.array(list(oracle.ordered_tuples(others)))
    J = tuples.shape[0]
    return SampleBatch(mode, LEVERAGE, tuples, skr_product(tuples, model.other_factors(mode)),
                       row_probs=np.full(J, 1.0 / J))


def check_exhaustive_batch(tol: float = 1e-10, gradient: Callable = stochastic_gradient) -> CheckResult:
    X, model = tiny_problem()
    worst = 0.0
    for mode in range(1, X.ndim + 1):
        G = gradient(model, X, exhaustive_batch(X, model, mode))
        worst = max(worst, oracle.relative_frobenius(G, oracle.full_gradient(X, model, mode)))
    return CheckResult("exhaustive_batch", worst, tol, worst <= tol)


def fd_relative_error(X: DenseTensor, model: KruskalModel, mode: int, h: float = 1e-6) -> float:
    """Largest entrywise relative gap between ``full_gradient`` and central differences."""
    g = oracle.full_gradient(X, model, mode)
    fd = oracle.finite_difference_gradient(X, model, mode, h)
    return float(np.max(np.abs(fd - g) / np.maximum(np.abs(g), np.finfo(float).tiny)))


def check_finite_difference(rng, instances: int = 20, tol: float = 1e-5) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        X = DenseTensor.from_array(rng.standard_normal((3, 3, 3)))
        model = KruskalModel(tuple(rng.standard_normal((3, 2)) for _ in range(3)))
        for mode in range(1, 4):
            worst = max(worst, fd_relative_error(X, model, mode))
    return CheckResult("finite_difference", worst, tol, worst <= tol, f"{instances} instances, h=1e-6")


def check_noise_identity(rng, tol: float = 1e-12) -> CheckResult:
    X = DenseTensor.from_array(rng.standard_normal((4, 5, 6)))
    worst = 0.0
    for level in (0.0, 0.05, 0.2):
        noisy = add_noise(X, level, rng)
        measured = np.linalg.norm(noisy.values - X.values) / X.norm()
        worst = max(worst, abs(measured - level))
    return CheckResult("noise_identity", worst, tol, worst <= tol, "levels 0, 0.05, 0.2")


CHECKS = (
    "index_bijection",
    "skr_fidelity",
    "leverage_bound",
    "product_law",
    "unbiasedness",
    "exhaustive_batch",
    "finite_difference",
    "noise_identity",
)


def run_checks(only=None, trials: int = 10**5, seed: int = 0,
               gradient: Callable = stochastic_gradient) -> OracleReport:
    """Run the named checks (all by default), each with its own generator."""
    names = list(only) if only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}; choose from {', '.join(CHECKS)}")
    report = OracleReport()
    for name in names:
        rng = np.random.default_rng([seed, CHECKS.index(name)])
        start = time.perf_counter()
        if name == "index_bijection":
            result = check_index_bijection(rng)
        elif name == "skr_fidelity":
            result = check_skr_fidelity(rng)
        elif name == "leverage_bound":
            result = check_leverage_bound(rng)
        elif name == "product_law":
            result = check_product_law(rng)
        elif name == "unbiasedness":
            result = check_unbiasedness(rng, trials, gradient=gradient)
        elif name == "exhaustive_batch":
            result = check_exhaustive_batch(gradient=gradient)
        elif name == "finite_difference":
            result = check_finite_difference(rng)
        else:
            result = check_noise_identity(rng)
        result.seconds = time.perf_counter() - start
        report.checks.append(result)
    return report
