"""Synthetic I x I x J tensors whose factors have a few high-leverage rows."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from krpsgd.cpt import write_tensor
from krpsgd.tensor import DenseTensor, KruskalModel, reconstruct

SPIKED_COLUMNS = 3


@dataclass(frozen=True)
class GenSpec:
    I: int
    J: int
    R: int
    spread: int = 15
    magnitude: float = 24.0
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.I < 1 or self.J < 1:
            raise ValueError("I and J must be positive")
        if self.R < SPIKED_COLUMNS:
            raise ValueError(f"rank must be at least {SPIKED_COLUMNS}")
        if self.spread < 0:
            raise ValueError("spread must be nonnegative")
        if self.spread > self.I:
            raise ValueError(f"spread {self.spread} exceeds the row count I={self.I}")
        if not self.magnitude > 0:
            raise ValueError("magnitude must be positive")
        if not self.noise >= 0:
            raise ValueError("noise level must be nonnegative")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.I, self.I, self.J)


def add_noise(X: DenseTensor, level: float, rng) -> DenseTensor:
    """Add Gaussian noise scaled so that ``||noise|| = level * ||X||``."""
    if level == 0:
        return X
    N = rng.standard_normal(X.values.size)
    scale = level * X.norm() / np.linalg.norm(N)
    return DenseTensor(X.dims, X.values + scale * N)


def generate(spec: GenSpec) -> tuple[DenseTensor, KruskalModel, list[str]]:
    """Build the tensor, its noiseless factors and notes for the sidecar.

    Factors start standard Gaussian; their first three columns are zeroed and
    then ``spread`` distinct random rows of each of those columns are set to
    ``+-magnitude``. The third (J-row) factor caps ``spread`` at ``J``.
    """
    rng = np.random.default_rng(spec.seed)
    factors = [rng.standard_normal((d, spec.R)) for d in spec.dims]
    notes = []
    for n, A in enumerate(factors):
        A[:, :SPIKED_COLUMNS] = 0.0
        rows = min(spec.spread, A.shape[0])
        if rows < spec.spread:
            notes.append(f"spread capped at {rows} rows for factor {n + 1}")
        for r in range(SPIKED_COLUMNS):
            chosen = rng.choice(A.shape[0], size=rows, replace=False)
            signs = rng.choice([-1.0, 1.0], size=rows)
            A[chosen, r] = spec.magnitude * signs
    if spec.spread == 0:
        notes.append(
            f"spread 0: first {SPIKED_COLUMNS} columns stay zero, "
            f"effective rank <= {spec.R - SPIKED_COLUMNS}"
        )
    truth = KruskalModel(tuple(factors))
    X = add_noise(reconstruct(truth), spec.noise, rng)
    return X, truth, notes


def write_generated(path, spec: GenSpec) -> tuple[DenseTensor, KruskalModel]:
    """Generate, write the CPT1 file and a ``<path>.meta`` sidecar."""
    X, truth, notes = generate(spec)
    write_tensor(path, X)
    lines = [f"{key}={value}" for key, value in asdict(spec).items()]
    lines += [f"note={note}" for note in notes]
    with open(f"{path}.meta", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return X, truth
