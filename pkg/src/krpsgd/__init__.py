"""Mini-batch SGD with importance-sampled fibers for CP tensor decomposition."""
from krpsgd.sampling import FiberSampler, krp_samp1, krp_samp2, skr_product
from krpsgd.solver import AdaptiveSchedule, FixedSchedule, SolverConfig, run
from krpsgd.synth import GenSpec, add_noise, generate
from krpsgd.tensor import (
    DenseTensor,
    KruskalModel,
    extract_fibers,
    linear_index,
    objective,
    reconstruct,
    relative_error,
)

__all__ = [
    "AdaptiveSchedule",
    "DenseTensor",
    "FiberSampler",
    "FixedSchedule",
    "GenSpec",
    "KruskalModel",
    "SolverConfig",
    "add_noise",
    "extract_fibers",
    "generate",
    "krp_samp1",
    "krp_samp2",
    "linear_index",
    "objective",
    "reconstruct",
    "relative_error",
    "run",
    "skr_product",
]
