"""Experiment plans: expand, execute (optionally in parallel) and write CSVs.

A plan is a JSON document::

    {
      "runs": [
        {
          "name": "desk",
          "samplers": ["uniform", "euclidean", "leverage"],
          "algorithm": "adaptive",
          "step": {"eta": 5.0, "b": 1e-6, "eps": 0.0},
          "data": {"I": 100, "J": 15, "R": 25, "spread": 15,
                   "magnitude": 24, "noise": 0.05},
          "rank": 25, "batch": 18, "tol": 1e-4, "max_iters": 1000,
          "cadence": 1, "repetitions": 10, "seeds": [1, 2, 3]
        }
      ]
    }

``data`` may be replaced by ``"tensor": "path.cpt"``. Each seed drives both
data generation (unless ``data.seed`` pins it) and the solver, so samplers
sharing a seed see the same tensor and the same initial factors.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

from krpsgd.cpt import read_tensor
from krpsgd.sampling import STRATEGIES
from krpsgd.solver import AdaptiveSchedule, FixedSchedule, RunTrace, SolverConfig, SolverError, run
from krpsgd.synth import GenSpec, generate
from krpsgd.tensor import DenseTensor

RESULT_HEADER = [
    "run_id", "algorithm", "sampler", "I", "J", "R", "B", "seed",
    "iters_to_tol", "seconds", "final_rel_error",
]
TRACE_HEADER = ["iter", "seconds", "rel_error", "mode"]

_PREFIX = {
    "uniform": "",
    "euclidean": "E",
    "leverage": "L",
    "block-euclidean": "BE",
    "block-leverage": "BL",
}


def algorithm_label(sampler: str, adaptive: bool) -> str:
    """Published algorithm name, e.g. ``EAdawsCPD`` or ``BrasCPD``."""
    if sampler == "uniform":
        return "AdasCPD" if adaptive else "BrasCPD"
    return f"{_PREFIX[sampler]}{'Adaws' if adaptive else 'Braws'}CPD"


def default_seed() -> int:
    return int(os.environ.get("KRPSGD_SEED", "0"))


@dataclass(frozen=True)
class RunSpec:
    """One fully determined run."""

    run_id: int
    config: SolverConfig
    data: GenSpec | None = None
    tensor: str | None = None

    @property
    def adaptive(self) -> bool:
        return isinstance(self.config.step, AdaptiveSchedule)


@dataclass
class RunResult:
    spec: RunSpec
    dims: tuple[int, ...]
    trace: RunTrace | None = None
    error: str = ""

    def row(self, timing: bool = True) -> list[str]:
        cfg = self.spec.config
        I, J = self.dims[0], self.dims[-1]
        iters = seconds = final = ""
        if self.trace is not None and not self.error:
            reached = self.trace.iters_to_tol(cfg.tol)
            iters = "" if reached is None else str(reached)
            seconds = repr(round(self.trace.seconds, 6) if timing else 0.0)
            final = repr(self.trace.final_rel_error)
        return [
            str(self.spec.run_id), algorithm_label(cfg.sampler, self.spec.adaptive), cfg.sampler,
            str(I), str(J), str(cfg.rank), str(cfg.batch_size), str(cfg.seed),
            iters, seconds, final,
        ]


@dataclass
class ExperimentPlan:
    runs: list[RunSpec] = field(default_factory=list)


def _step_from(entry: dict):
    kind = entry.get("algorithm", "adaptive")
    params = entry.get("step", {})
    if kind == "adaptive":
        return AdaptiveSchedule(**params)
    if kind == "fixed":
        return FixedSchedule(**params)
    raise ValueError(f"unknown algorithm {kind!r}; use 'adaptive' or 'fixed'")


def parse_plan(doc: dict, base_seed: int | None = None) -> ExperimentPlan:
    """Expand plan entries into individual runs, in plan order."""
    base_seed = default_seed() if base_seed is None else base_seed
    if not isinstance(doc, dict) or not isinstance(doc.get("runs"), list):
        raise ValueError("plan must be an object with a 'runs' list")
    plan = ExperimentPlan()
    for n, entry in enumerate(doc["runs"]):
        where = f"plan entry {n}"
        samplers = entry.get("samplers") or [entry.get("sampler", "uniform")]
        for s in samplers:
            if s not in STRATEGIES:
                raise ValueError(f"{where}: unknown sampler {s!r}")
        reps = int(entry.get("repetitions", 1))
        seeds = [int(s) for s in entry.get("seeds", range(base_seed, base_seed + reps))]
        if len(seeds) != reps and "repetitions" in entry:
            raise ValueError(f"{where}: {len(seeds)} seeds for {reps} repetitions")
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"{where}: seeds must be distinct per repetition")
        if ("data" in entry) == ("tensor" in entry):
            raise ValueError(f"{where}: give exactly one of 'data' or 'tensor'")
        step = _step_from(entry)
        data = entry.get("data")
        rank = int(entry.get("rank", data.get("R", 0) if data else 0))
        for seed in seeds:
            gen = None
            if data is not None:
                gen = GenSpec(**{"seed": seed, **data})
            for sampler in samplers:
                config = SolverConfig(
                    rank=rank,
                    batch_size=int(entry["batch"]),
                    sampler=sampler,
                    step=step,
                    tol=float(entry.get("tol", 1e-4)),
                    max_iters=int(entry.get("max_iters", 1000)),
                    cadence=int(entry.get("cadence", 1)),
                    seed=seed,
                )
                plan.runs.append(RunSpec(len(plan.runs) + 1, config, gen, entry.get("tensor")))
    return plan


def load_plan(path, base_seed: int | None = None) -> ExperimentPlan:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"plan {path}: {exc}") from exc
    plan = parse_plan(doc, base_seed)
    base = Path(path).parent
    plan.runs = [
        replace(r, tensor=str(base / r.tensor)) if r.tensor and not Path(r.tensor).is_absolute() else r
        for r in plan.runs
    ]
    return plan


@lru_cache(maxsize=8)
def _generated(spec: GenSpec) -> DenseTensor:
    return generate(spec)[0]


@lru_cache(maxsize=8)
def _loaded(path: str) -> DenseTensor:
    return read_tensor(path)


def execute(spec: RunSpec) -> RunResult:
    """Run one plan entry; solver failures are captured, not raised."""
    try:
        X = _generated(spec.data) if spec.data is not None else _loaded(spec.tensor)
    except (OSError, ValueError) as exc:
        dims = spec.data.dims if spec.data is not None else (0, 0)
        return RunResult(spec, dims, error=str(exc))
    try:
        _, trace = run(X, spec.config)
    except SolverError as exc:
        return RunResult(spec, X.dims, exc.trace, error=str(exc))
    except ValueError as exc:
        return RunResult(spec, X.dims, error=str(exc))
    return RunResult(spec, X.dims, trace)


def execute_plan(plan: ExperimentPlan, jobs: int = 1) -> list[RunResult]:
    """Execute every run; results come back in plan order."""
    if jobs <= 1:
        return [execute(r) for r in plan.runs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(execute, plan.runs))


def write_trace(path, trace: RunTrace, timing: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for rec in trace.records:
            seconds = round(rec.seconds, 6) if timing else 0.0
            writer.writerow([rec.iteration, repr(seconds), repr(rec.rel_error), rec.mode])


def write_results(out_dir, results: list[RunResult], timing: bool = True) -> Path:
    """Write ``results.csv``, per-run traces and (if needed) ``errors.csv``."""
    out_dir = Path(out_dir)
    (out_dir / "traces").mkdir(parents=True, exist_ok=True)
    path = out_dir / "results.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_HEADER)
        for res in results:
            writer.writerow(res.row(timing))
    for res in results:
        if res.trace is not None:
            write_trace(out_dir / "traces" / f"run_{res.spec.run_id:04d}.trace.csv", res.trace, timing)
    errors = [r for r in results if r.error]
    err_path = out_dir / "errors.csv"
    if errors:
        with open(err_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["run_id", "message"])
            for r in errors:
                writer.writerow([r.spec.run_id, r.error])
    elif err_path.exists():
        err_path.unlink()
    return path
