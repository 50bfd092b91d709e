"""Command-line entry point: ``krpsgd generate | decompose | bench | verify``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from krpsgd import bench
from krpsgd.cpt import read_model, read_tensor, write_model
from krpsgd.errors import FormatError
from krpsgd.sampling import STRATEGIES, write_probabilities_csv
from krpsgd.solver import AdaptiveSchedule, FixedSchedule, SolverConfig, SolverError, run
from krpsgd.synth import GenSpec, write_generated


def _cmd_generate(args) -> int:
    I, I2, J = args.dims
    if I != I2:
        raise ValueError(f"--dims must describe an I x I x J tensor, got {I} {I2} {J}")
    spec = GenSpec(I, J, args.rank, args.spread, args.magnitude, args.noise, args.seed)
    X, _ = write_generated(args.out, spec)
    print(f"wrote {args.out} ({X.values.size} values) and {args.out}.meta")
    return 0


def _schedule(args):
    if args.step == "adaptive":
        return AdaptiveSchedule(args.eta, args.b, args.eps)
    return FixedSchedule(args.alpha0, args.beta)


def _cmd_decompose(args) -> int:
    X = read_tensor(args.input)
    config = SolverConfig(
        rank=args.rank,
        batch_size=args.batch,
        sampler=args.sampler,
        step=_schedule(args),
        tol=args.tol,
        max_iters=args.max_iters,
        cadence=args.cadence,
        seed=args.seed,
    )
    init = read_model(args.init) if args.init else None
    prefix = args.out_prefix
    try:
        model, trace = run(X, config, init)
    except SolverError as exc:
        bench.write_trace(f"{prefix}.trace.csv", exc.trace, not args.no_timing)
        raise
    bench.write_trace(f"{prefix}.trace.csv", trace, not args.no_timing)
    write_model(f"{prefix}.model.cpt", model)
    print(
        f"{bench.algorithm_label(args.sampler, args.step == 'adaptive')}: {trace.status} "
        f"after {trace.records[-1].iteration} iterations, "
        f"relative error {trace.final_rel_error:.6g}"
    )
    return 0


def _cmd_bench(args) -> int:
    plan = bench.load_plan(args.plan, args.seed)
    results = bench.execute_plan(plan, args.jobs)
    path = bench.write_results(args.out, results, not args.no_timing)
    failed = [r for r in results if r.error]
    print(f"wrote {path} ({len(results)} runs, {len(failed)} failed)")
    for r in failed:
        print(f"run {r.spec.run_id}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def _cmd_verify(args) -> int:
    from krpsgd import verify

    report = verify.run_checks(args.only, trials=args.trials, seed=args.seed)
    print(report.to_text())
    if args.csv:
        report.write_csv(args.csv)
    if args.dump_probs:
        _dump_probabilities(Path(args.dump_probs))
    for c in report.failures():
        print(f"failed: {c.name} ({c.measured:.6g} > {c.threshold:.6g})", file=sys.stderr)
    return 0 if report.passed else 1


def _dump_probabilities(out_dir: Path) -> None:
    from krpsgd.sampling import euclidean_probabilities, leverage_probabilities
    from krpsgd.verify import tiny_problem

    out_dir.mkdir(parents=True, exist_ok=True)
    _, model = tiny_problem()
    for n, A in enumerate(model.factors, start=1):
        write_probabilities_csv(out_dir / f"leverage_mode{n}.csv", leverage_probabilities(A))
        write_probabilities_csv(out_dir / f"euclidean_mode{n}.csv", euclidean_probabilities(A))


def build_parser() -> argparse.ArgumentParser:
    seed = bench.default_seed()
    parser = argparse.ArgumentParser(
        prog="krpsgd",
        description="Mini-batch SGD with importance-sampled fibers for CP decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic high-leverage tensor")
    p.add_argument("--dims", type=int, nargs=3, metavar=("I", "I", "J"), required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--spread", type=int, default=15)
    p.add_argument("--magnitude", type=float, default=24.0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("decompose", help="run one decomposition")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--batch", type=int, default=18)
    p.add_argument("--sampler", choices=STRATEGIES, default="uniform")
    p.add_argument("--step", choices=("fixed", "adaptive"), default="adaptive")
    p.add_argument("--alpha0", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.6, help="Robbins-Monro exponent")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1e-6)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--cadence", type=int, default=1)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--init", help="initial model file (default: uniform [0, 1] factors)")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--no-timing", action="store_true", help="write 0 for seconds (byte-reproducible output)")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("bench", help="execute an experiment plan")
    p.add_argument("plan")
    p.add_argument("--out", default="bench-out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="base seed for entries without seeds")
    p.add_argument("--no-timing", action="store_true", help="write 0 for seconds (byte-reproducible output)")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("verify", help="run the oracle verification suite")
    p.add_argument("--only", nargs="+", metavar="CHECK")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--csv", help="also write the report as CSV")
    p.add_argument("--dump-probs", metavar="DIR", help="dump fixture probability vectors as index,weight CSVs")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FormatError, OSError, SolverError) as exc:
        print(f"krpsgd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
