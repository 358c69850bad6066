#!/usr/bin/env python3
"""
Command line for the Lq solvers.

    python -m src.cli solve --algo psnp --q 0.5 --m 200 --n 800 --s 20
    python -m src.cli solve --data data/rcv1.svm --model svm --q 0
    python -m src.cli bench-cs --sweep s --values 10 20 40 --trials 20 --out results/cs.csv
    python -m src.cli bench-svm data/*.svm --out results/svm.csv
"""
import argparse
import logging
import os
import sys
from fractions import Fraction
from typing import Dict, List, Optional

from src.bench import (
    ALGORITHMS,
    DEFAULT_Q_VALUES,
    SWEEP_PARAMS,
    bench_cs,
    bench_svm,
    gen_classification,
    gen_cs,
    lambda_rule_cs,
    lambda_rule_svm,
    metrics,
    metrics_frame,
    read_libsvm,
    run_algorithm,
    scale_features,
    summarize_table,
    svm_grad_tol,
    table_problem,
    write_metrics_csv,
    write_trace,
)
from src.models.problems import ProblemKind
from src.solver import SolveOptions
from src.utils.config import load_settings

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def parse_q(text: str) -> float:
    """Accept decimals or fractions such as 2/3."""
    try:
        q = float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid q value: '{text}'")
    if not 0 <= q < 1:
        raise argparse.ArgumentTypeError(f"q must lie in [0, 1), got {text}")
    return q


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, default=None, help="Stopping tolerance on the on-support gradient")
    parser.add_argument("--max-iter", type=int, default=None, help="Iteration cap")
    parser.add_argument("--lambda", dest="lam", type=float, default=None, help="Penalty weight (overrides the lambda rule)")
    parser.add_argument("--seed", type=int, default=None, help="Seed of the (first) generated instance")
    parser.add_argument("--config", default=None, help="TOML settings file")
    parser.add_argument("--out", default=None, help="CSV file for the metric rows")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log per-iteration progress")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors")


def _add_instance(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--m", type=int, default=200, help="Number of measurements / samples")
    parser.add_argument("--n", type=int, default=800, help="Number of features")
    parser.add_argument("--s", type=int, default=20, help="Sparsity of the ground truth")
    parser.add_argument("--nf", type=float, default=0.0, help="Noise factor")
    parser.add_argument("--density", type=float, default=1.0, help="Fraction of nonzeros in A")
    parser.add_argument("--lambda-a", dest="lambda_a", type=float, default=None,
                        help="Constant a in lambda = a * ||A^T b||_inf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psnp",
        description="Sparse optimization with Lq penalties: PSNP and proximal-gradient baselines",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", help="Solve one generated instance or dataset")
    _add_common(solve)
    _add_instance(solve)
    solve.add_argument("--algo", choices=ALGORITHMS, default="psnp")
    solve.add_argument("--q", type=parse_q, default=0.0, help="Exponent in [0, 1), fractions allowed")
    solve.add_argument("--data", default=None, help="LIBSVM dataset (otherwise a CS instance is generated)")
    solve.add_argument("--model", choices=["svm", "logistic"], default="svm", help="Loss for --data or --synthetic")
    solve.add_argument("--synthetic", action="store_true",
                       help="Generate a classification dataset of size m x n instead of a CS instance")
    solve.add_argument("--mu", type=float, default=None, help="Ridge weight for svm/logistic (default: lambda)")
    solve.add_argument("--trace", default=None, help="CSV file for the per-iteration trace")

    cs = subparsers.add_parser("bench-cs", help="Compressed-sensing benchmark with median aggregation")
    _add_common(cs)
    _add_instance(cs)
    cs.add_argument("--algo", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    cs.add_argument("--q", nargs="+", type=parse_q, default=list(DEFAULT_Q_VALUES))
    cs.add_argument("--trials", type=int, default=None, help="Trials per cell")
    cs.add_argument("--sweep", choices=SWEEP_PARAMS, default=None, help="Parameter to vary")
    cs.add_argument("--values", nargs="+", type=float, default=None, help="Values of the swept parameter")
    cs.add_argument("--threads", type=int, default=None, help="Worker threads for the trials")

    svm = subparsers.add_parser("bench-svm", help="SVM benchmark on LIBSVM datasets")
    _add_common(svm)
    svm.add_argument("datasets", nargs="*", help="LIBSVM files")
    svm.add_argument("--algo", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    svm.add_argument("--q", nargs="+", type=parse_q, default=list(DEFAULT_Q_VALUES))
    svm.add_argument("--synthetic", nargs=3, type=int, metavar=("M", "N", "S"), default=None,
                     help="Use a generated dataset instead of files")
    svm.add_argument("--mu", type=float, default=None, help="Ridge weight (default: lambda)")
    return parser


def _solver_settings(settings: Dict, args: argparse.Namespace) -> Dict:
    solver = dict(settings["solver"])
    if args.max_iter is not None:
        solver["max_iter"] = args.max_iter
    return solver


def _emit(rows: List, out: Optional[str]) -> None:
    print(metrics_frame(rows).to_string(index=False))
    if out:
        write_metrics_csv(rows, out)


def run_solve(args: argparse.Namespace, settings: Dict) -> None:
    solver = _solver_settings(settings, args)
    seed = settings["bench"]["seed"] if args.seed is None else args.seed

    if args.data or args.synthetic:
        kind = ProblemKind(args.model)
        if args.data:
            table = read_libsvm(args.data)
        else:
            table, _ = gen_classification(args.m, args.n, args.s, seed, kind)
        table = scale_features(table)
        logger.info(f"Dataset summary: {summarize_table(table)}")
        if args.lam is None:
            lam, mu = lambda_rule_svm(table)
        else:
            lam, mu = args.lam, args.lam
        mu = mu if args.mu is None else args.mu
        m, n = table.shape
        problem = table_problem(table, kind, mu, solver["dense_threshold"])
        tol = args.tol if args.tol is not None else svm_grad_tol(m, n)
        target = table
    else:
        instance = gen_cs(args.m, args.n, args.s, args.nf, seed, args.density)
        lam = args.lam if args.lam is not None else lambda_rule_cs(instance.A, instance.b, args.q, args.lambda_a)
        problem = instance.problem(solver["dense_threshold"])
        tol = args.tol if args.tol is not None else 1e-6
        target = instance

    logger.info(f"Solving with {args.algo}: q={args.q:g} lambda={lam:.6g} tol={tol:.3g}")
    report = run_algorithm(problem, args.algo, SolveOptions(q=args.q, lam=lam, grad_tol=tol, **solver))
    _emit([metrics(report.x_final, report, target)], args.out)
    if args.trace:
        write_trace(report, args.trace)


def run_bench_cs(args: argparse.Namespace, settings: Dict) -> None:
    if args.sweep and not args.values:
        raise ValueError(f"--sweep {args.sweep} needs --values")
    rows = bench_cs(
        m=args.m,
        n=args.n,
        s=args.s,
        nf=args.nf,
        q_values=args.q,
        algos=args.algo,
        trials=settings["bench"]["trials"] if args.trials is None else args.trials,
        seed=settings["bench"]["seed"] if args.seed is None else args.seed,
        density=args.density,
        sweep=args.sweep,
        values=args.values,
        lambda_a=args.lambda_a,
        lam=args.lam,
        grad_tol=1e-6 if args.tol is None else args.tol,
        threads=settings["bench"]["threads"] if args.threads is None else args.threads,
        solver_settings=_solver_settings(settings, args),
    )
    _emit(rows, args.out or os.path.join("results", "bench_cs.csv"))


def run_bench_svm(args: argparse.Namespace, settings: Dict) -> None:
    if not args.datasets and args.synthetic is None:
        raise ValueError("bench-svm needs dataset files or --synthetic M N S")
    tables = [read_libsvm(path) for path in args.datasets]
    if args.synthetic is not None:
        m, n, s = args.synthetic
        seed = settings["bench"]["seed"] if args.seed is None else args.seed
        tables.append(gen_classification(m, n, s, seed)[0])
    rows = bench_svm(
        tables,
        q_values=args.q,
        algos=args.algo,
        lam=args.lam,
        grad_tol=args.tol,
        solver_settings=_solver_settings(settings, args),
        mu=args.mu,
    )
    _emit(rows, args.out or os.path.join("results", "bench_svm.csv"))


COMMANDS = {
    "solve": run_solve,
    "bench-cs": run_bench_cs,
    "bench-svm": run_bench_svm,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and return an exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        settings = load_settings(args.config)
    except (FileNotFoundError, ValueError) as e:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
        logger.error(f"Invalid configuration: {e}")
        return 1

    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = getattr(logging, settings["logging"]["level"], logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        COMMANDS[args.command](args, settings)
        return 0
    except FileNotFoundError as e:
        logger.error(str(e))
        return 1
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return 1
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}", exc_info=True)
        return 1


cli = main


if __name__ == "__main__":
    sys.exit(main())
