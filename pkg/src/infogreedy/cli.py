"""Command-line entry point: ``infogreedy run | budget | sparse-design``.

Exit codes: 0 success, 2 configuration or argument error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConfigError, DataError, InfoGreedyError
from .gaussian import ColoredBefore, WhiteAfter, WhiteBefore, measurement_budget, stopping_threshold
from .harness.config import load_config
from .harness.data import load_csv_series
from .harness.experiments import run_experiment
from .sparse_design import sparse_direction

_MODELS = {
    "white-after": lambda s: WhiteAfter(s),
    "white-before": lambda s: WhiteBefore(s),
    # with only a spectrum available, the noise covariance enters through its norm sigma^2
    "colored-before": lambda s: ColoredBefore(np.array([[s * s]])),
}


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None or args.trials is not None:
        cfg = cfg.replace(seed=args.seed, trials=args.trials)
    out = args.out or os.path.join("results", os.path.splitext(os.path.basename(args.config))[0])
    outcome = run_experiment(cfg, out)
    print(json.dumps(outcome.summary, indent=2, sort_keys=True))
    print(f"wrote results to {out}", file=sys.stderr)
    return 0


def _cmd_budget(args) -> int:
    if args.sigma < 0 or (args.model == "colored-before" and args.sigma == 0):
        raise ConfigError("sigma must be positive (nonnegative for white noise)")
    spectrum = load_csv_series(args.spectrum).ravel()
    noise = _MODELS[args.model](args.sigma)
    n = args.dim or spectrum.size
    budget = measurement_budget(spectrum, noise, args.eps, args.p, dim=n)
    unit = "power" if args.model == "white-after" and args.sigma > 0 else "measurements"
    print(f"model: {args.model}")
    print(f"dimension: {n}")
    print(f"threshold: {stopping_threshold(args.eps, args.p, n):.10g}")
    print(f"budget ({unit}): {budget:.10g}")
    return 0


def _cmd_sparse(args) -> int:
    cov = load_csv_series(args.cov)
    if cov.shape[0] != cov.shape[1]:
        raise DataError(f"covariance must be square, got {cov.shape[0]}x{cov.shape[1]}", path=args.cov)
    res = sparse_direction(cov, args.sigma, args.k0, tol=args.tol, max_iter=args.max_iter)
    np.set_printoptions(precision=10, suppress=True)
    print("direction: " + ",".join(f"{v:.10g}" for v in res.direction))
    print(f"objective: {res.objective:.10g}")
    print(f"gap: {res.gap:.3e}")
    print(f"certified: {str(res.certified).lower()}")
    print(f"iterations: {res.iterations}")
    print(f"upper_bound: {res.upper_bound:.10g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infogreedy", description="Info-Greedy adaptive sensing")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default results/<config name>)")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.set_defaults(func=_cmd_run)

    budget = sub.add_parser("budget", help="measurement budget for a covariance spectrum")
    budget.add_argument("--model", required=True, choices=sorted(_MODELS))
    budget.add_argument("--spectrum", required=True, help="CSV of eigenvalues")
    budget.add_argument("--eps", type=float, required=True)
    budget.add_argument("--p", type=float, required=True)
    budget.add_argument("--sigma", type=float, required=True)
    budget.add_argument("--dim", type=int, help="ambient dimension (default: spectrum length)")
    budget.set_defaults(func=_cmd_budget)

    sparse = sub.add_parser("sparse-design", help="sparse Info-Greedy direction for a covariance")
    sparse.add_argument("--cov", required=True, help="CSV covariance matrix")
    sparse.add_argument("--k0", type=int, required=True)
    sparse.add_argument("--sigma", type=float, required=True)
    sparse.add_argument("--tol", type=float, default=1e-6)
    sparse.add_argument("--max-iter", type=int, default=100)
    sparse.set_defaults(func=_cmd_sparse)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfoGreedyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
