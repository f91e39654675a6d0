"""Command line: ``run``, ``sweep``, ``plan`` and ``bench``.

Exit codes: 0 success, 1 invalid input, 2 divergence, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from .bench import run_bench
from .config import parse_config
from .errors import MkvError
from .estimators import ALGORITHMS
from .experiment import SWEEP_AXES, run_experiment, run_sweep, write_sweep
from .planner import CONSTANT, HARMONIC, plan


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.output:
        cfg = cfg.with_values(**{"execution.output": args.output})
    run_experiment(cfg, workers=args.workers, write=True)
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    if args.output:
        cfg = cfg.with_values(**{"execution.output": args.output})
    sweep = run_sweep(cfg, args.axis, args.values, metric=args.metric, workers=args.workers)
    write_sweep(cfg, sweep)
    return 0


def _cmd_plan(args) -> int:
    p = plan(args.algorithm, args.epsilon, args.lam, cost_constant=args.cost_constant, variant=args.variant)
    print(json.dumps(p.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_bench(args) -> int:
    return 0 if run_bench(quick=args.quick) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergodic-mkv", description="Ergodic estimators for McKean-Vlasov SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the replications of a configuration")
    run.add_argument("config")
    run.add_argument("--output", help="CSV path (overrides [execution] output)")
    run.add_argument("--workers", type=int, help="worker processes (default: config or MKV_WORKERS)")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="vary one parameter and fit a rate")
    sweep.add_argument("config")
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, type=float, nargs="+")
    sweep.add_argument("--metric", choices=("bias", "mse"), default="bias")
    sweep.add_argument("--output")
    sweep.add_argument("--workers", type=int)
    sweep.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("plan", help="parameters for a target tolerance (JSON)")
    pl.add_argument("--algorithm", required=True, type=str.upper, choices=ALGORITHMS)
    pl.add_argument("--epsilon", required=True, type=float)
    pl.add_argument("--lambda", dest="lam", type=float, default=1.0)
    pl.add_argument("--cost-constant", type=float, default=1.0)
    pl.add_argument("--variant", choices=(HARMONIC, CONSTANT), default=HARMONIC)
    pl.set_defaults(func=_cmd_plan)

    bench = sub.add_parser("bench", help="acceptance checks as CSV")
    bench.add_argument("--quick", action="store_true", help="only the fast checks")
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MkvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
