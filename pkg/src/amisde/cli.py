"""Command-line harness.

Subcommands: run | fig2 | fig3 | timing | counterexample.  Exit codes:
0 success, 1 runtime failure, 2 invalid configuration.  The environment
variable AMIS_SEED provides the default seed base.
"""

import argparse
import os
import sys

from .bench import (
    ExperimentConfig,
    run_counterexample,
    run_experiment,
    run_fig2,
    run_fig3,
    run_timing,
    write_rows,
)
from .errors import AmisError, ConfigurationError


def _seed_base(args) -> int:
    if getattr(args, "seed_base", None) is not None:
        return args.seed_base
    return int(os.environ.get("AMIS_SEED", "0"))


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="amisde-bench",
        description="Adaptive multiple importance sampling benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs_default=100):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--runs", type=int, default=runs_default)
        p.add_argument("--seed-base", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seeds", default=None, help="comma-separated seed list override")
    p_run.add_argument("--runs", type=int, default=None, help="override run count")
    p_run.add_argument("--seed-base", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)

    p_fig2 = sub.add_parser("fig2", help="ESS growth, four schemes, g = 1")
    common(p_fig2)
    p_fig2.add_argument("--iterations", type=int, default=300)
    p_fig2.add_argument(
        "--include-flat",
        action="store_true",
        help="add the high-variance flat scheme excluded from the default figure",
    )

    p_fig3 = sub.add_parser("fig3", help="balance vs optimized discard, g = (1, x)")
    common(p_fig3)
    p_fig3.add_argument("--iterations", type=int, default=60)
    p_fig3.add_argument("--batch", type=int, default=25)

    p_timing = sub.add_parser("timing", help="wall-time scaling at fixed N = 200")
    common(p_timing)

    p_counter = sub.add_parser(
        "counterexample", help="inconsistent proposal sequence demonstration"
    )
    common(p_counter)
    p_counter.add_argument("--iterations", type=int, default=100)

    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        if args.command == "run":
            config = ExperimentConfig.from_json_file(args.config)
            if args.seeds is not None:
                config.seeds = [int(s) for s in args.seeds.split(",") if s]
                if not config.seeds:
                    raise ConfigurationError("empty --seeds list")
            elif args.runs is not None:
                base = _seed_base(args)
                config.seeds = [base + i for i in range(args.runs)]
            out_dir = args.out or "."
            os.makedirs(out_dir, exist_ok=True)
            rows, _ = run_experiment(config, threads=args.threads)
            out_name = config.output or f"{config.experiment}.csv"
            write_rows(os.path.join(out_dir, out_name), rows)
        elif args.command == "fig2":
            run_fig2(
                args.out, runs=args.runs, iterations=args.iterations,
                seed_base=_seed_base(args), threads=args.threads,
                include_flat=args.include_flat,
            )
        elif args.command == "fig3":
            run_fig3(
                args.out, runs=args.runs, iterations=args.iterations,
                batch=args.batch, seed_base=_seed_base(args), threads=args.threads,
            )
        elif args.command == "timing":
            run_timing(args.out, runs=args.runs, seed_base=_seed_base(args))
        elif args.command == "counterexample":
            run_counterexample(
                args.out, runs=args.runs, iterations=args.iterations,
                seed_base=_seed_base(args), threads=args.threads,
            )
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except AmisError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
