"""Command line entry point: ``hetnet-alloc run|validate|dump-gains``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .channel import dump_gains_csv
from .config import load_config
from .experiment import (
    SCHEMES,
    ExperimentSpec,
    drop_gains,
    emit_csv,
    emit_summary_csv,
    emit_trace_csv,
    run_experiment,
    summarize,
)
from .model import validate_scenario

EXPERIMENTS = ("fig3", "fig4", "fig5", "fig6", "custom")


def _schemes(text: str) -> tuple[str, ...]:
    out = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in out if s not in SCHEMES]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown scheme(s) {bad}; choose from {', '.join(SCHEMES)}")
    return out


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetnet-alloc", description="Multiband relay HetNet resource allocation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment and write CSV results")
    run.add_argument("--config", help="scenario YAML (defaults to the experiment's preset)")
    run.add_argument("--experiment", choices=EXPERIMENTS, default="custom")
    run.add_argument("--schemes", type=_schemes, help="comma-separated subset of " + ",".join(SCHEMES))
    run.add_argument("--drops", type=_positive)
    run.add_argument("--seed", type=_u64)
    run.add_argument("--workers", type=_positive, default=1)
    run.add_argument("--out", required=True, help="results CSV; summary and trace go next to it")
    run.add_argument("--trace", action="store_true", help="also write the per-iteration solver trace")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--config", required=True)

    dump = sub.add_parser("dump-gains", help="write one drop's channel gains as CSV")
    dump.add_argument("--config", required=True)
    dump.add_argument("--drop", type=int, default=0)
    dump.add_argument("--seed", type=_u64)
    dump.add_argument("--out", required=True)
    return parser


def spec_from_args(args) -> ExperimentSpec:
    if args.experiment == "custom":
        if not args.config:
            raise SystemExit("--experiment custom needs --config")
        scenario, exp = load_config(args.config)
    else:
        scenario, exp = load_config(args.experiment)
        if args.config:
            scenario, own = load_config(args.config)
            exp = {**exp, **{k: v for k, v in own.items() if k in ("schemes", "drops")}}
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    schemes = args.schemes or tuple(exp.get("schemes", ("dual",)))
    return ExperimentSpec(
        scenario=scenario,
        schemes=tuple(schemes),
        sweep=exp.get("sweep", "none"),
        sweep_values=tuple(int(v) for v in exp.get("values", ())),
        drops=args.drops or int(exp.get("drops", 1)),
        workers=args.workers,
        trace=args.trace,
    )


def sibling(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}.{tag}{path.suffix or '.csv'}")


def cmd_run(args) -> int:
    spec = spec_from_args(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows, trace = run_experiment(spec, return_trace=True)
    emit_csv(rows, out)
    summary = summarize(rows)
    emit_summary_csv(summary, sibling(out, "summary"))
    if spec.trace:
        emit_trace_csv(trace, sibling(out, "trace"))
    print(f"{'scheme':<11} {spec.sweep:>20} {'n':>4} {'mean':>12} {'std':>12}")
    for s in summary:
        print(f"{s.scheme:<11} {s.sweep_value:>20} {s.n:>4} {s.mean:>12.6f} {s.std:>12.6f}")
    print(f"wrote {out}")
    return 0


def cmd_validate(args) -> int:
    scenario, _ = load_config(args.config)
    problems = validate_scenario(scenario)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 1 if problems else 0


def cmd_dump_gains(args) -> int:
    scenario, _ = load_config(args.config)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    dump_gains_csv(drop_gains(scenario, args.drop), args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": cmd_run, "validate": cmd_validate, "dump-gains": cmd_dump_gains}[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
