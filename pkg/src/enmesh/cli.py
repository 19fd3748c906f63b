"""``enmesh`` command line: generate, run, sweep, oracle."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from .bench import run_experiment, run_opt, run_sharded, sweep, write_csv
from .engine import ALGORITHMS, BEST_EFFORT, Engine, EngineConfig, SoundnessError
from .oracle import DEFAULT_EXHAUSTIVE_CAP, offline_optimal_exhaustive
from .traceio import read_trace, write_trace
from .workload import WorkloadConfig, generate_figure1_family, generate_trace

log = logging.getLogger("enmesh")

SEED_ENV = "ENMESH_SEED"


def _seed(value: int | None) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return 0 if value is None else value


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    d = WorkloadConfig()
    p.add_argument("--queries", type=int, default=d.num_queries)
    p.add_argument("--users", type=int, default=d.num_users)
    p.add_argument("--group-interval", type=int, default=d.group_interval)
    p.add_argument("--weekend-weight", type=int, default=d.weekend_weight)
    p.add_argument("--desk", action="store_true", help="100k queries, 20k users, interval 2000")
    p.add_argument("--seed", type=int, default=None, help=f"overridden by ${SEED_ENV}")


def _workload(args) -> WorkloadConfig:
    seed = _seed(args.seed)
    if args.desk:
        return WorkloadConfig.desk(seed=seed)
    return WorkloadConfig(
        num_queries=args.queries,
        num_users=args.users,
        group_interval=args.group_interval,
        weekend_weight=args.weekend_weight,
        seed=seed,
    )


def _engine_config(args, seed: int) -> EngineConfig:
    return EngineConfig(
        algorithm=args.algorithm,
        delay=args.delay,
        seed=seed,
        matchability_c=args.c,
        early_pick=args.early_pick,
    )


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algorithm", "-a", choices=ALGORITHMS + ("OPT",), default="NES")
    p.add_argument("--delay", "--tau", type=float, default=0.0, help="DELAY threshold in queries")
    p.add_argument("--c", type=float, default=12.0, help="matchability constant")
    p.add_argument("--early-pick", choices=("largest", "smallest"), default="largest")


def cmd_generate(args) -> int:
    cfg = _workload(args)
    trace = generate_trace(cfg)
    checksum = write_trace(trace, args.output)
    print(f"wrote {len(trace)} queries, {len(trace.users)} users to {args.output} (checksum {checksum[:16]})")
    return 0


def _load(args):
    if args.trace:
        return read_trace(args.trace)
    return generate_trace(_workload(args))


def cmd_run(args) -> int:
    trace = _load(args)
    seed = _seed(args.seed)
    if args.algorithm == "OPT":
        report = run_opt(trace)
    else:
        cfg = _engine_config(args, seed)
        report = run_sharded(trace, cfg, args.shards) if args.shards > 1 else run_experiment(trace, cfg)
    text = write_csv([report], args.csv, timing=not args.no_timing)
    sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    wl = _workload(args)
    seed = _seed(args.seed)
    cfg = _engine_config(args, seed)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    reports = sweep(args.param, values, wl, cfg)
    sys.stdout.write(write_csv(reports, args.csv, timing=not args.no_timing))
    return 0


def cmd_oracle(args) -> int:
    trace = generate_figure1_family(args.k)
    best = offline_optimal_exhaustive(trace.queries, trace.users, cap=args.cap)
    print(f"hub family k={args.k}: {len(trace)} queries")
    print(f"  offline optimum: {best.committed_queries} committed in {len(best.committed_groups)} groups")
    for g in best.committed_groups:
        print(f"    {g.members}")
    worst = None
    for alg in BEST_EFFORT:
        eng = Engine(EngineConfig(alg, seed=_seed(args.seed)), trace.users, trace.attributes, trace.indexed)
        n = sum(len(g) for g in eng.run(trace.queries))
        worst = n if worst is None else min(worst, n)
        print(f"  {alg}: {n} committed")
    if worst:
        print(f"  ratio: {best.committed_queries / worst:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enmesh", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic trace")
    _add_workload_flags(p)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run one algorithm over a trace")
    p.add_argument("--trace", "-t", help="trace file; generated from workload flags when omitted")
    _add_workload_flags(p)
    _add_engine_flags(p)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--csv")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary group_interval or the DELAY threshold")
    p.add_argument("--param", choices=("group_interval", "delay"), required=True)
    p.add_argument("--values", required=True, help="comma-separated")
    _add_workload_flags(p)
    _add_engine_flags(p)
    p.add_argument("--csv")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="competitive-ratio witness on the adversarial family")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--cap", type=int, default=DEFAULT_EXHAUSTIVE_CAP)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except SoundnessError as exc:
        log.error("verification failed: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
