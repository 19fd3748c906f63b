"""Experiment harness: run engines over traces and summarise the outcome."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .engine import Engine, EngineConfig, SoundnessError
from .model import CommittedGroup, verify_committable
from .oracle import opt_yardstick_scan
from .workload import WorkloadConfig, WorkloadTrace, generate_trace

__all__ = [
    "MetricsReport",
    "RunResult",
    "run_engine",
    "run_experiment",
    "run_opt",
    "run_sharded",
    "sweep",
    "write_csv",
    "CSV_FIELDS",
    "TIMING_FIELDS",
]

log = logging.getLogger(__name__)

CSV_FIELDS = (
    "algorithm",
    "seed",
    "group_interval",
    "delay",
    "match_pct",
    "mean_lat",
    "med_lat",
    "p90_lat",
    "avg_group",
    "avg_us",
)
TIMING_FIELDS = ("avg_us",)


@dataclass
class MetricsReport:
    algorithm: str
    seed: int | None
    group_interval: int | None
    delay: float
    match_pct: float
    avg_processing_us: float
    mean_lat: float
    med_lat: float
    p90_lat: float
    avg_group_size: float
    committed: int
    pending: int
    total: int
    groups: int
    config_digest: str | None = None

    def row(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "group_interval": self.group_interval,
            "delay": f"{self.delay:g}",
            "match_pct": f"{self.match_pct:.6f}",
            "mean_lat": f"{self.mean_lat:.3f}",
            "med_lat": f"{self.med_lat:.1f}",
            "p90_lat": f"{self.p90_lat:.1f}",
            "avg_group": f"{self.avg_group_size:.6f}",
            "avg_us": f"{self.avg_processing_us:.3f}",
        }


@dataclass
class RunResult:
    groups: list[CommittedGroup]
    pending: int
    elapsed_ns: int
    calls: int


def run_engine(trace: WorkloadTrace, config: EngineConfig, queries: Sequence | None = None) -> RunResult:
    """Feed arrivals in order, then drain deferred reevaluations.

    Each emitted group is re-verified independently and checked for
    overlap with earlier groups; any failure raises :class:`SoundnessError`.
    """
    engine = Engine(
        dataclasses.replace(config, verify=False), trace.users, trace.attributes, trace.indexed
    )
    queries = trace.queries if queries is None else queries
    by_id = {q.query_id: q for q in queries}
    seen: set = set()
    groups: list[CommittedGroup] = []
    elapsed = 0
    clock = time.perf_counter_ns
    step = engine.step

    def check(batch: list[CommittedGroup]) -> None:
        for g in batch:
            members = [by_id[m] for m in g.members]
            if seen.intersection(g.members) or not verify_committable(members, g.witness, trace.users):
                raise SoundnessError(g)
            seen.update(g.members)
            groups.append(g)

    for q in queries:
        t0 = clock()
        batch = step(q)
        elapsed += clock() - t0
        if batch:
            check(batch)
    t0 = clock()
    batch = engine.flush()
    elapsed += clock() - t0
    check(batch)
    return RunResult(groups, len(engine.pending), elapsed, len(queries))


def _summarise(
    label: str,
    trace: WorkloadTrace,
    groups: Iterable[CommittedGroup],
    pending: int,
    elapsed_ns: int,
    calls: int,
    delay: float,
    seed: int | None,
) -> MetricsReport:
    arrival = {q.query_id: q.arrival_time for q in trace.queries}
    groups = list(groups)
    lat = np.array(
        [g.committed_at_index - arrival[m] for g in groups for m in g.members], dtype=np.float64
    )
    committed = int(lat.size)
    total = len(trace.queries)
    if committed + pending != total:
        raise AssertionError(f"accounting: {committed} committed + {pending} pending != {total}")
    cfg = trace.config
    return MetricsReport(
        algorithm=label,
        seed=seed,
        group_interval=cfg.group_interval if cfg else None,
        delay=delay,
        match_pct=committed / total if total else 0.0,
        avg_processing_us=elapsed_ns / calls / 1000 if calls else 0.0,
        mean_lat=float(lat.mean()) if committed else 0.0,
        med_lat=float(np.median(lat)) if committed else 0.0,
        p90_lat=float(np.percentile(lat, 90)) if committed else 0.0,
        avg_group_size=committed / len(groups) if groups else 0.0,
        committed=committed,
        pending=pending,
        total=total,
        groups=len(groups),
        config_digest=cfg.digest() if cfg else None,
    )


def run_experiment(trace: WorkloadTrace, config: EngineConfig) -> MetricsReport:
    res = run_engine(trace, config)
    delay = config.delay if config.algorithm == "DELAY" else 0.0
    return _summarise(config.algorithm, trace, res.groups, res.pending, res.elapsed_ns, res.calls, delay, config.seed)


def run_opt(trace: WorkloadTrace) -> MetricsReport:
    t0 = time.perf_counter_ns()
    res = opt_yardstick_scan(trace)
    elapsed = time.perf_counter_ns() - t0
    pending = len(trace.queries) - res.committed_queries
    return _summarise("OPT", trace, res.committed_groups, pending, elapsed, len(trace.queries), 0.0, trace.seed)


def _shard_worker(args):
    trace, config, ids = args
    wanted = set(ids)
    queries = [q for q in trace.queries if q.query_id in wanted]
    return run_engine(trace, config, queries)


def run_sharded(trace: WorkloadTrace, config: EngineConfig, shards: int, workers: int | None = None) -> MetricsReport:
    """Independent engines over home-cell partitions, merged into one report.

    Queries whose extra location lies in another shard cannot meet that
    shard's queries, so the merged match rate can sit below a single engine's.
    """
    if shards < 1:
        raise ValueError("shards must be positive")
    cols = trace.config.grid_cols if trace.config else 10
    parts: list[list] = [[] for _ in range(shards)]
    for q in trace.queries:
        home = trace.users[q.user].home_location
        cell = home[0] * cols + home[1] if home is not None else 0
        parts[cell % shards].append(q.query_id)
    jobs = [(trace, config, ids) for ids in parts if ids]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_shard_worker, jobs))
    else:
        results = [_shard_worker(j) for j in jobs]
    groups = [g for r in results for g in r.groups]
    delay = config.delay if config.algorithm == "DELAY" else 0.0
    return _summarise(
        f"{config.algorithm}x{shards}",
        trace,
        groups,
        sum(r.pending for r in results),
        sum(r.elapsed_ns for r in results),
        sum(r.calls for r in results),
        delay,
        config.seed,
    )


def sweep(
    param: str,
    values: Sequence[float],
    workload: WorkloadConfig,
    engine: EngineConfig,
    trace: WorkloadTrace | None = None,
) -> list[MetricsReport]:
    """One report per value of ``group_interval`` (trace regenerated) or ``delay``."""
    if not values:
        raise ValueError("sweep needs at least one value")
    reports = []
    if param == "group_interval":
        for v in values:
            t = generate_trace(dataclasses.replace(workload, group_interval=int(v)))
            reports.append(run_experiment(t, engine))
    elif param == "delay":
        t = trace if trace is not None else generate_trace(workload)
        for v in values:
            reports.append(run_experiment(t, dataclasses.replace(engine, algorithm="DELAY", delay=float(v))))
    else:
        raise ValueError(f"cannot sweep {param!r}; use group_interval or delay")
    return reports


def write_csv(reports: Iterable[MetricsReport], path=None, timing: bool = True) -> str:
    """CSV text for ``reports``; also written to ``path`` when given."""
    fields = [f for f in CSV_FIELDS if timing or f not in TIMING_FIELDS]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
