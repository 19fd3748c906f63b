"""Ground-truth references.

* :func:`optimal_best_effort_nojoins` decides, in ``O(|Q| * |P|)``, whether
  some committable group contains a new query when nobody has join
  constraints (segment scan over cardinality breakpoints).
* :func:`offline_optimal_exhaustive` solves the offline problem exactly by
  enumerating every subset; only usable for a handful of queries.
* :func:`opt_yardstick_scan` replays the pre-matched group annotations of a
  generated trace.
"""

from __future__ import annotations

import itertools
import statistics
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import _kernels
from .model import (
    CommittedGroup,
    ContractViolation,
    EnmeshedQuery,
    UserProfile,
    pair_match,
    satisfies,
    value_order,
    verify_committable,
    witness_points,
)

__all__ = [
    "OracleResult",
    "segment_group",
    "optimal_best_effort_nojoins",
    "SubsetTable",
    "offline_optimal_exhaustive",
    "exists_group_containing",
    "opt_yardstick_scan",
    "DEFAULT_EXHAUSTIVE_CAP",
]

DEFAULT_EXHAUSTIVE_CAP = 16


@dataclass
class OracleResult:
    committed_queries: int
    committed_groups: list[CommittedGroup]
    per_query_latency: dict[Any, int] = field(default_factory=dict)

    @property
    def avg_group_size(self) -> float:
        if not self.committed_groups:
            return 0.0
        return statistics.fmean(len(g) for g in self.committed_groups)


def _no_join_users(queries) -> dict:
    return {q.user: UserProfile(q.user) for q in queries}


def segment_group(candidates: Sequence[EnmeshedQuery], q: EnmeshedQuery) -> list[EnmeshedQuery] | None:
    """Committable group containing ``q`` among ``candidates`` (all sharing a
    witness, no joins), or None.

    The sizes allowed by ``q`` are cut at every lower bound and every
    ``ub + 1`` of the candidates.  Inside one elementary segment the set of
    queries allowing a size is constant, so the segment is feasible iff that
    set is at least as large as the segment's smallest size.
    """
    lo, hi = q.cardinality.lb, q.cardinality.ub
    others = [c for c in candidates if c.query_id != q.query_id]
    cuts = {lo, hi + 1}
    for c in others:
        for b in (c.cardinality.lb, c.cardinality.ub + 1):
            if lo < b <= hi:
                cuts.add(b)
    cuts = sorted(cuts)
    for start, stop in zip(cuts, cuts[1:]):
        allowing = [c for c in others if start in c.cardinality]
        total = len(allowing) + 1
        if total >= start:
            size = min(total, stop - 1)
            return [q] + allowing[: size - 1]
    return None


def optimal_best_effort_nojoins(
    pending: Sequence[EnmeshedQuery], q: EnmeshedQuery, return_group: bool = False
):
    """True iff some committable group containing ``q`` exists (no joins allowed).

    With ``return_group`` the result is ``(group, witness)`` or None.
    """
    if q.joins or any(x.joins for x in pending):
        raise ContractViolation("join constraints make this decision NP-hard; use the exhaustive oracle")
    for p in witness_points(q):
        s_p = [x for x in pending if x.query_id != q.query_id and satisfies(x, p)]
        group = segment_group(s_p, q)
        if group is not None:
            return (group, p) if return_group else True
    return None if return_group else False


class SubsetTable:
    """Committability of every subset of a small query list (bit i = queries[i])."""

    def __init__(
        self,
        queries: Sequence[EnmeshedQuery],
        users: Mapping[Any, UserProfile] | None = None,
        backend: str | None = None,
    ):
        self.queries = list(queries)
        self.users = users if users is not None else _no_join_users(self.queries)
        self.backend = backend
        n = len(self.queries)
        self.n = n
        lb = [q.cardinality.lb for q in self.queries]
        ub = [q.cardinality.ub for q in self.queries]
        compat = [1 << i for i in range(n)]
        for i, j in itertools.combinations(range(n), 2):
            a, b = self.queries[i], self.queries[j]
            if pair_match(a, b, self.users[a.user], self.users[b.user]):
                compat[i] |= 1 << j
                compat[j] |= 1 << i
        points: dict[tuple, dict] = {}
        for q in self.queries:
            for p in witness_points(q):
                points.setdefault(tuple(sorted(p.items(), key=lambda kv: kv[0])), p)
        self.points = list(points.values())
        sat = []
        for p in self.points:
            m = 0
            for i, q in enumerate(self.queries):
                if satisfies(q, p):
                    m |= 1 << i
            sat.append(m)
        self.sat = sat
        self.ok = (
            _kernels.committable_subsets(lb, ub, compat, sat or [0], backend)
            if n
            else np.zeros(1, dtype=np.uint8)
        )

    def members(self, mask: int) -> list[EnmeshedQuery]:
        return [q for i, q in enumerate(self.queries) if mask >> i & 1]

    def witness(self, mask: int) -> dict:
        for p, s in zip(self.points, self.sat):
            if mask & ~s == 0:
                return p
        raise ValueError(f"mask {mask:b} has no witness")

    def any_containing(self, index: int) -> bool:
        idx = np.nonzero(self.ok)[0]
        return bool(np.any((idx >> index) & 1))


def exists_group_containing(
    pending: Sequence[EnmeshedQuery],
    q: EnmeshedQuery,
    users: Mapping[Any, UserProfile] | None = None,
    backend: str | None = None,
) -> bool:
    """Brute force: is there a committable subset of ``pending + [q]`` containing ``q``?"""
    queries = [x for x in pending if x.query_id != q.query_id] + [q]
    table = SubsetTable(queries, users, backend)
    return table.any_containing(len(queries) - 1)


def offline_optimal_exhaustive(
    queries: Sequence[EnmeshedQuery],
    users: Mapping[Any, UserProfile] | None = None,
    objective: str = "max_queries",
    cap: int = DEFAULT_EXHAUSTIVE_CAP,
    backend: str | None = None,
) -> OracleResult:
    """Exact offline optimum by subset enumeration plus a packing DP."""
    if objective not in ("max_queries", "max_groups"):
        raise ValueError(f"unknown objective {objective!r}")
    queries = sorted(queries, key=lambda q: q.arrival_index)
    if len(queries) > cap:
        raise ContractViolation(f"{len(queries)} queries exceeds the exhaustive cap of {cap}")
    if not queries:
        return OracleResult(0, [])
    table = SubsetTable(queries, users, backend)
    value, choice = _kernels.best_packing(table.ok, table.n, objective == "max_queries", backend)
    groups = []
    mask = (1 << table.n) - 1
    while mask:
        low = mask & -mask
        g = int(choice[mask])
        if g:
            members = table.members(g)
            last = max(m.arrival_index for m in members)
            groups.append(
                CommittedGroup(tuple(m.query_id for m in members), table.witness(g), last)
            )
            mask ^= g
        else:
            mask ^= low
    latency = {}
    for g in groups:
        for qid in g.members:
            latency[qid] = g.committed_at_index - next(
                q.arrival_index for q in queries if q.query_id == qid
            )
    for g in groups:
        assert verify_committable(
            [q for q in queries if q.query_id in g.members], g.witness, table.users
        ), g
    return OracleResult(sum(len(g) for g in groups), groups, latency)


def opt_yardstick_scan(trace) -> OracleResult:
    """Commit each pre-matched group when its last member arrives."""
    if trace.groups is None or len(trace.groups) != len(trace.queries):
        raise ContractViolation("trace lacks pre-matched group annotations")
    members: dict[Any, list[EnmeshedQuery]] = {}
    sizes: dict[Any, int] = {}
    groups = []
    latency = {}
    for q, (gid, gsize) in zip(trace.queries, trace.groups):
        lst = members.setdefault(gid, [])
        lst.append(q)
        sizes[gid] = gsize
        if len(lst) == gsize:
            now = q.arrival_index
            witness = _common_point(lst)
            groups.append(CommittedGroup(tuple(m.query_id for m in lst), witness, now))
            for m in lst:
                latency[m.query_id] = now - m.arrival_index
    return OracleResult(len(latency), groups, latency)


def _common_point(queries: Sequence[EnmeshedQuery]) -> dict:
    point = {}
    for attr in queries[0].selections:
        common = set(queries[0].selections[attr])
        for q in queries[1:]:
            common &= q.selections[attr]
        if not common:
            return {}
        point[attr] = min(common, key=value_order)
    return point
