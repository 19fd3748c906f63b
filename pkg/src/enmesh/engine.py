"""Online group matching: BMA, NES, LMF, HMF and DELAY.

Every algorithm follows the same skeleton.  For each witness point of the
arriving query (seeded-random order) the pending candidates are looked up
in the :class:`~enmesh.index.Pindex`, filtered on the non-indexed
attributes, and greedily admitted into a pairwise-matching set.  The modes
differ in traversal order, in whether the first feasible group is taken,
and in whether matching is postponed while the candidates are still young.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .index import Cindex, Pindex
from .model import (
    CommittedGroup,
    ContractViolation,
    EnmeshedQuery,
    UserProfile,
    compile_joins,
    value_order,
    verify_committable,
)

__all__ = [
    "ALGORITHMS",
    "BEST_EFFORT",
    "EngineConfig",
    "DelayWheel",
    "Engine",
    "SoundnessError",
    "matchability_init",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("BMA", "NES", "LMF", "HMF", "DELAY")
BEST_EFFORT = ("BMA", "NES", "LMF", "HMF")

WORKLOAD_ATTRIBUTES = ("location", "time", "sport")


class SoundnessError(RuntimeError):
    """An emitted group failed independent verification."""

    def __init__(self, group: CommittedGroup):
        super().__init__(f"group {group.members} at {dict(group.witness)} is not committable")
        self.group = group


def matchability_init(lb: int, ub: int, c: float = 12.0) -> float:
    """Starting matchability: number of admissible sizes plus ``c / lb``."""
    return (ub - lb + 1) + c / lb


@dataclass(frozen=True)
class EngineConfig:
    algorithm: str = "NES"
    delay: float = 0.0
    seed: int = 0
    matchability_c: float = 12.0
    max_group_size: int = 12
    verify: bool = True
    early_pick: str = "largest"

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; pick one of {ALGORITHMS}")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")

    @property
    def early_stop(self) -> bool:
        # DELAY always scans the whole candidate set
        return self.algorithm in ("BMA", "LMF", "HMF")

    @property
    def order(self) -> str:
        return {"LMF": "LMF", "HMF": "HMF"}.get(self.algorithm, "random")


class DelayWheel:
    """Logical-time scheduler for deferred reevaluation.

    ``buckets`` maps a due time to the ids due then; a heap of due times
    gives the next bucket.  Each id may be scheduled once.
    """

    def __init__(self) -> None:
        self.buckets: dict[float, list] = {}
        self.reeval_count: dict[Any, int] = {}
        self._due: list[float] = []

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def schedule(self, query_id: Any, due: float) -> None:
        if self.reeval_count.get(query_id, 0):
            raise ContractViolation(f"query {query_id} already deferred once")
        self.reeval_count[query_id] = 1
        bucket = self.buckets.get(due)
        if bucket is None:
            self.buckets[due] = [query_id]
            heapq.heappush(self._due, due)
        else:
            bucket.append(query_id)

    def next_due(self) -> float | None:
        return self._due[0] if self._due else None

    def pop_due(self, now: float) -> list[tuple[float, Any]]:
        """Remove and return ``(due, id)`` for everything due at or before ``now``."""
        out = []
        while self._due and self._due[0] <= now:
            due = heapq.heappop(self._due)
            out.extend((due, qid) for qid in self.buckets.pop(due))
        return out


@dataclass(eq=False)
class _Entry:
    query: EnmeshedQuery
    user: UserProfile
    accept: Any
    matchability: float
    sel: tuple  # selection sets aligned with the engine's attribute order
    points: list = field(default_factory=list)

    @property
    def qid(self) -> Any:
        return self.query.query_id


class Engine:
    """One matching engine instance: a single writer fed arrivals in order.

    ``users`` maps user ids to profiles; ``attributes`` fixes the order of
    coordination attributes in witness points and ``indexed`` picks the
    Pindex key attributes.
    """

    def __init__(
        self,
        config: EngineConfig,
        users: Mapping[Any, UserProfile],
        attributes: Sequence[str] = WORKLOAD_ATTRIBUTES,
        indexed: Sequence[str] = ("location", "time"),
        domains: Mapping[str, frozenset] | None = None,
    ):
        self.config = config
        self.users = users
        self.attributes = tuple(attributes)
        self.pindex = Pindex(indexed, domains)
        self._key_pos = tuple(self.attributes.index(a) for a in self.pindex.indexed_attributes)
        self._check_pos = tuple(i for i in range(len(self.attributes)) if i not in self._key_pos)
        self.pending: dict[Any, _Entry] = {}
        self.wheel = DelayWheel()
        self.rng = random.Random(config.seed)
        self.committed: set = set()
        self.groups: list[CommittedGroup] = []
        self.evaluations = 0
        self.reevaluations = 0
        self.deferrals = 0
        self._now: float = float("-inf")

    # -- bookkeeping ---------------------------------------------------

    @property
    def matchability(self) -> dict[Any, float]:
        return {qid: e.matchability for qid, e in self.pending.items()}

    def _entry(self, q: EnmeshedQuery) -> _Entry:
        try:
            user = self.users[q.user]
        except KeyError:
            raise ContractViolation(f"query {q.query_id}: user {q.user!r} not registered")
        if set(q.selections) != set(self.attributes):
            raise ContractViolation(
                f"query {q.query_id} constrains {sorted(q.selections)}, engine expects {list(self.attributes)}"
            )
        if q.cardinality.lb > self.config.max_group_size:
            raise ContractViolation(f"query {q.query_id}: lower bound above max group size")
        sel = tuple(q.selections[a] for a in self.attributes)
        points = list(itertools.product(*(sorted(s, key=value_order) for s in sel)))
        return _Entry(
            query=q,
            user=user,
            accept=compile_joins(q, user),
            matchability=matchability_init(q.cardinality.lb, q.cardinality.ub, self.config.matchability_c),
            sel=sel,
            points=points,
        )

    def point_dict(self, p: tuple) -> dict:
        return dict(zip(self.attributes, p))

    # -- the matching steps -------------------------------------------

    def build_cqs(self, entry: _Entry, p: tuple) -> list[_Entry]:
        """Pending queries fully satisfied by ``p``, excluding ``entry``.

        Each returned candidate's matchability goes up by one.
        """
        bucket = self.pindex.postings.get(tuple(p[i] for i in self._key_pos))
        if not bucket:
            return []
        pending = self.pending
        check = self._check_pos
        me = entry.qid
        out = []
        for qid in bucket:
            if qid == me:
                continue
            cand = pending[qid]
            sel = cand.sel
            for i in check:
                if p[i] not in sel[i]:
                    break
            else:
                cand.matchability += 1
                out.append(cand)
        return out

    def order_candidates(self, cqs: list[_Entry], order: str) -> list[_Entry]:
        if order == "random":
            cqs = list(cqs)
            self.rng.shuffle(cqs)
            return cqs
        if order == "LMF":
            return sorted(cqs, key=lambda e: (e.matchability, e.query.arrival_index))
        if order == "HMF":
            return sorted(cqs, key=lambda e: (-e.matchability, e.query.arrival_index))
        raise ValueError(f"unknown order {order!r}")

    @staticmethod
    def admit(members: list[_Entry], cand: _Entry) -> bool:
        """True iff ``cand`` matches every current member on join constraints."""
        acc = cand.accept
        cu = cand.user
        for m in members:
            if m.accept is not None and not m.accept(cu):
                return False
            if acc is not None and not acc(m.user):
                return False
        return True

    def greedy_extend(
        self, entry: _Entry, ordered: Iterable[_Entry], early_stop: bool
    ) -> tuple[list[_Entry], list[_Entry] | None]:
        """Grow ``S_p`` from ``entry`` over ``ordered``; returns ``(S_p, group)``.

        With ``early_stop`` the first feasible group after an admission is
        returned; otherwise the largest feasible group over the whole
        candidate list, members with earlier arrivals preferred.
        """
        max_size = self.config.max_group_size
        members = [entry]
        cq = entry.query.cardinality
        cindex = Cindex(max_size)
        cindex.add(entry, cq.lb, cq.ub)
        for cand in ordered:
            if not self.admit(members, cand):
                continue
            members.append(cand)
            c = cand.query.cardinality
            cindex.add(cand, c.lb, c.ub)
            if early_stop:
                found = cindex.find_group(entry, prefer_largest=self.config.early_pick == "largest")
                if found is not None:
                    return members, found[1]
        if early_stop:
            return members, None
        ranked = sorted(members[1:], key=lambda e: e.query.arrival_index)
        cindex = Cindex(max_size)
        cindex.add(entry, cq.lb, cq.ub)
        for e in ranked:
            c = e.query.cardinality
            cindex.add(e, c.lb, c.ub)
        found = cindex.find_group(entry, prefer_largest=True)
        return members, (found[1] if found is not None else None)

    def delay_gate(self, cqs: list[_Entry], now: float, reeval: bool) -> bool:
        """True to proceed with matching, False to defer."""
        if reeval or not cqs:
            return True
        mean_age = sum(now - e.query.arrival_time for e in cqs) / len(cqs)
        return mean_age > self.config.delay

    # -- public API ----------------------------------------------------

    def _evaluate(self, entry: _Entry, now: float, reeval: bool) -> CommittedGroup | None:
        cfg = self.config
        self.evaluations += 1
        points = list(entry.points)
        self.rng.shuffle(points)
        early = cfg.early_stop
        order = cfg.order
        for n, p in enumerate(points):
            cqs = self.build_cqs(entry, p)
            if n == 0 and cfg.algorithm == "DELAY" and not self.delay_gate(cqs, now, reeval):
                self._defer(entry, now)
                return None
            if not cqs:
                continue
            _, group = self.greedy_extend(entry, self.order_candidates(cqs, order), early)
            if group is not None:
                return self._commit(group, p, now)
        return None

    def _defer(self, entry: _Entry, now: float) -> None:
        self.deferrals += 1
        self._make_pending(entry)
        self.wheel.schedule(entry.qid, now + self.config.delay)

    def _make_pending(self, entry: _Entry) -> None:
        if entry.qid not in self.pending:
            self.pending[entry.qid] = entry
            self.pindex.insert(entry.query)

    def _commit(self, group: list[_Entry], p: tuple, now: float) -> CommittedGroup:
        cg = CommittedGroup(
            members=tuple(e.qid for e in group),
            witness=self.point_dict(p),
            committed_at_index=now,
        )
        if self.config.verify and not verify_committable(
            [e.query for e in group], cg.witness, self.users
        ):
            raise SoundnessError(cg)
        for e in group:
            qid = e.qid
            if qid in self.committed:
                raise SoundnessError(cg)
            self.committed.add(qid)
            if self.pending.pop(qid, None) is not None:
                self.pindex.remove(qid)
        self.groups.append(cg)
        return cg

    def process_query(self, q: EnmeshedQuery, now: float | None = None) -> CommittedGroup | None:
        """Evaluate a new arrival; it becomes pending when no group commits."""
        now = q.arrival_time if now is None else now
        if q.query_id in self.pending or q.query_id in self.committed:
            raise ContractViolation(f"query {q.query_id} submitted twice")
        self._now = max(self._now, now)
        entry = self._entry(q)
        group = self._evaluate(entry, now, reeval=False)
        if group is None:
            self._make_pending(entry)
        return group

    def advance(self, now: float) -> list[CommittedGroup]:
        """Reevaluate every deferred query due at or before ``now``."""
        out = []
        for due, qid in self.wheel.pop_due(now):
            entry = self.pending.get(qid)
            if entry is None:
                continue
            self.reevaluations += 1
            self._now = max(self._now, due)
            group = self._evaluate(entry, due, reeval=True)
            if group is not None:
                out.append(group)
        return out

    def step(self, q: EnmeshedQuery) -> list[CommittedGroup]:
        """Drain due reevaluations, then process ``q``."""
        out = self.advance(q.arrival_time)
        g = self.process_query(q)
        if g is not None:
            out.append(g)
        return out

    def flush(self) -> list[CommittedGroup]:
        """Run every outstanding reevaluation at its due time."""
        due = self.wheel.next_due()
        return self.advance(float("inf")) if due is not None else []

    def run(self, queries: Iterable[EnmeshedQuery], flush: bool = True) -> list[CommittedGroup]:
        out = []
        for q in queries:
            out.extend(self.step(q))
        if flush:
            out.extend(self.flush())
        return out
