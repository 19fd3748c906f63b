"""Synthetic sports-coordination workloads built from pre-matched groups.

Users get a Zipf-popular home cell, one to three sports and a Zipf rating
per sport.  Queries are emitted a group at a time: a group signature (one
cell, slot, sport, rating and a size ``m``) is drawn, ``m`` qualifying users
are picked, and each gets a query whose selections contain the signature.
Blocks of whole groups are shuffled so that a group's members land within
``group_interval`` arrivals of each other.

All sampling is integer-only (``random.Random`` plus cumulative integer
weight tables), so a seed gives the same trace on every platform.
"""

from __future__ import annotations

import bisect
import dataclasses
import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Any, Sequence

from .model import CardinalityRange, EnmeshedQuery, JoinPredicate, UserProfile

__all__ = [
    "WorkloadConfig",
    "WorkloadTrace",
    "GroupSignature",
    "GenerationError",
    "WeightTable",
    "zipf_table",
    "generate_users",
    "query_group_range",
    "generate_prematched_trace",
    "generate_trace",
    "generate_figure1_family",
    "is_weekend_slot",
]

ZIPF_SCALE = 1 << 40


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorkloadConfig:
    num_queries: int = 1_000_000
    num_users: int = 200_000
    grid_rows: int = 10
    grid_cols: int = 10
    num_sports: int = 10
    max_rating: int = 5
    days: int = 28
    slots_per_day: int = 12
    max_group_size: int = 12
    group_interval: int = 5000
    zipf_exponent: float = 1.0
    weekend_weight: int = 2
    max_redraws: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.group_interval < self.max_group_size:
            raise ValueError("group_interval must hold at least one maximal group")
        if self.num_queries < 2:
            raise ValueError("need at least two queries")

    @classmethod
    def desk(cls, seed: int = 0, **overrides) -> "WorkloadConfig":
        """Ten-fold reduced scale: 100k queries, 20k users, interval 2000."""
        base = dict(num_queries=100_000, num_users=20_000, group_interval=2000, seed=seed)
        base.update(overrides)
        return cls(**base)

    @property
    def num_cells(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def num_slots(self) -> int:
        return self.days * self.slots_per_day

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GroupSignature:
    location: int
    time: int
    sport: int
    rating: int
    size: int


@dataclass
class WorkloadTrace:
    """An ordered query stream plus, kept apart, its pre-matched annotations.

    ``groups[i]`` is ``(group_id, group_size)`` for ``queries[i]``; the
    engine only ever receives ``queries``.
    """

    queries: list[EnmeshedQuery]
    users: dict[Any, UserProfile]
    groups: list[tuple[int, int]] | None = None
    config: WorkloadConfig | None = None
    attributes: tuple[str, ...] = ("location", "time", "sport")
    indexed: tuple[str, ...] = ("location", "time")
    premix_position: list[int] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.queries)

    @property
    def seed(self) -> int | None:
        return self.config.seed if self.config is not None else None


class WeightTable:
    """Sampling from integer weights by bisecting the cumulative table."""

    def __init__(self, weights: Sequence[int]):
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        self.weights = [int(w) for w in weights]
        cum = []
        total = 0
        for w in self.weights:
            total += w
            cum.append(total)
        self.cum = cum
        self.total = total

    def __len__(self) -> int:
        return len(self.weights)

    def probabilities(self) -> list[float]:
        return [w / self.total for w in self.weights]

    def draw(self, rng: random.Random) -> int:
        """Index drawn with probability proportional to its weight."""
        return bisect.bisect_right(self.cum, rng.randrange(self.total))


def zipf_table(n: int, exponent: float = 1.0) -> WeightTable:
    """Rank ``k`` (0-based) gets weight proportional to ``1 / (k + 1) ** exponent``."""
    if exponent == 1.0:
        return WeightTable([ZIPF_SCALE // k for k in range(1, n + 1)])
    return WeightTable([round(ZIPF_SCALE * k ** -exponent) for k in range(1, n + 1)])


def is_weekend_slot(slot: int, slots_per_day: int = 12) -> bool:
    # day 0 is a Monday
    return (slot // slots_per_day) % 7 >= 5


def cell_of(cfg: WorkloadConfig, row: int, col: int) -> int:
    return row * cfg.grid_cols + col


def neighbors(cfg: WorkloadConfig, cell: int) -> list[int]:
    r, c = divmod(cell, cfg.grid_cols)
    out = []
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < cfg.grid_rows and 0 <= cc < cfg.grid_cols:
            out.append(cell_of(cfg, rr, cc))
    return out


class _Tables:
    def __init__(self, cfg: WorkloadConfig, rng: random.Random):
        s = cfg.zipf_exponent
        # popularity rank -> cell, so popular cells are scattered over the grid
        self.cell_rank = list(range(cfg.num_cells))
        rng.shuffle(self.cell_rank)
        self.cell = zipf_table(cfg.num_cells, s)
        self.rating = zipf_table(cfg.max_rating, s)
        self.nsports = zipf_table(3, s)
        self.multi = zipf_table(2, s)
        self.size = zipf_table(cfg.max_group_size - 1, s)
        self.slot = WeightTable(
            [cfg.weekend_weight if is_weekend_slot(t, cfg.slots_per_day) else 1 for t in range(cfg.num_slots)]
        )

    def draw_cell(self, rng: random.Random) -> int:
        return self.cell_rank[self.cell.draw(rng)]


def generate_users(cfg: WorkloadConfig, rng: random.Random | None = None) -> list[UserProfile]:
    rng = rng if rng is not None else random.Random(cfg.seed)
    tables = _Tables(cfg, rng)
    return _generate_users(cfg, rng, tables)


def _generate_users(cfg: WorkloadConfig, rng: random.Random, tables: _Tables) -> list[UserProfile]:
    users = []
    for uid in range(cfg.num_users):
        cell = tables.draw_cell(rng)
        n = 1 + tables.nsports.draw(rng)
        sports = sorted(rng.sample(range(cfg.num_sports), n))
        ratings = {s: 1 + tables.rating.draw(rng) for s in sports}
        users.append(UserProfile(uid, divmod(cell, cfg.grid_cols), ratings))
    return users


def query_group_range(m: int, low: int, max_group_size: int = 12) -> CardinalityRange:
    """Range starting at ``low`` of width ``min(2(m - low) + 1, max - low + 1)``."""
    if not 2 <= low <= m <= max_group_size:
        raise ValueError(f"need 2 <= low <= m <= {max_group_size}, got low={low}, m={m}")
    width = min(2 * (m - low) + 1, max_group_size - low + 1)
    return CardinalityRange(low, low + width - 1)


def generate_prematched_trace(
    cfg: WorkloadConfig,
    users: list[UserProfile] | None = None,
    rng: random.Random | None = None,
) -> WorkloadTrace:
    rng = rng if rng is not None else random.Random(cfg.seed)
    tables = _Tables(cfg, rng)
    if users is None:
        users = _generate_users(cfg, rng, tables)

    by_key: dict[tuple[int, int, int], list[int]] = {}
    for u in users:
        cell = cell_of(cfg, *u.home_location)
        for sport, rating in u.sports.items():
            by_key.setdefault((cell, sport, rating), []).append(u.user_id)
    busy: dict[int, set[int]] = {}  # user -> occupied slots

    records: list[tuple[int, frozenset, frozenset, int, frozenset, CardinalityRange, int, int]] = []
    premix: list[int] = []
    block: list[tuple] = []
    emitted = 0
    gid = 0
    redraws = 0

    def flush_block() -> None:
        order = list(range(len(block)))
        rng.shuffle(order)
        base = len(records)
        for i in order:
            records.append(block[i])
            premix.append(base + i)
        block.clear()

    while emitted < cfg.num_queries:
        remaining = cfg.num_queries - emitted
        sig = GroupSignature(
            location=tables.draw_cell(rng),
            time=tables.slot.draw(rng),
            sport=rng.randrange(cfg.num_sports),
            rating=1 + tables.rating.draw(rng),
            size=2 + tables.size.draw(rng),
        )
        m = min(sig.size, remaining)
        if remaining - m == 1:
            m = m + 1 if m < cfg.max_group_size else m - 1
        pool = [u for u in by_key.get((sig.location, sig.sport, sig.rating), ()) if sig.time not in busy.get(u, ())]
        if len(pool) < m:
            redraws += 1
            if redraws > cfg.max_redraws:
                raise GenerationError(f"no qualifying users after {redraws} signature draws")
            continue
        redraws = 0
        members = rng.sample(pool, m)
        if block and len(block) + m > cfg.group_interval:
            flush_block()
        near = neighbors(cfg, sig.location)
        for uid in members:
            low = rng.randint(2, m)
            card = query_group_range(m, low, cfg.max_group_size)
            taken = busy.setdefault(uid, set())
            locs = {sig.location}
            if tables.multi.draw(rng) == 1 and near:
                locs.add(near[rng.randrange(len(near))])
            times = {sig.time}
            if tables.multi.draw(rng) == 1:
                for _ in range(16):
                    t = tables.slot.draw(rng)
                    if t != sig.time and t not in taken:
                        times.add(t)
                        break
            taken.update(times)
            desired = {sig.rating}
            if tables.multi.draw(rng) == 1:
                other = sig.rating + (1 if rng.randrange(2) else -1)
                desired.add(min(max(other, 1), cfg.max_rating))
            block.append((uid, frozenset(locs), frozenset(times), sig.sport, frozenset(desired), card, gid, m))
        emitted += m
        gid += 1
    if block:
        flush_block()

    queries = []
    groups = []
    for idx, (uid, locs, times, sport, desired, card, g, m) in enumerate(records):
        queries.append(
            EnmeshedQuery(
                query_id=idx,
                user=uid,
                selections={"location": locs, "time": times, "sport": frozenset((sport,))},
                cardinality=card,
                joins=(JoinPredicate("rating", "in", desired),),
                arrival_index=idx,
            )
        )
        groups.append((g, m))
    return WorkloadTrace(
        queries=queries,
        users={u.user_id: u for u in users},
        groups=groups,
        config=cfg,
        premix_position=premix,
    )


def generate_trace(cfg: WorkloadConfig) -> WorkloadTrace:
    """Users and queries from one seeded stream."""
    return generate_prematched_trace(cfg)


def generate_figure1_family(k: int) -> WorkloadTrace:
    """``k * k`` queries on one attribute where greedy commits ``k`` and the
    offline optimum commits all of them.

    Queries ``1..k`` accept ``{"x", i}``; the ``k - 1`` satellites of query
    ``i`` accept only ``{i}``.  Every cardinality is exactly ``k``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    card = CardinalityRange(k, k)
    specs: list[tuple[frozenset, int]] = []
    for i in range(1, k + 1):
        specs.append((frozenset({"x", i}), i))
    for i in range(1, k + 1):
        specs.extend((frozenset({i}), i) for _ in range(k - 1))
    queries = []
    groups = []
    for n, (values, hub) in enumerate(specs, start=1):
        queries.append(EnmeshedQuery(n, n, {"A": values}, card, arrival_index=n))
        groups.append((hub, k))
    users = {n: UserProfile(n) for n in range(1, k * k + 1)}
    return WorkloadTrace(queries, users, groups, None, ("A",), ("A",))
