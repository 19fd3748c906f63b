"""Pending-query index keyed on selective coordination attributes, and the
per-attempt size index used to find a feasible group."""

from __future__ import annotations

import itertools
from typing import Any, Hashable, Iterable, Mapping, Sequence

from .model import ContractViolation, EnmeshedQuery, value_order

__all__ = ["Pindex", "Cindex"]


class Pindex:
    """Inverted hash index from composite keys over ``indexed_attributes`` to
    the ids of pending queries.

    Postings are insertion-ordered so iteration is deterministic.  Removal of
    an unknown id is a no-op counted in ``missed_removals``.
    """

    def __init__(
        self,
        indexed_attributes: Sequence[str] = ("location", "time"),
        domains: Mapping[str, frozenset] | None = None,
    ):
        self.indexed_attributes = tuple(indexed_attributes)
        self.domains = dict(domains or {})
        self.postings: dict[tuple, dict[Any, None]] = {}
        self.registry: dict[Any, list[tuple]] = {}
        self.missed_removals = 0

    def __len__(self) -> int:
        return len(self.registry)

    def __contains__(self, query_id: Hashable) -> bool:
        return query_id in self.registry

    def keys_for(self, q: EnmeshedQuery) -> list[tuple]:
        pools = []
        for attr in self.indexed_attributes:
            try:
                values = q.selections[attr]
            except KeyError:
                raise ContractViolation(f"query {q.query_id} lacks indexed attribute {attr!r}")
            dom = self.domains.get(attr)
            if dom is not None and len(dom) > 1 and values >= dom:
                raise ContractViolation(
                    f"query {q.query_id}: full-domain selection on indexed attribute {attr!r}"
                )
            pools.append(sorted(values, key=value_order))
        return list(itertools.product(*pools))

    def insert(self, q: EnmeshedQuery) -> None:
        if q.query_id in self.registry:
            raise ContractViolation(f"query {q.query_id} already indexed")
        keys = self.keys_for(q)
        postings = self.postings
        for key in keys:
            bucket = postings.get(key)
            if bucket is None:
                postings[key] = {q.query_id: None}
            else:
                bucket[q.query_id] = None
        self.registry[q.query_id] = keys

    def lookup(self, p: Mapping[str, Any]) -> list:
        """Pending ids whose indexed selections contain ``p``'s indexed components."""
        key = tuple(p[a] for a in self.indexed_attributes)
        bucket = self.postings.get(key)
        return list(bucket) if bucket else []

    def remove(self, query_id: Hashable) -> None:
        keys = self.registry.pop(query_id, None)
        if keys is None:
            self.missed_removals += 1
            return
        postings = self.postings
        for key in keys:
            bucket = postings[key]
            del bucket[query_id]
            if not bucket:
                del postings[key]

    def posting_count(self) -> int:
        return sum(len(b) for b in self.postings.values())


class Cindex:
    """Map from permitted group size to the candidates allowing it.

    Built fresh for each matching attempt; a query with range ``[lb, ub]``
    is listed under every size in that range.
    """

    def __init__(self, max_group_size: int = 12):
        self.max_group_size = max_group_size
        self.by_size: dict[int, list] = {}

    @classmethod
    def from_ranges(cls, ranges: Iterable[tuple[Any, int, int]], max_group_size: int = 12) -> "Cindex":
        c = cls(max_group_size)
        for qid, lb, ub in ranges:
            c.add(qid, lb, ub)
        return c

    def add(self, query_id: Any, lb: int, ub: int) -> None:
        by_size = self.by_size
        for s in range(lb, min(ub, self.max_group_size) + 1):
            lst = by_size.get(s)
            if lst is None:
                by_size[s] = [query_id]
            else:
                lst.append(query_id)

    def feasible_sizes(self, must_include: Any = None) -> list[int]:
        return sorted(
            s
            for s, members in self.by_size.items()
            if len(members) >= s and (must_include is None or must_include in members)
        )

    def find_group(self, must_include: Any, prefer_largest: bool = False) -> tuple[int, list] | None:
        """Return ``(size, members)`` with ``must_include`` first, or None.

        Ascending size scan unless ``prefer_largest``; members past the first
        are taken in list order.
        """
        sizes = sorted(self.by_size, reverse=prefer_largest)
        for s in sizes:
            members = self.by_size[s]
            if len(members) < s or must_include not in members:
                continue
            chosen = [must_include]
            for m in members:
                if len(chosen) == s:
                    break
                if m != must_include:
                    chosen.append(m)
            return s, chosen
        return None
