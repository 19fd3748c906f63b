"""Bitmask kernels behind the exhaustive offline oracle.

Both kernels run over every subset of at most ~16 queries, so they are the
one place where a tight numeric loop dominates.  Each has a numba ``@njit``
version and a pure-numpy version with identical results.  Set
``ENMESH_NUMBA=0`` to force numpy; numpy is also used when numba is missing.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["BACKEND", "committable_subsets", "best_packing", "IMPLEMENTATIONS"]

MAX_QUERIES = 20

# -- numpy -------------------------------------------------------------


def _popcounts(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    pc = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        pc += (masks >> i) & 1
    return pc


def committable_subsets_numpy(lb, ub, compat, sat) -> np.ndarray:
    """``out[mask]`` is 1 iff the queries in ``mask`` form a committable group.

    ``compat[i]`` is the bitmask of queries pairwise-matching query ``i``
    (including ``i``); ``sat[k]`` is the bitmask satisfied by witness ``k``.
    """
    n = len(lb)
    masks = np.arange(1 << n, dtype=np.int64)
    size = _popcounts(n)
    max_lb = np.zeros(1 << n, dtype=np.int64)
    min_ub = np.full(1 << n, 1 << 30, dtype=np.int64)
    ok = size >= 2
    for i in range(n):
        has = ((masks >> i) & 1).astype(bool)
        max_lb = np.where(has, np.maximum(max_lb, lb[i]), max_lb)
        min_ub = np.where(has, np.minimum(min_ub, ub[i]), min_ub)
        ok &= ~has | ((masks & ~np.int64(compat[i])) == 0)
    ok &= (max_lb <= size) & (size <= min_ub)
    witnessed = np.zeros(1 << n, dtype=bool)
    for s in sat:
        witnessed |= (masks & ~np.int64(s)) == 0
    return (ok & witnessed).astype(np.uint8)


def best_packing_numpy(ok, n: int, count_queries: bool):
    """Max-weight packing of disjoint committable subsets.

    Returns ``(value, choice)`` arrays indexed by mask; ``choice[mask]`` is
    the group taken with the lowest member of ``mask`` (0 = leave it out).
    Ties go to the numerically smallest group mask.
    """
    full = 1 << n
    value = np.zeros(full, dtype=np.int64)
    choice = np.zeros(full, dtype=np.int64)
    groups = np.nonzero(ok)[0].astype(np.int64)
    weight = _popcounts(n)
    low_of = groups & -groups
    for i in range(n - 1, -1, -1):
        bit = np.int64(1 << i)
        hi = np.arange(1 << (n - 1 - i), dtype=np.int64) << (i + 1)
        masks = hi | bit
        best = value[masks ^ bit]
        pick = np.zeros(len(masks), dtype=np.int64)
        for g in groups[low_of == bit]:
            fits = (masks & g) == g
            val = (weight[g] if count_queries else 1) + value[masks ^ g]
            upd = fits & ((val > best) | ((val == best) & (pick == 0)))
            best = np.where(upd, val, best)
            pick = np.where(upd, g, pick)
        value[masks] = best
        choice[masks] = pick
    return value, choice


# -- numba -------------------------------------------------------------


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def committable_subsets_nb(lb, ub, compat, sat):
        n = lb.shape[0]
        full = 1 << n
        out = np.zeros(full, dtype=np.uint8)
        for mask in range(1, full):
            size = 0
            max_lb = 0
            min_ub = 1 << 30
            good = True
            for i in range(n):
                if (mask >> i) & 1:
                    size += 1
                    if lb[i] > max_lb:
                        max_lb = lb[i]
                    if ub[i] < min_ub:
                        min_ub = ub[i]
                    if mask & ~compat[i]:
                        good = False
                        break
            if not good or size < 2 or size < max_lb or size > min_ub:
                continue
            for k in range(sat.shape[0]):
                if (mask & ~sat[k]) == 0:
                    out[mask] = 1
                    break
        return out

    @njit(cache=True)
    def best_packing_nb(ok, n, count_queries):
        full = 1 << n
        value = np.zeros(full, dtype=np.int64)
        choice = np.zeros(full, dtype=np.int64)
        # committable groups bucketed by lowest member, ascending within a bucket
        groups = np.nonzero(ok)[0].astype(np.int64)
        weight = np.ones(groups.shape[0], dtype=np.int64)
        start = np.zeros(n + 1, dtype=np.int64)
        for k in range(groups.shape[0]):
            g = groups[k]
            if count_queries:
                w = 0
                x = g
                while x:
                    x &= x - 1
                    w += 1
                weight[k] = w
            low = 0
            while not (g >> low) & 1:
                low += 1
            start[low + 1] += 1
        for i in range(n):
            start[i + 1] += start[i]
        order = np.argsort(groups & -groups, kind="mergesort")
        groups = groups[order]
        weight = weight[order]
        for mask in range(1, full):
            lowbit = mask & -mask
            i = 0
            while not (lowbit >> i) & 1:
                i += 1
            best = value[mask ^ lowbit]
            pick = 0
            for k in range(start[i], start[i + 1]):
                g = groups[k]
                if (mask & g) != g:
                    continue
                val = weight[k] + value[mask ^ g]
                if val > best or (val == best and pick == 0):
                    best = val
                    pick = g
            value[mask] = best
            choice[mask] = pick
        return value, choice

    return committable_subsets_nb, best_packing_nb


IMPLEMENTATIONS: dict[str, tuple] = {
    "numpy": (committable_subsets_numpy, best_packing_numpy),
}

try:
    IMPLEMENTATIONS["numba"] = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass

_want_numba = os.environ.get("ENMESH_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")
BACKEND = "numba" if _want_numba and "numba" in IMPLEMENTATIONS else "numpy"


def _as_arrays(lb, ub, compat, sat):
    return (
        np.ascontiguousarray(lb, dtype=np.int64),
        np.ascontiguousarray(ub, dtype=np.int64),
        np.ascontiguousarray(compat, dtype=np.int64),
        np.ascontiguousarray(sat, dtype=np.int64),
    )


def committable_subsets(lb, ub, compat, sat, backend: str | None = None) -> np.ndarray:
    if len(lb) > MAX_QUERIES:
        raise ValueError(f"{len(lb)} queries exceeds the kernel limit of {MAX_QUERIES}")
    fn = IMPLEMENTATIONS[backend or BACKEND][0]
    return fn(*_as_arrays(lb, ub, compat, sat))


def best_packing(ok, n: int, count_queries: bool, backend: str | None = None):
    fn = IMPLEMENTATIONS[backend or BACKEND][1]
    return fn(np.ascontiguousarray(ok, dtype=np.uint8), n, count_queries)
