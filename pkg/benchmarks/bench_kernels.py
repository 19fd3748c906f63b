"""Compare the numba and numpy backends of the exhaustive-oracle kernels.

    python benchmarks/bench_kernels.py [--sizes 10,12,14,16] [--repeat 3]
"""

import argparse
import itertools
import random
import time

import numpy as np

from enmesh import _kernels
from enmesh.model import CardinalityRange, EnmeshedQuery, JoinPredicate, UserProfile, pair_match, satisfies


def instance(n, seed):
    rng = random.Random(seed)
    users, queries = {}, []
    for i in range(n):
        users[i] = UserProfile(i, attrs={"rating": rng.randint(1, 5)})
        sel = {a: frozenset(rng.sample(range(3), rng.randint(1, 2))) for a in ("a", "b")}
        lb = rng.randint(2, 4)
        joins = (JoinPredicate("rating", "in", frozenset(rng.sample(range(1, 6), 3))),) if rng.random() < 0.3 else ()
        queries.append(EnmeshedQuery(i, i, sel, CardinalityRange(lb, rng.randint(lb, 6)), joins, arrival_index=i))
    return queries, users


def arrays(n, seed):
    queries, users = instance(n, seed)
    lb = [q.cardinality.lb for q in queries]
    ub = [q.cardinality.ub for q in queries]
    compat = [1 << i for i in range(n)]
    for i, a in enumerate(queries):
        for j, b in enumerate(queries):
            if i != j and pair_match(a, b, users[a.user], users[b.user]):
                compat[i] |= 1 << j
    sat = []
    for p in itertools.product(range(3), range(3)):
        point = {"a": p[0], "b": p[1]}
        sat.append(sum(1 << i for i, q in enumerate(queries) if satisfies(q, point)))
    return lb, ub, compat, sat


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="10,12,14,16")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [b for b in ("numpy", "numba") if b in _kernels.IMPLEMENTATIONS]
    if "numba" in backends:
        # compile outside the timed region
        _kernels.best_packing(_kernels.committable_subsets([2, 2], [2, 2], [3, 3], [3], "numba"), 2, True, "numba")
    print(f"{'n':>3} {'kernel':<10} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for n in (int(s) for s in args.sizes.split(",")):
        lb, ub, compat, sat = arrays(n, seed=n)
        row_ok, row_pack = {}, {}
        for b in backends:
            row_ok[b], ok = best_of(lambda: _kernels.committable_subsets(lb, ub, compat, sat, b), args.repeat)
            row_pack[b], res = best_of(lambda: _kernels.best_packing(ok, n, True, b), args.repeat)
            row_pack[b, "value"] = int(res[0][-1])
        if len(backends) == 2:
            assert row_pack["numpy", "value"] == row_pack["numba", "value"]
        for name, row in (("subsets", row_ok), ("packing", row_pack)):
            cells = " ".join(f"{row[b] * 1e3:>8.2f}ms" for b in backends)
            speed = f"{row['numpy'] / row['numba']:>8.1f}x" if len(backends) == 2 else ""
            print(f"{n:>3} {name:<10} {cells} {speed}")


if __name__ == "__main__":
    np.seterr(all="raise")
    main()
