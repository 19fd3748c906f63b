import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import SMALL_ATTRS, SMALL_DOMAINS, random_instance
from enmesh.index import Cindex, Pindex
from enmesh.model import CardinalityRange, ContractViolation, EnmeshedQuery, satisfies


def wq(qid, locs, times, sport="S", lb=2, ub=4):
    return EnmeshedQuery(
        qid, qid, {"location": set(locs), "time": set(times), "sport": {sport}}, CardinalityRange(lb, ub)
    )


@pytest.mark.parametrize(
    "locs,times,n",
    [({"A", "B"}, {"t1"}, 2), ({"A"}, {"t1", "t2"}, 2), ({"A", "B"}, {"t1", "t2"}, 4)],
)
def test_posting_counts(locs, times, n):
    idx = Pindex()
    idx.insert(wq(1, locs, times))
    assert idx.posting_count() == n


def test_lookup_ignores_non_indexed_attribute():
    idx = Pindex()
    idx.insert(wq(1, {"A"}, {"t1"}, sport="Tennis"))
    assert idx.lookup({"location": "A", "time": "t1", "sport": "Golf"}) == [1]


def test_empty_index_lookup():
    assert Pindex().lookup({"location": "A", "time": "t1", "sport": "S"}) == []


def test_shared_key_returns_both():
    idx = Pindex()
    idx.insert(wq(1, {"A"}, {"t1"}))
    idx.insert(wq(2, {"A", "B"}, {"t1"}))
    assert idx.lookup({"location": "A", "time": "t1"}) == [1, 2]


def test_duplicate_insert_rejected():
    idx = Pindex()
    idx.insert(wq(1, {"A"}, {"t1"}))
    with pytest.raises(ContractViolation):
        idx.insert(wq(1, {"A"}, {"t1"}))


def test_remove_then_lookup_empty():
    idx = Pindex()
    idx.insert(wq(1, {"A", "B"}, {"t1"}))
    idx.remove(1)
    assert idx.lookup({"location": "A", "time": "t1"}) == []
    assert idx.posting_count() == 0 and len(idx) == 0


def test_remove_keeps_neighbour():
    idx = Pindex()
    idx.insert(wq(1, {"A"}, {"t1"}))
    idx.insert(wq(2, {"A"}, {"t1"}))
    idx.remove(1)
    assert idx.lookup({"location": "A", "time": "t1"}) == [2]


def test_double_remove_is_counted_noop():
    idx = Pindex()
    idx.insert(wq(1, {"A"}, {"t1"}))
    idx.remove(1)
    idx.remove(1)
    assert idx.missed_removals == 1


def test_full_domain_selection_on_indexed_attribute_rejected():
    idx = Pindex(domains={"location": frozenset({"A", "B"}), "time": frozenset({"t1", "t2", "t3"})})
    with pytest.raises(ContractViolation):
        idx.insert(wq(1, {"A", "B"}, {"t1"}))


# -- Cindex ----------------------------------------------------------------


def test_cindex_five_ranges_prefers_largest():
    ranges = [("q1", 2, 2), ("q2", 2, 3), ("q3", 2, 3), ("q4", 2, 3), ("q5", 3, 3)]
    c = Cindex.from_ranges(ranges)
    assert c.by_size == {2: ["q1", "q2", "q3", "q4"], 3: ["q2", "q3", "q4", "q5"]}
    s, members = c.find_group("q5", prefer_largest=True)
    assert s == 3 and members[0] == "q5" and set(members) <= {"q2", "q3", "q4", "q5"} and len(members) == 3


def test_cindex_too_few_for_size():
    c = Cindex.from_ranges([("a", 4, 4), ("b", 4, 4), ("c", 4, 4)])
    assert c.find_group("a") is None


def test_cindex_scan_direction():
    c = Cindex()
    c.by_size = {2: ["a", "b"], 3: ["a", "b", "c"]}
    assert c.find_group("a", prefer_largest=False) == (2, ["a", "b"])
    assert c.find_group("a", prefer_largest=True) == (3, ["a", "b", "c"])


def test_cindex_must_include_absent():
    c = Cindex.from_ranges([("a", 2, 2), ("b", 2, 2), ("c", 3, 3)])
    assert c.find_group("c") is None


@given(st.lists(st.tuples(st.integers(2, 12), st.integers(0, 10)), min_size=1, max_size=14))
@settings(max_examples=300, deadline=None)
def test_cindex_largest_is_maximal(spec):
    ranges = [(i, lb, min(12, lb + w)) for i, (lb, w) in enumerate(spec)]
    c = Cindex.from_ranges(ranges)
    feasible = [
        s
        for s in range(2, 13)
        if ranges[0][1] <= s <= ranges[0][2] and sum(lb <= s <= ub for _, lb, ub in ranges) >= s
    ]
    found = c.find_group(0, prefer_largest=True)
    if not feasible:
        assert found is None
        return
    s, members = found
    assert s == max(feasible)
    assert len(members) == s == len(set(members)) and members[0] == 0
    assert all(ranges[m][1] <= s <= ranges[m][2] for m in members)
    s_small, _ = c.find_group(0, prefer_largest=False)
    assert s_small == min(feasible)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_pindex_lookup_round_trip(seed):
    rng = random.Random(seed)
    qs, _ = random_instance(rng, rng.randint(1, 8), with_joins=False)
    idx = Pindex(indexed_attributes=("a",))
    for x in qs:
        idx.insert(x)
    assert idx.posting_count() <= 2 * len(qs)
    for p in itertools.product(*SMALL_DOMAINS.values()):
        point = dict(zip(SMALL_ATTRS, p))
        found = set(idx.lookup(point))
        assert {x.query_id for x in qs if satisfies(x, point)} <= found
        assert all(point["a"] in qs[i].selections["a"] for i in found)
