import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import SMALL_ATTRS, SMALL_DOMAINS, q, random_instance, rated_users
from enmesh.model import (
    CardinalityRange,
    ContractViolation,
    EnmeshedQuery,
    JoinPredicate,
    Own,
    UserProfile,
    compile_joins,
    joins_accept,
    pair_match,
    satisfies,
    verify_committable,
    witness_points,
)

TENNIS_Q = EnmeshedQuery(
    "tennis",
    "alice",
    {"location": {"Cupertino", "Sunnyvale"}, "time": {"8PM"}, "sport": {"Tennis"}},
    CardinalityRange(2, 4),
)


def test_satisfies_inside_selection():
    assert satisfies(TENNIS_Q, {"location": "Cupertino", "time": "8PM", "sport": "Tennis"})


def test_satisfies_outside_selection():
    assert not satisfies(TENNIS_Q, {"location": "Campbell", "time": "8PM", "sport": "Tennis"})


def test_unconstrained_query_accepts_everything():
    full = q(1, {a: set(d) for a, d in SMALL_DOMAINS.items()}, 2)
    for p in itertools.product(*SMALL_DOMAINS.values()):
        assert satisfies(full, dict(zip(SMALL_ATTRS, p)))


def test_satisfies_rejects_unknown_attribute():
    with pytest.raises(ContractViolation):
        satisfies(TENNIS_Q, {"location": "Cupertino", "time": "8PM", "sport": "Tennis", "mood": "x"})


def test_empty_selection_rejected():
    with pytest.raises(ContractViolation):
        q(1, {"a": set()}, 2)


@pytest.mark.parametrize("lb,ub", [(1, 3), (4, 3), (0, 0)])
def test_bad_cardinality(lb, ub):
    with pytest.raises(ContractViolation):
        CardinalityRange(lb, ub)


def test_in_requires_a_set():
    with pytest.raises(ContractViolation):
        JoinPredicate("rating", "in", 3)


def test_pair_match_rating_comparison():
    users = rated_users({"alice": 3, "bob": 4})
    sel = {"a": {0, 1}}
    alice = q(1, sel, 2, joins=(JoinPredicate("rating", ">", Own("rating")),), user="alice")
    bob = q(2, {"a": {1}}, 2, user="bob")
    assert pair_match(alice, bob, users["alice"], users["bob"])
    assert pair_match(bob, alice, users["bob"], users["alice"])


def test_pair_match_lower_rated_only():
    # q1 (rating 4) only plays with lower-rated players; q (rating 3) has no joins
    users = rated_users({"q": 3, "q1": 4})
    base = q("q", {"a": {0}}, 2, 3, user="q")
    q1 = q("q1", {"a": {0}}, 2, 3, joins=(JoinPredicate("rating", "<", Own("rating")),), user="q1")
    assert pair_match(base, q1, users["q"], users["q1"])


def test_pair_match_disjoint_times():
    users = rated_users({1: 3, 2: 3})
    assert not pair_match(q(1, {"time": {1}}, 2), q(2, {"time": {2}}, 2), users[1], users[2])


def test_missing_counterparty_attribute_is_false():
    owner = UserProfile("o", attrs={"rating": 3})
    that = UserProfile("t")
    pred_q = q(1, {"a": {0}}, 2, joins=(JoinPredicate("rating", "=", 3),), user="o")
    assert not joins_accept(pred_q, owner, that)


def test_friends_membership_join():
    alice = UserProfile("alice", friends=frozenset({"bob"}))
    bob = UserProfile("bob")
    carol = UserProfile("carol")
    aq = q(1, {"a": {0}}, 2, joins=(JoinPredicate("id", "in", Own("friends")),), user="alice")
    assert joins_accept(aq, alice, bob)
    assert not joins_accept(aq, alice, carol)


def test_rating_uses_query_sport():
    u1 = UserProfile(1, sports={3: 4, 5: 1})
    u2 = UserProfile(2, sports={3: 2})
    pred = (JoinPredicate("rating", "in", frozenset({4})),)
    q_on_3 = q(10, {"sport": {3}}, 2, joins=pred, user=2)
    q_on_5 = q(11, {"sport": {5}}, 2, joins=pred, user=2)
    assert joins_accept(q_on_3, u2, u1)
    assert not joins_accept(q_on_5, u2, u1)


def _five_ranges():
    cards = [(2, 2), (2, 3), (2, 3), (2, 3), (3, 3)]
    qs = [q(i + 1, {"a": {0}}, lb, ub) for i, (lb, ub) in enumerate(cards)]
    users = {x.user: UserProfile(x.user) for x in qs}
    return qs, users


def test_flexible_triple_committable():
    qs, users = _five_ranges()
    assert verify_committable(qs[1:4], {"a": 0}, users)


def test_exact_two_with_exact_three_not_committable():
    qs, users = _five_ranges()
    assert not verify_committable([qs[0], qs[4]], {"a": 0}, users)


def test_singleton_never_committable():
    qs, users = _five_ranges()
    assert not verify_committable([qs[1]], {"a": 0}, users)


def test_duplicate_members_rejected():
    qs, users = _five_ranges()
    assert not verify_committable([qs[1], qs[1]], {"a": 0}, users)


# -- properties ----------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_pair_match_symmetric(seed):
    qs, users = random_instance(random.Random(seed), 2, with_joins=True)
    a, b = qs
    assert pair_match(a, b, users[a.user], users[b.user]) == pair_match(b, a, users[b.user], users[a.user])


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_witness_points_are_sound(seed):
    (x,), _ = random_instance(random.Random(seed), 1, with_joins=False)
    pts = list(witness_points(x))
    assert len(pts) == len(x.selections["a"]) * len(x.selections["b"])
    assert all(satisfies(x, p) for p in pts)


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_committable_independent_of_witness_choice(seed):
    rng = random.Random(seed)
    qs, users = random_instance(rng, rng.randint(2, 4), with_joins=True)
    witnesses = [dict(zip(SMALL_ATTRS, p)) for p in itertools.product(*SMALL_DOMAINS.values())]
    good = [p for p in witnesses if all(satisfies(x, p) for x in qs)]
    verdicts = {verify_committable(qs, p, users) for p in good}
    assert len(verdicts) <= 1
    if True in verdicts:
        for a, b in itertools.combinations(qs, 2):
            assert pair_match(a, b, users[a.user], users[b.user])


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_compiled_joins_agree(seed):
    rng = random.Random(seed)
    qs, users = random_instance(rng, 4, with_joins=True)
    for a, b in itertools.permutations(qs, 2):
        acc = compile_joins(a, users[a.user])
        expected = joins_accept(a, users[a.user], users[b.user])
        assert (True if acc is None else acc(users[b.user])) == expected
