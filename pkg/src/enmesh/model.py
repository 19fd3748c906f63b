"""Users, enmeshed queries and the matching semantics shared by every module.

A query constrains a fixed set of coordination attributes (selection sets),
constrains its counterparties through join predicates over user attributes,
and bounds the size of the group it is willing to join.  The functions here
are the reference semantics; the engine and oracles are checked against them.
"""

from __future__ import annotations

import itertools
import operator
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

__all__ = [
    "MISSING",
    "Own",
    "UserProfile",
    "JoinPredicate",
    "CardinalityRange",
    "EnmeshedQuery",
    "CommittedGroup",
    "ContractViolation",
    "satisfies",
    "jointly_satisfiable",
    "joins_accept",
    "pair_match",
    "verify_committable",
    "witness_points",
    "user_value",
    "value_order",
    "compile_joins",
]

DEFAULT_MAX_GROUP_SIZE = 12


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's precondition."""


class _Missing:
    __slots__ = ()

    def __repr__(self) -> str:
        return "MISSING"


MISSING: Any = _Missing()


@dataclass(frozen=True)
class UserProfile:
    user_id: Any
    home_location: tuple[int, int] | None = None
    sports: Mapping[int, int] = field(default_factory=dict)
    friends: frozenset = frozenset()
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def check(self, grid: tuple[int, int] = (10, 10), ratings: range = range(1, 6)) -> None:
        """Validate against the generator's domains (home cell, 1..3 sports, ratings)."""
        if not 1 <= len(self.sports) <= 3:
            raise ContractViolation(f"user {self.user_id}: {len(self.sports)} sports")
        if any(r not in ratings for r in self.sports.values()):
            raise ContractViolation(f"user {self.user_id}: rating outside {ratings}")
        if self.home_location is not None:
            r, c = self.home_location
            if not (0 <= r < grid[0] and 0 <= c < grid[1]):
                raise ContractViolation(f"user {self.user_id}: home {self.home_location} off grid")


@dataclass(frozen=True)
class Own:
    """Right-hand side referring to an attribute of the predicate owner's user."""

    attribute: str


_COMPARATORS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">=": operator.ge,
    ">": operator.gt,
}


@dataclass(frozen=True)
class JoinPredicate:
    """``that.<that_attribute> <comparator> <rhs>``.

    ``rhs`` is a literal, a literal set (only with ``in``) or :class:`Own`.
    """

    that_attribute: str
    comparator: str
    rhs: Any

    def __post_init__(self) -> None:
        if self.comparator != "in" and self.comparator not in _COMPARATORS:
            raise ContractViolation(f"unknown comparator {self.comparator!r}")
        if (
            self.comparator == "in"
            and not isinstance(self.rhs, Own)
            and not isinstance(self.rhs, (set, frozenset))
        ):
            raise ContractViolation("'in' needs a set on the right-hand side")


@dataclass(frozen=True)
class CardinalityRange:
    lb: int
    ub: int

    def __post_init__(self) -> None:
        if not 2 <= self.lb <= self.ub:
            raise ContractViolation(f"bad cardinality range [{self.lb}, {self.ub}]")

    def __contains__(self, size: int) -> bool:
        return self.lb <= size <= self.ub

    @property
    def width(self) -> int:
        return self.ub - self.lb + 1


@dataclass(eq=False)
class EnmeshedQuery:
    """One user's standing coordination request.

    ``selections`` maps every coordination attribute to its nonempty set of
    allowed values.  Identity is ``query_id``.
    """

    query_id: Any
    user: Any
    selections: Mapping[str, frozenset]
    cardinality: CardinalityRange
    joins: tuple[JoinPredicate, ...] = ()
    arrival_index: int = 0
    arrival_time: int | None = None

    def __post_init__(self) -> None:
        sel = {}
        for attr, values in self.selections.items():
            values = frozenset(values)
            if not values:
                raise ContractViolation(f"query {self.query_id}: empty selection on {attr}")
            sel[attr] = values
        self.selections = sel
        self.joins = tuple(self.joins)
        if self.arrival_time is None:
            self.arrival_time = self.arrival_index

    def __hash__(self) -> int:
        return hash(self.query_id)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EnmeshedQuery) and other.query_id == self.query_id

    def __repr__(self) -> str:
        return f"EnmeshedQuery({self.query_id!r})"

    @property
    def sport(self) -> Any:
        """The query's single sport, or None when unconstrained or multi-valued."""
        s = self.selections.get("sport")
        if s is not None and len(s) == 1:
            return next(iter(s))
        return None


@dataclass(frozen=True)
class CommittedGroup:
    members: tuple
    witness: Mapping[str, Any]
    committed_at_index: int

    def __len__(self) -> int:
        return len(self.members)


def user_value(user: UserProfile, attribute: str, sport: Any = None) -> Any:
    """Resolve a user attribute; ``rating`` is looked up for ``sport`` when given."""
    if attribute == "id":
        return user.user_id
    if attribute == "friends":
        return user.friends
    if attribute == "home_location":
        return user.home_location
    if attribute == "rating" and sport is not None and user.sports:
        return user.sports.get(sport, MISSING)
    return user.attrs.get(attribute, MISSING)


def _check_predicate(pred: JoinPredicate, owner: UserProfile, that: UserProfile, sport: Any) -> bool:
    lhs = user_value(that, pred.that_attribute, sport)
    if lhs is MISSING:
        return False
    rhs = pred.rhs
    if isinstance(rhs, Own):
        rhs = user_value(owner, rhs.attribute, sport)
        if rhs is MISSING:
            return False
    try:
        if pred.comparator == "in":
            return lhs in rhs
        return bool(_COMPARATORS[pred.comparator](lhs, rhs))
    except TypeError:
        return False


def joins_accept(q: EnmeshedQuery, owner: UserProfile, that: UserProfile) -> bool:
    """True iff every join predicate of ``q`` (issued by ``owner``) holds for ``that``."""
    sport = q.sport
    return all(_check_predicate(p, owner, that, sport) for p in q.joins)


def satisfies(q: EnmeshedQuery, p: Mapping[str, Any]) -> bool:
    """True iff every selection set of ``q`` contains the matching component of ``p``."""
    sel = q.selections
    for attr, value in p.items():
        allowed = sel.get(attr)
        if allowed is None:
            raise ContractViolation(f"point attribute {attr!r} unknown to query {q.query_id}")
        if value not in allowed:
            return False
    if len(p) != len(sel):
        raise ContractViolation(f"point {dict(p)} does not cover query {q.query_id}'s attributes")
    return True


def jointly_satisfiable(queries: Sequence[EnmeshedQuery]) -> bool:
    """Selections are per-attribute sets, so a witness exists iff each attribute intersects."""
    first = queries[0].selections
    for attr, allowed in first.items():
        common = set(allowed)
        for q in queries[1:]:
            common &= q.selections[attr]
            if not common:
                return False
    return True


def pair_match(q1: EnmeshedQuery, q2: EnmeshedQuery, u1: UserProfile, u2: UserProfile) -> bool:
    if q1.query_id == q2.query_id:
        raise ContractViolation("a query cannot be matched with itself")
    if q1.user != u1.user_id or q2.user != u2.user_id:
        raise ContractViolation("profile does not belong to the query's user")
    if q1.selections.keys() != q2.selections.keys():
        raise ContractViolation("queries range over different coordination attributes")
    return (
        jointly_satisfiable((q1, q2))
        and joins_accept(q1, u1, u2)
        and joins_accept(q2, u2, u1)
    )


def verify_committable(
    group: Iterable[EnmeshedQuery],
    p: Mapping[str, Any],
    users: Mapping[Any, UserProfile],
) -> bool:
    """Independent check of a committable group against witness point ``p``."""
    group = list(group)
    if len(group) < 2 or len({q.query_id for q in group}) != len(group):
        return False
    size = len(group)
    for q in group:
        if size not in q.cardinality or not satisfies(q, p):
            return False
    for a, b in itertools.combinations(group, 2):
        if not pair_match(a, b, users[a.user], users[b.user]):
            return False
    return True


def value_order(v: Any) -> tuple:
    """Total order over mixed-type domain values (type name first)."""
    return (type(v).__name__, v)


def witness_points(q: EnmeshedQuery, attributes: Sequence[str] | None = None) -> Iterator[dict]:
    """Every point in the cross-product of ``q``'s selection sets (sorted per attribute)."""
    attrs = list(attributes) if attributes is not None else list(q.selections)
    pools = [sorted(q.selections[a], key=value_order) for a in attrs]
    for combo in itertools.product(*pools):
        yield dict(zip(attrs, combo))


def compile_joins(q: EnmeshedQuery, owner: UserProfile):
    """Close ``q``'s join predicates over its owner; returns ``accept(that)`` or None.

    None means the query accepts every counterparty.  Equivalent to
    :func:`joins_accept` but resolves own-attribute references once.
    """
    if not q.joins:
        return None
    sport = q.sport
    if len(q.joins) == 1:
        pred = q.joins[0]
        if pred.that_attribute == "rating" and pred.comparator == "in" and not isinstance(pred.rhs, Own):
            allowed = pred.rhs

            def accept_rating(that: UserProfile) -> bool:
                return user_value(that, "rating", sport) in allowed

            return accept_rating
    preds = q.joins

    def accept(that: UserProfile) -> bool:
        for pred in preds:
            if not _check_predicate(pred, owner, that, sport):
                return False
        return True

    return accept
