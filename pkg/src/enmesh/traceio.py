"""Line-oriented trace files.

::

    #enmesh-trace v1 seed=7 digest=<config digest> records=<N> users=<U> checksum=<sha256> config=<json>
    U,<user_id>,<row>,<col>,<sport>:<rating>;...
    <arrival_index>,<user_id>,<locs>,<slots>,<sport>,<ratings>,<lb>,<ub>,<group_id>,<group_size>

Multi-valued fields are ``;``-separated.  The checksum covers every line
after the header, so a regenerated trace can be compared against a file
without reading it record by record.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from typing import IO, Iterable

from .model import CardinalityRange, EnmeshedQuery, JoinPredicate, UserProfile
from .workload import WorkloadConfig, WorkloadTrace, generate_trace

__all__ = ["TraceFormatError", "write_trace", "read_trace", "trace_lines", "trace_checksum", "matches_regeneration"]

MAGIC = "#enmesh-trace v1"
_HEADER = re.compile(
    r"^#enmesh-trace v1 seed=(?P<seed>-?\d+|none) digest=(?P<digest>\w+) records=(?P<records>\d+) "
    r"users=(?P<users>\d+) checksum=(?P<checksum>[0-9a-f]{64}) config=(?P<config>.*)$"
)


class TraceFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _join(values: Iterable[int]) -> str:
    return ";".join(str(v) for v in sorted(values))


def _rating_set(q: EnmeshedQuery) -> frozenset:
    for j in q.joins:
        if j.that_attribute == "rating" and j.comparator == "in":
            return j.rhs
    raise ValueError(f"query {q.query_id} has no rating-set join; only workload traces are serialisable")


def trace_lines(trace: WorkloadTrace) -> list[str]:
    """Body lines (users then queries) without the header or newlines."""
    if trace.groups is None:
        raise ValueError("trace has no group annotations")
    lines = []
    for uid in sorted(trace.users):
        u = trace.users[uid]
        sports = ";".join(f"{s}:{r}" for s, r in sorted(u.sports.items()))
        row, col = u.home_location
        lines.append(f"U,{uid},{row},{col},{sports}")
    for q, (gid, gsize) in zip(trace.queries, trace.groups):
        sel = q.selections
        (sport,) = sel["sport"]
        c = q.cardinality
        lines.append(
            f"{q.arrival_index},{q.user},{_join(sel['location'])},{_join(sel['time'])},{sport},"
            f"{_join(_rating_set(q))},{c.lb},{c.ub},{gid},{gsize}"
        )
    return lines


def trace_checksum(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


def write_trace(trace: WorkloadTrace, path: str | os.PathLike | IO[str]) -> str:
    """Write ``trace``; returns the body checksum."""
    lines = trace_lines(trace)
    checksum = trace_checksum(lines)
    cfg = trace.config
    config_json = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")) if cfg else "{}"
    seed = cfg.seed if cfg else "none"
    digest = cfg.digest() if cfg else "none"
    header = (
        f"{MAGIC} seed={seed} digest={digest} records={len(trace.queries)} "
        f"users={len(trace.users)} checksum={checksum} config={config_json}"
    )
    if hasattr(path, "write"):
        _emit(path, header, lines)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            _emit(fh, header, lines)
    return checksum


def _emit(fh: IO[str], header: str, lines: list[str]) -> None:
    fh.write(header + "\n")
    for line in lines:
        fh.write(line + "\n")


def _ints(field: str, lineno: int, name: str) -> list[int]:
    try:
        return [int(v) for v in field.split(";")]
    except ValueError:
        raise TraceFormatError(lineno, f"bad {name} field {field!r}")


def read_trace(path: str | os.PathLike | IO[str], verify_checksum: bool = True) -> WorkloadTrace:
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    if not raw:
        raise TraceFormatError(1, "empty file")
    m = _HEADER.match(raw[0])
    if m is None:
        raise TraceFormatError(1, "missing or malformed header")
    try:
        cfg_dict = json.loads(m["config"])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(1, f"config is not JSON: {exc}")
    cfg = WorkloadConfig(**cfg_dict) if cfg_dict else None
    if cfg is not None and cfg.digest() != m["digest"]:
        raise TraceFormatError(1, "config digest does not match config")

    users: dict[int, UserProfile] = {}
    queries: list[EnmeshedQuery] = []
    groups: list[tuple[int, int]] = []
    body = raw[1:]
    for lineno, line in enumerate(body, start=2):
        parts = line.split(",")
        if parts[0] == "U":
            if queries:
                raise TraceFormatError(lineno, "user record after query records")
            if len(parts) != 5:
                raise TraceFormatError(lineno, f"user record has {len(parts)} fields, expected 5")
            try:
                uid, row, col = int(parts[1]), int(parts[2]), int(parts[3])
                sports = {}
                for pair in parts[4].split(";"):
                    s, r = pair.split(":")
                    sports[int(s)] = int(r)
            except ValueError:
                raise TraceFormatError(lineno, "malformed user record")
            users[uid] = UserProfile(uid, (row, col), sports)
            continue
        if len(parts) != 10:
            raise TraceFormatError(lineno, f"query record has {len(parts)} fields, expected 10")
        try:
            idx, uid, sport, lb, ub, gid, gsize = (int(parts[i]) for i in (0, 1, 4, 6, 7, 8, 9))
        except ValueError:
            raise TraceFormatError(lineno, "non-integer field in query record")
        locs = _ints(parts[2], lineno, "locations")
        times = _ints(parts[3], lineno, "time slots")
        ratings = _ints(parts[5], lineno, "ratings")
        if len(locs) > 2 or len(times) > 2 or len(ratings) > 2:
            raise TraceFormatError(lineno, "more than two values in a multi-valued field")
        if idx != len(queries):
            raise TraceFormatError(lineno, f"arrival index {idx} out of sequence")
        if uid not in users:
            raise TraceFormatError(lineno, f"unknown user {uid}")
        try:
            card = CardinalityRange(lb, ub)
        except ValueError as exc:
            raise TraceFormatError(lineno, str(exc))
        queries.append(
            EnmeshedQuery(
                query_id=idx,
                user=uid,
                selections={"location": locs, "time": times, "sport": (sport,)},
                cardinality=card,
                joins=(JoinPredicate("rating", "in", frozenset(ratings)),),
                arrival_index=idx,
            )
        )
        groups.append((gid, gsize))

    end = len(raw) + 1
    if len(queries) != int(m["records"]):
        raise TraceFormatError(end, f"expected {m['records']} query records, found {len(queries)} (truncated?)")
    if len(users) != int(m["users"]):
        raise TraceFormatError(end, f"expected {m['users']} user records, found {len(users)}")
    if verify_checksum and trace_checksum(body) != m["checksum"]:
        raise TraceFormatError(end, "checksum mismatch")
    return WorkloadTrace(queries=queries, users=users, groups=groups, config=cfg)


def header_fields(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    m = _HEADER.match(first)
    if m is None:
        raise TraceFormatError(1, "missing or malformed header")
    return m.groupdict()


def matches_regeneration(path: str | os.PathLike) -> bool:
    """Regenerate from the header's config and seed; compare checksums."""
    fields = header_fields(path)
    cfg = WorkloadConfig(**json.loads(fields["config"]))
    return trace_checksum(trace_lines(generate_trace(cfg))) == fields["checksum"]
