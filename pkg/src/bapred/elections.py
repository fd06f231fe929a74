"""Group leader elections and conciliation with a core set.

Each election has a pure decision function (raising when no leader can be
chosen) and a generator that runs it inside the round engine. Generators
never raise on a failed election; they return an ``ElectionOutcome`` whose
``leader`` is ``None`` and whose ``error`` names the reason.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .engine import ALL


class ElectionError(Exception):
    pass


class NoQualifiedLeader(ElectionError):
    pass


class NoMajorityLeader(ElectionError):
    pass


class EmptyCandidateSet(ElectionError):
    pass


class NoProofReceived(ElectionError):
    pass


@dataclass(frozen=True)
class ElectionOutcome:
    leader: int | None
    rounds: int
    error: str | None = None


def ceil_sqrt_mult(c: int, n: int) -> int:
    """ceil(c * sqrt(n)) in exact integer arithmetic."""
    target = c * c * n
    r = math.isqrt(target)
    return r if r * r == target else r + 1


def floor_sqrt_mult(c: int, n: int) -> int:
    return math.isqrt(c * c * n)


def list_cap(n: int) -> int:
    return ceil_sqrt_mult(30, n)


def is_large_group(size: int, n: int) -> bool:
    # |G| >= 60 sqrt(n)
    return size * size >= 3600 * n


def vote_threshold(n: int) -> int:
    """Shares needed for a vote proof: ceil((n + 1) / 2)."""
    return n // 2 + 1


# ---------------------------------------------------------------- pure parts

def tally_bits(group: Sequence[int], votes: Iterable[np.ndarray]) -> np.ndarray:
    counts = np.zeros(len(group), dtype=np.int64)
    for bits in votes:
        if len(bits) == len(group):
            counts += bits
    return counts


def smallest_qualified(group: Sequence[int], counts: np.ndarray, n: int) -> int:
    """Smallest G[j] with more than n/2 votes."""
    hits = np.flatnonzero(2 * counts > n)
    if len(hits) == 0:
        raise NoQualifiedLeader(f"no member of group {group[0]}.. has > n/2 votes")
    return group[int(hits[0])]


def majority_leader(group: Sequence[int], announced: Mapping[int, int]) -> int:
    """The leader announced by more than |G|/2 group members."""
    members = set(group)
    counts = Counter(v for s, v in announced.items() if s in members)
    for leader, c in counts.items():
        if 2 * c > len(group):
            return leader
    raise NoMajorityLeader("no announced leader has a group majority")


def lvote_list(row: np.ndarray, group: Sequence[int], n: int) -> tuple[int, ...]:
    """The smallest predicted-honest group members, capped at ceil(30 sqrt n)."""
    cap = list_cap(n)
    out = []
    for p in group:
        if row[p - 1]:
            out.append(p)
            if len(out) == cap:
                break
    return tuple(out)


def candidate_list(group: Sequence[int], lists: Iterable[tuple[int, ...]], n: int) -> tuple[int, ...]:
    """Members named by more than n/2 lists, truncated to the cap.

    Lists longer than the cap cannot come from an honest sender and are ignored.
    """
    members = set(group)
    cap = list_cap(n)
    counts: Counter = Counter()
    for lst in lists:
        if len(lst) <= cap:
            counts.update(p for p in lst if p in members)
    chosen = sorted(p for p, c in counts.items() if 2 * c > n)[:cap]
    if not chosen:
        raise EmptyCandidateSet("no group member reached n/2 list votes")
    return tuple(chosen)


def conciliate(received: Mapping[int, tuple[Hashable, Sequence[int]]], own_list: Sequence[int]):
    """Conciliation output given every (value, list) pair a process received.

    Edge a -> b exists when b sent a list containing a. Each process j gets
    the smallest value among processes that reach it (j included); the
    output is the majority of those minima over ``own_list``, ties to the
    smallest value.
    """
    children: dict[int, list[int]] = {}
    for b, (_, lst) in received.items():
        for a in lst:
            children.setdefault(a, []).append(b)
    best: dict[int, Hashable] = {}
    for a in sorted(received, key=lambda s: (received[s][0], s)):
        value = received[a][0]
        if a in best:
            continue
        stack = [a]
        best[a] = value
        while stack:
            x = stack.pop()
            for y in children.get(x, ()):
                if y not in best:
                    best[y] = value
                    stack.append(y)
    tally = Counter(best[j] for j in own_list if j in best)
    if not tally:
        return None
    top = max(tally.values())
    return min(v for v, c in tally.items() if c == top)


# ------------------------------------------------------- engine sub-protocols

def _group_bits(ctx, group: Sequence[int]) -> np.ndarray:
    idx = np.asarray(group) - 1
    return np.asarray(ctx.row[idx], dtype=bool)


def simple_election(ctx, group: Sequence[int], scope: tuple = ()):
    """One round: broadcast the group slice of the own prediction row."""
    inbox = yield [(ALL, "pred", scope, (_group_bits(ctx, group),))]
    counts = tally_bits(group, (b[0] for b in inbox.get("pred", scope).values()))
    try:
        return ElectionOutcome(smallest_qualified(group, counts, ctx.n), 1)
    except NoQualifiedLeader as exc:
        return ElectionOutcome(None, 1, type(exc).__name__)


class PreprocessedElections:
    """Answers any group's election locally from exchanged full rows."""

    def __init__(self, n: int, rows: Iterable[np.ndarray]):
        self.n = n
        counts = np.zeros(n, dtype=np.int64)
        for r in rows:
            if len(r) == n:
                counts += r
        self.counts = counts

    def elect(self, group: Sequence[int]) -> ElectionOutcome:
        try:
            leader = smallest_qualified(group, self.counts[np.asarray(group) - 1], self.n)
            return ElectionOutcome(leader, 0)
        except NoQualifiedLeader as exc:
            return ElectionOutcome(None, 0, type(exc).__name__)


def prediction_exchange(ctx, scope: tuple = ("pre",)):
    """One round broadcasting full rows; returns a local election oracle."""
    inbox = yield [(ALL, "pred", scope, (np.asarray(ctx.row, dtype=bool),))]
    rows = [b[0] for b in inbox.get("pred", scope).values()]
    return PreprocessedElections(ctx.n, rows)


def small_group_election(ctx, group: Sequence[int], scope: tuple = ()):
    """Two rounds: bits to the committee, then committee announces."""
    members = tuple(group)
    inbox = yield [(members, "vote", scope, (_group_bits(ctx, group),))]
    out = []
    if ctx.pid in members:
        counts = tally_bits(group, (b[0] for b in inbox.get("vote", scope).values()))
        try:
            out = [(ALL, "leader", scope, (smallest_qualified(group, counts, ctx.n),))]
        except NoQualifiedLeader:
            pass
    inbox = yield out
    announced = {s: b[0] for s, b in inbox.get("leader", scope).items()}
    try:
        return ElectionOutcome(majority_leader(group, announced), 2)
    except NoMajorityLeader as exc:
        return ElectionOutcome(None, 2, type(exc).__name__)


def conciliation(ctx, value, own_list: Sequence[int], members, scope: tuple = (),
                 kind: str = "concil"):
    """One round of conciliation among ``members`` (a pid tuple or ALL)."""
    inbox = yield [(members, kind, scope, (value, tuple(own_list)))]
    got = inbox.get(kind, scope)
    if members is not ALL:
        allowed = set(members)
        got = {s: b for s, b in got.items() if s in allowed}
    return conciliate(got, own_list)


def large_group_election(ctx, group: Sequence[int], scope: tuple = ()):
    """Three rounds: capped lists, conciliation in the group, announcement."""
    members = tuple(group)
    inbox = yield [(members, "lvote", scope, (lvote_list(ctx.row, group, ctx.n),))]
    mine = None
    error = None
    if ctx.pid in members:
        lists = (b[0] for b in inbox.get("lvote", scope).values())
        try:
            mine = candidate_list(group, lists, ctx.n)
            ctx.note("candidate_list", (scope, mine))
        except EmptyCandidateSet as exc:
            error = type(exc).__name__
    out = [] if mine is None else [(members, "concil_id", scope, (mine[0], mine))]
    inbox = yield out
    winner = None
    if mine is not None:
        got = {s: b for s, b in inbox.get("concil_id", scope).items() if s in set(members)}
        winner = conciliate(got, mine)
    inbox = yield [] if winner is None else [(ALL, "leader", scope, (winner,))]
    announced = {s: b[0] for s, b in inbox.get("leader", scope).items()}
    try:
        return ElectionOutcome(majority_leader(group, announced), 3)
    except NoMajorityLeader as exc:
        return ElectionOutcome(None, 3, error or type(exc).__name__)


# ------------------------------------------------------ authenticated voting

def _vote_shares(ctx, candidates: Iterable[int], scope: tuple):
    k = vote_threshold(ctx.n)
    out = []
    for p in candidates:
        if ctx.row[p - 1]:
            out.append((p, "avote", scope, (p, ctx.key.share_sign(k, ("vote", p)))))
    return out


def _maybe_proof(ctx, inbox, scope: tuple):
    k = vote_threshold(ctx.n)
    msg = ("vote", ctx.pid)
    shares = [b[1] for s, b in inbox.get("avote", scope).items()
              if b[0] == ctx.pid and ctx.scheme.share_verify(s, k, msg, b[1])]
    if len(shares) < k:
        return None
    return ctx.scheme.combine(k, shares)


def _proven(ctx, inbox, scope: tuple) -> set[int]:
    k = vote_threshold(ctx.n)
    return {s for s, b in inbox.get("vote_proof", scope).items()
            if b[0] == s and ctx.scheme.verify(k, ("vote", s), b[1])}


def authenticated_election(ctx, group: Sequence[int], scope: tuple = ()):
    """Two rounds: vote shares to predicted-honest members, then proofs."""
    inbox = yield _vote_shares(ctx, group, scope)
    out = []
    if ctx.pid in group:
        proof = _maybe_proof(ctx, inbox, scope)
        if proof is not None:
            out = [(ALL, "vote_proof", scope, (ctx.pid, proof))]
    inbox = yield out
    proven = _proven(ctx, inbox, scope)
    try:
        return ElectionOutcome(smallest_proven(group, proven), 2)
    except NoProofReceived as exc:
        return ElectionOutcome(None, 2, type(exc).__name__)


def smallest_proven(group: Sequence[int], proven: set[int]) -> int:
    for p in group:
        if p in proven:
            return p
    raise NoProofReceived("no group member showed a valid vote proof")


class PreprocessedAuthElections:
    def __init__(self, proven: set[int]):
        self.proven = frozenset(proven)

    def elect(self, group: Sequence[int]) -> ElectionOutcome:
        try:
            return ElectionOutcome(smallest_proven(group, self.proven), 0)
        except NoProofReceived as exc:
            return ElectionOutcome(None, 0, type(exc).__name__)


def authenticated_exchange(ctx, scope: tuple = ("avote",)):
    """The vote exchange over all processes; returns a local oracle."""
    inbox = yield _vote_shares(ctx, range(1, ctx.n + 1), scope)
    proof = _maybe_proof(ctx, inbox, scope)
    inbox = yield [] if proof is None else [(ALL, "vote_proof", scope, (ctx.pid, proof))]
    return PreprocessedAuthElections(_proven(ctx, inbox, scope))


MODES = ("unauth_simple", "unauth_subcubic", "auth")


def dispatch_election(ctx, group: Sequence[int], mode: str, scope: tuple = ()):
    if mode == "unauth_simple":
        return (yield from simple_election(ctx, group, scope))
    if mode == "unauth_subcubic":
        if is_large_group(len(group), ctx.n):
            return (yield from large_group_election(ctx, group, scope))
        return (yield from small_group_election(ctx, group, scope))
    if mode == "auth":
        return (yield from authenticated_election(ctx, group, scope))
    raise ValueError(f"unknown election mode {mode!r}")
