"""Unauthenticated agreement: graded consensus, phase king variants,
committee agreement over leader vectors, and the guess-and-double driver."""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from .elections import dispatch_election, prediction_exchange
from .engine import ALL, idle, parallel
from .predictions import m_grouping

CUBIC = "cubic"
SUBCUBIC = "subcubic"
DEFAULT_EPSILON = {CUBIC: Fraction(1, 12), SUBCUBIC: Fraction(1, 24)}
RESILIENCE = {CUBIC: Fraction(1, 3), SUBCUBIC: Fraction(1, 6)}
ALPHA = 8  # smallest a with committee_rounds(3k + 1) <= a k for all k < 2000


def default_t(n: int, mode: str, epsilon=None) -> int:
    """Largest t strictly below (r - eps) n."""
    eps = DEFAULT_EPSILON[mode] if epsilon is None else Fraction(epsilon)
    bound = (RESILIENCE[mode] - eps) * n
    return max(0, math.ceil(bound) - 1)


def phase_count(t: int) -> int:
    return math.ceil(math.log2(max(t, 1))) + 1


def choose_m(mode: str, n: int, t: int, khat: int) -> int | None:
    """Smallest group count whose good-group count is provably above 2m/3.

    A group can fail by holding a misclassified process (at most khat of
    them) or by holding too many faulty members; the second kind is at most
    t divided by the faulty members such a group needs. Returns None when no
    m <= n clears the bound; the phase then skips the prediction branch.
    """
    for m in range(1, n + 1):
        size = n // m
        need = size if mode == CUBIC else (size + 1) // 2
        bad = khat + (t // need if need else t)
        if 3 * bad < m:
            return m
    return None


def _plurality(values) -> object:
    tally = Counter(values)
    if not tally:
        return None
    top = max(tally.values())
    return min(v for v, c in tally.items() if c == top)


# ------------------------------------------------------------ graded consensus

def graded_consensus(ctx, v, scope: tuple, dest=ALL, senders=None, size=None, t=None):
    """Two-round graded consensus; returns (value, grade).

    A value seen n - t times in round one is echoed; n - t echoes give grade
    1 and t + 1 echoes give grade 0. Otherwise the round-one plurality is
    returned with grade 0.

    ``senders`` optionally restricts whose messages count; ``size`` and ``t``
    default to the whole system.
    """
    size = ctx.n if size is None else size
    t = ctx.t if t is None else t
    inbox = yield [(dest, "gc1", scope, (v,))]
    got = inbox.get("gc1", scope)
    if senders is not None:
        got = {s: b for s, b in got.items() if s in senders}
    tally = Counter(b[0] for b in got.values())
    first = tally
    out = []
    for x, c in tally.items():
        if c >= size - t:
            out = [(dest, "gc2", scope, (x,))]
            break
    inbox = yield out
    got = inbox.get("gc2", scope)
    if senders is not None:
        got = {s: b for s, b in got.items() if s in senders}
    tally = Counter(b[0] for b in got.values())
    if tally:
        x, c = min(tally.items(), key=lambda kv: (-kv[1], kv[0]))
        if c >= size - t:
            return x, 1
        if c >= t + 1:
            return x, 0
    # nothing graded: fall back on the first-round plurality so that runs
    # without faults still converge on one value
    fallback = _plurality(first.elements())
    return (v if fallback is None else fallback), 0


# ---------------------------------------------------- phase king over a roster

BASE_SIZE = 8


@lru_cache(maxsize=None)
def roster_rounds(size: int) -> int:
    """Rounds used by ``roster_ba`` on a roster of ``size`` roles."""
    if size <= 1:
        return 0
    if size <= BASE_SIZE:
        return 3 * ((size - 1) // 3 + 1)
    hi = (size + 1) // 2
    return 6 + roster_rounds(hi) + roster_rounds(size - hi)


class Roster:
    """A process's own view of a role list (entries may be None)."""

    def __init__(self, entries: Sequence[int | None]):
        self.entries = tuple(entries)
        self.role_of: dict[int, int] = {}
        for r, p in enumerate(self.entries):
            if p is not None and p not in self.role_of:
                self.role_of[p] = r

    def __len__(self):
        return len(self.entries)

    def pids(self, lo: int, hi: int) -> tuple[int, ...]:
        return tuple(sorted({p for p in self.entries[lo:hi] if p is not None}))

    def senders(self, lo: int, hi: int) -> set[int]:
        return {p for p, r in self.role_of.items() if lo <= r < hi}


def roster_ba(ctx, v, roster: Roster, lo: int, hi: int, scope: tuple):
    """Recursive phase king among roles [lo, hi); caller holds a role there.

    Agreement and strong unanimity hold when fewer than a third of the
    roles are faulty. It always halts after ``roster_rounds(hi - lo)``
    rounds, with O(size) bits per role per level.
    """
    size = hi - lo
    if size <= 1:
        return v
    dest = roster.pids(lo, hi)
    members = roster.senders(lo, hi)
    ts = (size - 1) // 3
    if size <= BASE_SIZE:
        for k in range(ts + 1):
            sc = scope + (k,)
            v, g = yield from graded_consensus(ctx, v, sc, dest, members, size, ts)
            king = roster.entries[lo + k]
            out = [(dest, "king", sc, (v,))] if king == ctx.pid else []
            inbox = yield out
            if g == 0 and king is not None and roster.role_of.get(king) == lo + k:
                msg = inbox.get("king", sc).get(king)
                if msg is not None:
                    v = msg[0]
        return v
    mid = lo + (size + 1) // 2
    mine = roster.role_of.get(ctx.pid)
    for h, (a, b) in enumerate(((lo, mid), (mid, hi))):
        sc = scope + (h,)
        v, g = yield from graded_consensus(ctx, v, sc + ("gc",), dest, members, size, ts)
        if mine is not None and a <= mine < b:
            w = yield from roster_ba(ctx, v, roster, a, b, sc)
        else:
            w = None
            yield from idle(roster_rounds(b - a))
        inbox = yield [(dest, "king", sc, (w,))] if w is not None else []
        kings = roster.senders(a, b)
        plural = _plurality(b_[0] for s, b_ in inbox.get("king", sc).items() if s in kings)
        if g == 0 and plural is not None:
            v = plural
    return v


def committee_ba(ctx, v, leaders: Sequence[int | None], scope: tuple):
    """Agreement over a per-process leader vector, then a decision broadcast.

    Processes appearing in their own vector run ``roster_ba`` on it; the
    rest wait. Every process then outputs the majority of decisions sent by
    the entries of its own vector, counted per entry.
    """
    roster = Roster(leaders)
    size = len(roster)
    if ctx.pid in roster.role_of:
        w = yield from roster_ba(ctx, v, roster, 0, size, scope + ("ba",))
        out = [(ALL, "decision", scope, (w,))]
    else:
        yield from idle(roster_rounds(size))
        out = []
    inbox = yield out
    got = inbox.get("decision", scope)
    votes = [got[p][0] for p in leaders if p is not None and p in got]
    plural = _plurality(votes)
    return v if plural is None else plural


def committee_rounds(size: int) -> int:
    return roster_rounds(size) + 1


# ----------------------------------------------------------- early stopping

def prefix_size(n: int, budget: int) -> int:
    """Largest prefix roster whose committee run fits in ``budget`` rounds."""
    size = 0
    while size < n and committee_rounds(size + 1) <= budget:
        size += 1
    return size


def early_stopping_ba(ctx, v, budget: int, scope: tuple):
    """Committee agreement over the prefix roster p1..ps, s fit to the budget.

    Correct once fewer than s/3 of p1..ps are faulty, which holds for any
    f <= k whenever the budget is ALPHA * k. It costs O(budget) rounds and
    O(n s) messages, and returns the input unchanged when s is zero.
    """
    size = prefix_size(ctx.n, budget)
    if size == 0:
        return v
    return (yield from committee_ba(ctx, v, list(range(1, size + 1)), scope))


# ---------------------------------------------------------------- driver

def phase_plan(mode: str, n: int, t: int) -> list[tuple[int, int, int | None]]:
    plan = []
    for phi in range(1, phase_count(t) + 1):
        khat = 2 ** (phi - 1)
        plan.append((phi, khat, choose_m(mode, n, t, khat)))
    return plan


def unauth_agreement(ctx, mode: str = CUBIC):
    """Guess-and-double agreement with classification predictions."""
    v = ctx.input
    plan = phase_plan(mode, ctx.n, ctx.t)
    oracle = None
    if mode == CUBIC and any(m is not None for _, _, m in plan):
        ctx.mark(0, "prediction_exchange")
        oracle = yield from prediction_exchange(ctx)
    election_mode = "unauth_simple" if mode == CUBIC else "unauth_subcubic"
    decision = None
    for phi, khat, m in plan:
        ctx.mark(phi, "graded_consensus")
        v, g = yield from graded_consensus(ctx, v, (phi, "gc1"))
        ctx.mark(phi, "early_stopping")
        w = yield from early_stopping_ba(ctx, v, ALPHA * khat, (phi, "es"))
        if g == 0:
            v = w
        ctx.mark(phi, "graded_consensus")
        v, g = yield from graded_consensus(ctx, v, (phi, "gc2"))
        if m is not None:
            groups = m_grouping(ctx.n, m)
            ctx.mark(phi, "elections")
            if oracle is not None:
                outcomes = [oracle.elect(G) for G in groups]
            else:
                outcomes = yield from parallel(
                    dispatch_election(ctx, G, election_mode, (phi, "el", j))
                    for j, G in enumerate(groups)
                )
            leaders = [o.leader for o in outcomes]
            ctx.note("leaders", (phi, tuple(leaders)))
            ctx.mark(phi, "committee")
            w = yield from committee_ba(ctx, v, leaders, (phi, "cb"))
            if g == 0:
                v = w
        ctx.mark(phi, "graded_consensus")
        v, g = yield from graded_consensus(ctx, v, (phi, "gc3"))
        if decision is not None:
            return decision
        if g == 1:
            decision = v
    if decision is None:
        raise AssertionError("no decision after the last phase")
    return decision
