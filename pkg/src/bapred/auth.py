"""Authenticated agreement: strong-unanimity certificates, validated
agreement with leader proofs and expander forwarding, and the
guess-and-double driver on top of it."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .crypto import CombineError
from .elections import authenticated_exchange
from .engine import ALL
from .expander import build_expander
from .predictions import m_grouping

DEFAULT_EPSILON = Fraction(1, 6)
FINAL_SCOPE = ("final",)
ROUNDS_PER_VIEW = 6  # seven logical steps; the last overlaps the next view


def default_t(n: int, epsilon=DEFAULT_EPSILON) -> int:
    bound = (Fraction(1, 2) - Fraction(epsilon)) * n
    return max(0, math.ceil(bound) - 1)


def phase_count(t: int) -> int:
    return math.ceil(math.log2(max(t, 1))) + 1


def choose_m(n: int, t: int, khat: int) -> int | None:
    """Smallest m for which some group of the m-grouping must be 1-good."""
    for m in range(1, n + 1):
        if khat + t // (n // m) < m:
            return m
    return None


# ------------------------------------------------------------- certificates

def ex_valid(ctx, v, cert) -> bool:
    k = ctx.t + 1
    return ctx.scheme.verify(k, ("certify", v), cert) or ctx.scheme.verify(k, ("certify", None), cert)


def strong_certification(ctx, proposal, scope: tuple = ("cert",)):
    """Two rounds; returns (value, certificate) admissible under strong unanimity."""
    k = ctx.t + 1
    share = ctx.key.share_sign(k, ("certify", proposal))
    inbox = yield [(ALL, "certify", scope, (proposal, share))]
    by_value = defaultdict(list)
    for s, (v, psig) in inbox.get("certify", scope).items():
        if ctx.scheme.share_verify(s, k, ("certify", v), psig):
            by_value[v].append(psig)
    ready = sorted(v for v, shares in by_value.items() if len(shares) >= k)
    if ready:
        v = proposal if proposal in ready else ready[0]
        out = [(ALL, "certified", scope, (v, ctx.scheme.combine(k, by_value[v])))]
    else:
        out = [(ALL, "nocommon", scope, (ctx.key.share_sign(k, ("certify", None)),))]
    inbox = yield out
    for s, (v, cert) in sorted(inbox.get("certified", scope).items()):
        if ctx.scheme.verify(k, ("certify", v), cert):
            return v, cert
    shares = [b[0] for s, b in inbox.get("nocommon", scope).items()
              if ctx.scheme.share_verify(s, k, ("certify", None), b[0])]
    return proposal, ctx.scheme.combine(k, shares)


# ------------------------------------------------------- validated agreement

@dataclass
class VBAState:
    value: int
    excert: object
    commit_value: int | None = None
    commit_cert: object = None
    commit_view: int = 0
    decision: int | None = None
    decision_proof: object = None


class ValidatedAgreement:
    """One validated agreement instance whose views can be appended.

    Views are numbered globally, so commit certificates carry over between
    calls to ``run``. Each view takes seven logical steps; the decide step
    of a view shares its round with the value step of the next one.
    """

    def __init__(self, ctx, value, excert, graph):
        self.ctx = ctx
        self.q = ctx.n - ctx.t
        self.state = VBAState(value, excert)
        self.nbrs = tuple(graph.neighbors(ctx.pid))
        self.view = 0

    # validity helpers
    def _lp_ok(self, leader, j, lp) -> bool:
        return self.ctx.scheme.verify(self.q, ("leader", leader, j), lp)

    def _cc_ok(self, v, j, cc) -> bool:
        return 0 < j and self.ctx.scheme.verify(self.q, ("commit", v, j), cc)

    def _combine(self, shares):
        try:
            return self.ctx.scheme.combine(self.q, shares)
        except CombineError:
            return None

    def _value_msg(self, j, leader):
        st = self.state
        share = self.ctx.key.share_sign(self.q, ("leader", leader, j))
        if st.commit_cert is not None:
            return (leader, "valc", ("vba", j), (st.commit_value, st.commit_view, st.commit_cert, share))
        return (leader, "val", ("vba", j), (st.value, st.excert, share))

    def _take_decision(self, inbox, j, leader):
        if leader is None or self.state.decision is not None:
            return
        msg = inbox.get("decide", ("vba", j)).get(leader)
        if msg is None:
            return
        v, dp, lp = msg
        if self.ctx.scheme.verify(self.q, ("decide", v), dp) and self._lp_ok(leader, j, lp):
            self.state.decision, self.state.decision_proof = v, dp

    def run(self, leaders):
        """Run one view per entry of ``leaders``; returns (decision, proof)."""
        ctx, st, q = self.ctx, self.state, self.q
        me = ctx.pid
        carry: list = []
        prev = None
        for leader in leaders:
            self.view += 1
            j = self.view
            sc = ("vba", j)
            ctx.mark(ctx.engine_phase, "vba")
            # A: value plus leader-proof share to the own leader
            out = carry + ([self._value_msg(j, leader)] if leader is not None else [])
            inbox = yield out
            if prev is not None:
                self._take_decision(inbox, *prev)
            is_leader = leader == me
            lp = None
            out = []
            # B: the leader builds its proof and proposes
            if is_leader:
                shares, best = [], None
                for kind in ("valc", "val"):
                    for s, body in inbox.get(kind, sc).items():
                        share = body[-1]
                        if not ctx.scheme.share_verify(s, q, ("leader", me, j), share):
                            continue
                        if kind == "valc":
                            v, cv, cc = body[0], body[1], body[2]
                            if cv >= j or not self._cc_ok(v, cv, cc):
                                continue
                            if best is None or cv > best[1]:
                                best = (v, cv, cc)
                        elif not ex_valid(ctx, body[0], body[1]):
                            continue
                        shares.append(share)
                if len(shares) >= q:
                    lp = self._combine(shares)
                if lp is not None:
                    ctx.note("leader_proof", (j, me))
                    v = st.value if best is None else best[0]
                    vsig = ctx.key.share_sign(1, ("propose", v, j))
                    if best is not None:
                        out = [(ALL, "proposec", sc, (v, best[1], best[2], lp, vsig))]
                    else:
                        out = [(ALL, "propose", sc, (v, st.excert, lp, vsig))]
            inbox = yield out
            # C: accept the own leader's proposal and forward it
            accepted = None
            out = []
            if leader is not None:
                accepted = self._accept_proposal(inbox, sc, j, leader)
                if accepted is not None and self.nbrs:
                    out = [(self.nbrs, "fwd_propose", sc, (leader,) + accepted)]
            inbox = yield out
            # D: acknowledge unless a conflicting proven proposal arrived
            out = []
            if accepted is not None:
                v = accepted[0]
                conflict = any(
                    fv != v and self._proposal_ok(fl, fv, j, flp, fsig)
                    for _, (fl, fv, flp, fsig) in inbox.get_all("fwd_propose", sc)
                )
                if not conflict:
                    out = [(leader, "ack", sc, (v, ctx.key.share_sign(q, ("commit", v, j))))]
            inbox = yield out
            # E: the leader forms a commit certificate
            out = []
            if lp is not None:
                cc = self._certify(inbox, "ack", sc, lambda v: ("commit", v, j))
                if cc is not None:
                    out = [(ALL, "commit", sc, (cc[0], cc[1], lp))]
            inbox = yield out
            # F: store the leader's commit, forward it, send a decision share
            out = []
            if leader is not None:
                msg = inbox.get("commit", sc).get(leader)
                if msg is not None:
                    v, cc, clp = msg
                    if self._cc_ok(v, j, cc) and self._lp_ok(leader, j, clp):
                        self._store_commit(v, cc, j)
                        if self.nbrs:
                            out.append((self.nbrs, "fwd_commit", sc, (leader, v, cc, clp)))
                        out.append((leader, "dshare", sc, (v, ctx.key.share_sign(q, ("decide", v)))))
            inbox = yield out
            # G (shared with the next view's A): forwarded commits, decision proof
            for _, (fl, v, cc, flp) in inbox.get_all("fwd_commit", sc):
                if self._cc_ok(v, j, cc) and self._lp_ok(fl, j, flp):
                    self._store_commit(v, cc, j)
            carry = []
            if lp is not None:
                dp = self._certify(inbox, "dshare", sc, lambda v: ("decide", v))
                if dp is not None:
                    carry = [(ALL, "decide", sc, (dp[0], dp[1], lp))]
            prev = (j, leader)
        inbox = yield carry
        if prev is not None:
            self._take_decision(inbox, *prev)
        return st.decision, st.decision_proof

    def _accept_proposal(self, inbox, sc, j, leader):
        st = self.state
        msg = inbox.get("proposec", sc).get(leader)
        if msg is not None:
            v, cv, cc, plp, vsig = msg
            if (st.commit_view <= cv < j and self._cc_ok(v, cv, cc)
                    and self._proposal_ok(leader, v, j, plp, vsig)):
                return v, plp, vsig
        msg = inbox.get("propose", sc).get(leader)
        if msg is not None and st.commit_view == 0:
            v, cert, plp, vsig = msg
            if ex_valid(self.ctx, v, cert) and self._proposal_ok(leader, v, j, plp, vsig):
                return v, plp, vsig
        return None

    def _proposal_ok(self, leader, v, j, lp, vsig) -> bool:
        """A proposal counts only with a leader proof and the leader's own signature."""
        return (self.ctx.scheme.share_verify(leader, 1, ("propose", v, j), vsig)
                and self._lp_ok(leader, j, lp))

    def _certify(self, inbox, kind, sc, message):
        by_value = defaultdict(list)
        for s, (v, share) in inbox.get(kind, sc).items():
            if self.ctx.scheme.share_verify(s, self.q, message(v), share):
                by_value[v].append(share)
        for v in sorted(by_value):
            if len(by_value[v]) >= self.q:
                sig = self._combine(by_value[v])
                if sig is not None:
                    return v, sig
        return None

    def _store_commit(self, v, cc, j):
        st = self.state
        if j >= st.commit_view:
            st.commit_value, st.commit_cert, st.commit_view = v, cc, j


def validated_agreement(ctx, value, excert, leaders, graph=None):
    """Standalone validated agreement over one leader vector."""
    if graph is None:
        graph = build_expander(ctx.n, ctx.epsilon or DEFAULT_EPSILON)
    if not hasattr(ctx, "engine_phase"):
        ctx.engine_phase = 1
    vba = ValidatedAgreement(ctx, value, excert, graph)
    return (yield from vba.run(leaders))


# ----------------------------------------------------------------- driver

def phase_plan(n: int, t: int) -> list[tuple[int, int, int | None]]:
    return [(phi, 2 ** (phi - 1), choose_m(n, t, 2 ** (phi - 1)))
            for phi in range(1, phase_count(t) + 1)]


def auth_agreement(ctx):
    """Guess-and-double authenticated agreement with predictions."""
    eps = ctx.epsilon or DEFAULT_EPSILON
    graph = build_expander(ctx.n, eps)
    ctx.engine_phase = 0
    ctx.mark(0, "certification")
    value, cert = yield from strong_certification(ctx, ctx.input)
    plan = phase_plan(ctx.n, ctx.t)
    oracle = None
    if any(m is not None for _, _, m in plan):
        ctx.mark(0, "vote_exchange")
        oracle = yield from authenticated_exchange(ctx)
    vba = ValidatedAgreement(ctx, value, cert, graph)
    q = ctx.n - ctx.t
    for phi, khat, m in plan:
        ctx.engine_phase = phi
        leaders = list(range(1, min(khat + 1, ctx.n) + 1))
        if m is not None:
            leaders += [oracle.elect(G).leader for G in m_grouping(ctx.n, m)]
        ctx.note("leaders", (phi, tuple(leaders)))
        decision, proof = yield from vba.run(leaders)
        ctx.mark(phi, "decision_broadcast")
        if decision is not None:
            yield [(ALL, "final", FINAL_SCOPE, (decision, proof))]
            return decision
        yield []
    raise AssertionError("no decision after the last phase")


def adopt_finals(ctx, inner):
    """Wrap a process so any valid final decision is adopted on receipt.

    The adopting process rebroadcasts the decision and its proof once, then
    halts, so a decision shown to only some honest processes reaches all.
    """
    q = ctx.n - ctx.t
    try:
        out = next(inner)
    except StopIteration as stop:
        return stop.value
    while True:
        inbox = yield out
        try:
            out = inner.send(inbox)
        except StopIteration as stop:
            return stop.value
        for s, (v, dp) in sorted(inbox.get("final", FINAL_SCOPE).items()):
            if ctx.scheme.verify(q, ("decide", v), dp):
                inner.close()
                ctx.mark(ctx.engine_phase, "decision_broadcast")
                yield [(ALL, "final", FINAL_SCOPE, (v, dp))]
                return v


def auth_process(ctx):
    return adopt_finals(ctx, auth_agreement(ctx))
