"""Byzantine strategies and fault placement.

Strategies see every honest message of the current round before choosing
their own (rushing). They sign only with faulty keys and can only combine
signature shares they observed or produced, so whatever they send passes
through the same validity checks honest messages do.
"""

from __future__ import annotations

import numpy as np

from . import wire
from .crypto import CombineError, PartialSig
from .engine import ALL
from .predictions import m_grouping


class UnknownStrategy(ValueError):
    pass


PLACEMENT_RULES = ("first", "spread", "target_smallest_per_group")


def place_faults(n: int, f: int, rule: str = "first", m: int | None = None) -> frozenset:
    if not 0 <= f <= n:
        raise ValueError(f"need 0 <= f <= n, got f={f}")
    if f == 0:
        return frozenset()
    if rule == "first":
        return frozenset(range(1, f + 1))
    if rule == "spread":
        return frozenset(i * n // f + 1 for i in range(f))
    if rule == "target_smallest_per_group":
        groups = m_grouping(n, min(n, m or f))
        out: list[int] = []
        depth = 0
        while len(out) < f:
            for g in groups:
                if depth < len(g) and len(out) < f:
                    out.append(g[depth])
            depth += 1
        return frozenset(out)
    raise ValueError(f"unknown placement rule {rule!r}")


def _swap_value(message, new):
    if isinstance(message, tuple) and message and message[0] in ("certify", "commit", "decide"):
        return (message[0], new) + message[2:]
    return message


class Strategy:
    """Base class: bookkeeping shared by the concrete strategies."""

    name = "base"

    def setup(self, view) -> None:
        self.view = view
        self.n = view.n
        self.byz = sorted(view.fault_set)
        self.honest = tuple(view.honest)
        half = len(self.honest) // 2
        self.lower = self.honest[:half]
        self.upper = self.honest[half:]
        self.rng = view.rng
        self.queue: dict[int, list] = {}
        self.protocol = getattr(view, "protocol", None)
        self.t = view.t

    # helpers
    def resign(self, sender: int, sig, new_message=None):
        """A partial signature by ``sender`` for the same purpose as ``sig``."""
        if not isinstance(sig, PartialSig):
            return sig
        msg = sig.message if new_message is None else new_message
        return self.view.keys[sender].share_sign(sig.k, msg)

    def variant(self, sender: int, kind: str, body: tuple, value=None):
        """``body`` as ``sender`` would send it, optionally with a new value."""
        fields = wire.field_types(kind)
        out = []
        old = body[0] if fields and fields[0] == wire.VALUE else None
        for ft, x in zip(fields, body):
            if ft == wire.VALUE and value is not None:
                x = value
            elif ft == wire.SIG and isinstance(x, PartialSig):
                msg = x.message
                if value is not None and old is not None:
                    msg = _swap_value(msg, value)
                x = self.resign(sender, x, msg)
            elif ft == wire.BITS and value is not None:
                x = np.asarray(x, dtype=bool).copy()
                if len(x):
                    x[:] = bool(value)
            out.append(x)
        return tuple(out)

    def templates(self, traffic):
        """One honest body per (kind, scope) broadcast or multicast this round."""
        seen = {}
        for sender, dest, kind, scope, body in traffic:
            key = (kind, scope)
            if key not in seen:
                seen[key] = (dest, body)
        return seen

    def group_of(self, scope):
        """Members of the election group a scope refers to, if known."""
        from .unauth import choose_m as unauth_m
        from .auth import choose_m as auth_m
        if not (isinstance(scope, tuple) and len(scope) == 3 and scope[1] == "el"):
            return None
        phi, _, j = scope
        mode = "cubic" if self.protocol == "unauth-cubic" else "subcubic"
        m = unauth_m(mode, self.n, self.t, 2 ** (phi - 1)) if self.protocol != "auth" else auth_m(
            self.n, self.t, 2 ** (phi - 1))
        if m is None:
            return None
        return m_grouping(self.n, m)[j]

    def act(self, round_no: int, traffic):
        out = self.queue.pop(round_no, [])
        out.extend(self.react(round_no, traffic) or ())
        return out

    def later(self, round_no: int, envelopes):
        self.queue.setdefault(round_no, []).extend(envelopes)

    def react(self, round_no, traffic):
        return []


class Silent(Strategy):
    name = "silent"

    def act(self, round_no, traffic):
        return []


class EquivocateValues(Strategy):
    """Mirror every honest message, value 0 to one half and 1 to the other."""

    name = "equivocate_values"

    def react(self, round_no, traffic):
        out = []
        for (kind, scope), (dest, body) in self.templates(traffic).items():
            for b in self.byz:
                for value, half in ((0, self.lower), (1, self.upper)):
                    if half:
                        out.append((b, half, kind, scope, self.variant(b, kind, body, value)))
        return out


class VoteStuffing(Strategy):
    """Vote for faulty processes, against honest ones, and forge nothing else."""

    name = "vote_stuff_elections"

    def setup(self, view):
        super().setup(view)
        self.fake_row = np.zeros(self.n, dtype=bool)
        for b in self.byz:
            self.fake_row[b - 1] = True
        self.avotes: dict[tuple, list] = {}

    def react(self, round_no, traffic):
        out = []
        byz_set = set(self.byz)
        for sender, dest, kind, scope, body in traffic:
            if kind == "avote" and body[0] in byz_set:
                self.avotes.setdefault((scope, body[0]), []).append(body[1])
        for (kind, scope), (dest, body) in self.templates(traffic).items():
            group = self.group_of(scope)
            for b in self.byz:
                if kind == "pred":
                    bits = self.fake_row if len(body[0]) == self.n else self._slice(group, len(body[0]))
                    out.append((b, ALL, kind, scope, (bits,)))
                elif kind == "vote":
                    out.append((b, dest, kind, scope, (self._slice(group, len(body[0])),)))
                elif kind == "lvote" and group is not None:
                    ids = tuple(p for p in group if p in byz_set)
                    out.append((b, dest, kind, scope, (ids,)))
                elif kind == "leader" and group is not None:
                    fake = [p for p in group if p in byz_set]
                    if fake:
                        out.append((b, ALL, kind, scope, (fake[0],)))
                elif kind == "avote":
                    for target in self.byz:
                        share = self.view.keys[b].share_sign(body[1].k, ("vote", target))
                        self.avotes.setdefault((scope, target), []).append(share)
        # combine stuffed votes next round and show proofs to half the processes
        for (scope, target), shares in list(self.avotes.items()):
            if shares and isinstance(shares[0], PartialSig):
                try:
                    proof = self.view.scheme.combine(shares[0].k, shares)
                except CombineError:
                    continue
                self.later(round_no + 1, [(target, self.lower, "vote_proof", scope, (target, proof))])
                del self.avotes[(scope, target)]
        return out

    def _slice(self, group, length):
        if group is None or len(group) != length:
            return np.zeros(length, dtype=bool)
        return self.fake_row[np.asarray(group) - 1]


class _Leading(Strategy):
    """Shared logic for faulty leaders in validated agreement views."""

    def setup(self, view):
        super().setup(view)
        self.q = self.n - self.t
        self.certs: dict = {}
        self.nocommon: list = []

    def _collect_certs(self, traffic):
        for sender, dest, kind, scope, body in traffic:
            if kind == "certified":
                self.certs.setdefault(body[0], body[1])
            elif kind == "nocommon":
                self.nocommon.append(body[0])
        if None not in self.certs and self.nocommon:
            shares = list(self.nocommon)
            k = self.nocommon[0].k
            shares += [self.view.keys[b].share_sign(k, ("certify", None)) for b in self.byz]
            try:
                self.certs[None] = self.view.scheme.combine(k, shares)
            except CombineError:
                pass

    def _cert_for(self, v):
        return self.certs.get(v, self.certs.get(None))

    def _addressed(self, traffic, kinds):
        byz = set(self.byz)
        for sender, dest, kind, scope, body in traffic:
            if kind not in kinds:
                continue
            if isinstance(dest, int):
                if dest in byz:
                    yield dest, kind, scope, body

    def _combine(self, shares):
        try:
            return self.view.scheme.combine(self.q, shares)
        except CombineError:
            return None

    def lead(self, round_no, traffic, targets_for):
        """Act as leader wherever honest processes named a faulty one.

        ``targets_for(step, value)`` picks receivers for each step.
        """
        self._collect_certs(traffic)
        shares: dict = {}
        for b, kind, scope, body in self._addressed(traffic, ("val", "valc", "ack", "dshare")):
            shares.setdefault((b, kind, scope), []).append(body)
        out = []
        for (b, kind, scope), bodies in shares.items():
            j = scope[1]
            if kind in ("val", "valc"):
                sigs = [x[-1] for x in bodies]
                sigs += [self.view.keys[p].share_sign(self.q, ("leader", b, j)) for p in self.byz]
                lp = self._combine(sigs)
                if lp is None:
                    continue
                self.lps = getattr(self, "lps", {})
                self.lps[(b, j)] = lp
                for v in (0, 1):
                    cert = self._cert_for(v)
                    if cert is not None:
                        vsig = self.view.keys[b].share_sign(1, ("propose", v, j))
                        self.later(round_no + 1, [(b, targets_for("propose", v), "propose", scope,
                                                   (v, cert, lp, vsig))])
            else:
                lp = getattr(self, "lps", {}).get((b, j))
                if lp is None:
                    continue
                by_v: dict = {}
                for v, s in bodies:
                    by_v.setdefault(v, []).append(s)
                for v, sigs in by_v.items():
                    msg = ("commit", v, j) if kind == "ack" else ("decide", v)
                    sigs = sigs + [self.view.keys[p].share_sign(self.q, msg) for p in self.byz]
                    sig = self._combine(sigs)
                    if sig is None:
                        continue
                    nxt = "commit" if kind == "ack" else "decide"
                    self.later(round_no + 1, [(b, targets_for(nxt, v), nxt, scope, (v, sig, lp))])
                    if nxt == "decide":
                        self.later(round_no + 1, [(b, self.honest[:1], "final", ("final",), (v, sig))])
        return out


class SplitLeaderViews(_Leading):
    """Conflicting king, leader and proposal messages to the two halves."""

    name = "split_leader_views"

    def react(self, round_no, traffic):
        out = self.lead(round_no, traffic, lambda step, v: self.lower if v == 0 else self.upper)
        for (kind, scope), (dest, body) in self.templates(traffic).items():
            if kind in ("king", "decision", "gc1", "gc2"):
                for b in self.byz:
                    out.append((b, self.lower, kind, scope, (0,)))
                    out.append((b, self.upper, kind, scope, (1,)))
            elif kind == "leader":
                group = self.group_of(scope)
                if group:
                    for b in self.byz:
                        out.append((b, self.lower, kind, scope, (group[0],)))
                        out.append((b, self.upper, kind, scope, (group[-1],)))
            elif kind in ("certify",):
                for b in self.byz:
                    for v, half in ((0, self.lower), (1, self.upper)):
                        out.append((b, half, kind, scope, self.variant(b, kind, body, v)))
        return out


class CertificateWithhold(_Leading):
    """Behave honestly-looking but show everything to half the processes."""

    name = "certificate_withhold"

    def react(self, round_no, traffic):
        out = self.lead(round_no, traffic, lambda step, v: self.lower if v == 0 else ())
        for (kind, scope), (dest, body) in self.templates(traffic).items():
            if kind in ("propose", "proposec", "commit", "decide", "final"):
                continue
            for b in self.byz:
                if self.lower:
                    out.append((b, self.lower, kind, scope, self.variant(b, kind, body)))
        return out


class RandomBytes(Strategy):
    """Malformed and random well-formed payloads to random processes."""

    name = "random_bytes"

    def setup(self, view):
        super().setup(view)
        self.sigs: list = []

    def _random_field(self, ft):
        r = self.rng
        if ft == wire.VALUE:
            return r.randrange(256)
        if ft == wire.PID:
            return r.randrange(1, self.n + 1)
        if ft == wire.VIEW:
            return r.randrange(64)
        if ft == wire.BITS:
            return np.array([r.random() < 0.5 for _ in range(r.randrange(1, self.n + 1))], dtype=bool)
        if ft == wire.IDSET:
            return tuple(sorted(r.sample(range(1, self.n + 1), r.randrange(0, min(self.n, 6) + 1))))
        if ft == wire.SIG:
            return r.choice(self.sigs) if self.sigs else b"\x00"
        return None

    def _junk(self):
        r = self.rng
        return r.choice([b"\xff" * r.randrange(1, 9), None, (), (r.random(),), ("x", -1, 10**9), [1, 2]])

    def react(self, round_no, traffic):
        out = []
        scopes = []
        for sender, dest, kind, scope, body in traffic:
            scopes.append(scope)
            for x in body:
                if isinstance(x, PartialSig) or type(x).__name__ == "ThresholdSig":
                    if len(self.sigs) < 256:
                        self.sigs.append(x)
        if not scopes:
            return out
        kinds = list(wire.kinds())
        for b in self.byz:
            for _ in range(3):
                kind = self.rng.choice(kinds + ["bogus"])
                scope = self.rng.choice(scopes)
                dest = self.rng.choice([ALL, self.rng.choice(self.honest) if self.honest else b])
                if kind == "bogus" or self.rng.random() < 0.3:
                    body = self._junk()
                else:
                    body = tuple(self._random_field(ft) for ft in wire.field_types(kind))
                out.append((b, dest, kind, scope, body))
        return out


STRATEGIES = {
    cls.name: cls
    for cls in (Silent, EquivocateValues, VoteStuffing, SplitLeaderViews, CertificateWithhold, RandomBytes)
}


def strategy(name: str) -> Strategy:
    try:
        return STRATEGIES[name]()
    except KeyError:
        raise UnknownStrategy(f"unknown adversary strategy {name!r}") from None
