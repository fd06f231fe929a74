"""Simulated (k, n)-threshold signatures.

Signatures are Python objects whose validity is decided by the issuing
scheme: a partial signature verifies only if the scheme minted it through
the signer's own key, and a combined signature verifies only if the scheme
produced it in ``combine``. Nobody can fabricate either object through the
public API, so unforgeability holds structurally and can be audited.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Hashable, Iterable

DEFAULT_KAPPA = 256

_MINT = object()


class CryptoError(Exception):
    pass


class ImpersonationAttempt(CryptoError):
    """A caller tried to sign with a key it does not hold."""


class CombineError(CryptoError):
    pass


class InsufficientShares(CombineError):
    pass


class MixedMessages(CombineError):
    pass


class DuplicateSigners(CombineError):
    pass


class PartialSig:
    __slots__ = ("signer", "k", "message", "scheme_id")

    def __init__(self, token, signer: int, k: int, message: Hashable, scheme_id: int):
        if token is not _MINT:
            raise ImpersonationAttempt("partial signatures are minted by signing keys only")
        object.__setattr__(self, "signer", signer)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "message", message)
        object.__setattr__(self, "scheme_id", scheme_id)

    def __setattr__(self, name, value):
        raise AttributeError("signatures are immutable")

    def describe(self) -> tuple:
        return ("psig", self.signer, self.k, self.message)

    def __repr__(self) -> str:
        return f"PartialSig(signer={self.signer}, k={self.k}, message={self.message!r})"


class ThresholdSig:
    __slots__ = ("k", "message", "signers", "scheme_id")

    def __init__(self, token, k: int, message: Hashable, signers: frozenset, scheme_id: int):
        if token is not _MINT:
            raise ImpersonationAttempt("threshold signatures are produced by combine only")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "message", message)
        object.__setattr__(self, "signers", signers)
        object.__setattr__(self, "scheme_id", scheme_id)

    def __setattr__(self, name, value):
        raise AttributeError("signatures are immutable")

    def describe(self) -> tuple:
        return ("tsig", self.k, self.message)

    def __repr__(self) -> str:
        return f"ThresholdSig(k={self.k}, message={self.message!r}, signers={len(self.signers)})"


class SigningKey:
    """Private signing capability of one process."""

    __slots__ = ("pid", "_scheme")

    def __init__(self, pid: int, scheme: "ThresholdScheme"):
        self.pid = pid
        self._scheme = scheme

    def share_sign(self, k: int, message: Hashable) -> PartialSig:
        return self._scheme._mint_partial(self, k, message)

    def __repr__(self) -> str:
        return f"SigningKey({self.pid})"


class ThresholdScheme:
    """Key material and verification state for one simulation instance."""

    def __init__(self, n: int, kappa: int = DEFAULT_KAPPA):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.n = n
        self.kappa = kappa
        self._keys = {pid: SigningKey(pid, self) for pid in range(1, n + 1)}
        self._partials: dict[int, PartialSig] = {}
        self._combined: dict[int, ThresholdSig] = {}
        # (signer, k, message) triples each key actually signed
        self.signed: set[tuple[int, int, Hashable]] = set()
        self.combine_log: list[ThresholdSig] = []
        self._sid = id(self)

    def key(self, pid: int) -> SigningKey:
        return self._keys[pid]

    def keys_for(self, pids: Iterable[int]) -> dict[int, SigningKey]:
        return {p: self._keys[p] for p in pids}

    def _mint_partial(self, key: SigningKey, k: int, message: Hashable) -> PartialSig:
        if self._keys.get(key.pid) is not key:
            raise ImpersonationAttempt(f"key for {key.pid} does not belong to this scheme")
        sig = PartialSig(_MINT, key.pid, k, message, self._sid)
        self._partials[id(sig)] = sig
        self.signed.add((key.pid, k, message))
        return sig

    def share_sign(self, signer: int, k: int, message: Hashable, key: SigningKey) -> PartialSig:
        if key.pid != signer or self._keys.get(signer) is not key:
            raise ImpersonationAttempt(f"cannot sign as {signer} with {key!r}")
        return key.share_sign(k, message)

    def share_verify(self, signer: int, k: int, message: Hashable, psig) -> bool:
        return (
            isinstance(psig, PartialSig)
            and self._partials.get(id(psig)) is psig
            and psig.signer == signer
            and psig.k == k
            and psig.message == message
        )

    def valid_partial(self, psig) -> bool:
        return isinstance(psig, PartialSig) and self._partials.get(id(psig)) is psig

    def combine(self, k: int, shares: Iterable[PartialSig]) -> ThresholdSig:
        shares = list(shares)
        groups: dict[Hashable, set[int]] = defaultdict(set)
        duplicate = False
        for s in shares:
            if not self.valid_partial(s) or s.k != k:
                continue
            if s.signer in groups[s.message]:
                duplicate = True
            groups[s.message].add(s.signer)
        ready = [m for m, signers in groups.items() if len(signers) >= k]
        if len(ready) == 1:
            message = ready[0]
            tsig = ThresholdSig(_MINT, k, message, frozenset(groups[message]), self._sid)
            self._combined[id(tsig)] = tsig
            self.combine_log.append(tsig)
            return tsig
        if len(ready) > 1 or len(groups) > 1:
            raise MixedMessages(f"shares cover {len(groups)} different messages")
        if duplicate:
            raise DuplicateSigners("shares repeat a signer")
        raise InsufficientShares(f"need {k} shares, have {sum(len(g) for g in groups.values())}")

    def verify(self, k: int, message: Hashable, tsig) -> bool:
        return (
            isinstance(tsig, ThresholdSig)
            and self._combined.get(id(tsig)) is tsig
            and tsig.k == k
            and tsig.message == message
        )

    def audit_unforgeability(self, fault_set: Iterable[int]) -> list[ThresholdSig]:
        """Combined signatures that credit an honest signer who never signed."""
        faulty = set(fault_set)
        bad = []
        for tsig in self.combine_log:
            honest = tsig.signers - faulty
            if any((s, tsig.k, tsig.message) not in self.signed for s in honest):
                bad.append(tsig)
            elif len(honest) < tsig.k - len(tsig.signers & faulty):
                bad.append(tsig)
        return bad
