"""Protocol registry, one-call simulation, and run-level safety audits."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Any

from . import auth, unauth
from .engine import Engine, ExecutionReport
from .predictions import PredictionMatrix


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    factory: Any
    epsilon: Fraction
    resilience: Fraction

    def default_t(self, n: int, epsilon=None) -> int:
        return max(0, math.ceil(self.bound(n, epsilon)) - 1)

    def bound(self, n: int, epsilon=None) -> Fraction:
        eps = self.epsilon if epsilon is None else Fraction(epsilon)
        return (self.resilience - eps) * n


PROTOCOLS = {
    "unauth-cubic": ProtocolSpec("unauth-cubic", partial(unauth.unauth_agreement, mode=unauth.CUBIC),
                                 unauth.DEFAULT_EPSILON[unauth.CUBIC], Fraction(1, 3)),
    "unauth-subcubic": ProtocolSpec("unauth-subcubic", partial(unauth.unauth_agreement, mode=unauth.SUBCUBIC),
                                    unauth.DEFAULT_EPSILON[unauth.SUBCUBIC], Fraction(1, 6)),
    "auth": ProtocolSpec("auth", auth.auth_process, auth.DEFAULT_EPSILON, Fraction(1, 2)),
}


class UnknownProtocol(ValueError):
    pass


def protocol_spec(name: str) -> ProtocolSpec:
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise UnknownProtocol(f"unknown protocol {name!r}; choose from {sorted(PROTOCOLS)}") from None


@dataclass
class SimConfig:
    n: int
    t: int
    fault_set: frozenset
    matrix: PredictionMatrix
    inputs: dict[int, int]
    seed: int = 0
    kappa: int = 256
    epsilon: Fraction | None = None
    round_cap: int | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fault_set = frozenset(self.fault_set)
        if len(self.fault_set) > self.t:
            raise ValueError(f"|fault_set| = {len(self.fault_set)} exceeds t = {self.t}")
        if self.matrix.n != self.n:
            raise ValueError("prediction matrix size does not match n")


def simulate(protocol: str, config: SimConfig, adversary=None, record_envelopes: bool = False) -> Engine:
    """Run to completion and return the engine, for audits beyond the report."""
    spec = protocol_spec(protocol)
    eps = spec.epsilon if config.epsilon is None else Fraction(config.epsilon)
    engine = Engine(
        spec.factory, config.n, config.t, config.fault_set, config.inputs,
        matrix=config.matrix, adversary=adversary, seed=config.seed, kappa=config.kappa,
        epsilon=eps, round_cap=config.round_cap, record_envelopes=record_envelopes,
        protocol=protocol,
    )
    engine.run()
    return engine


def run_protocol(protocol: str, config: SimConfig, adversary=None) -> ExecutionReport:
    return simulate(protocol, config, adversary).report()


# ------------------------------------------------------------------ checks

def agreement_ok(decisions: dict[int, Any]) -> bool:
    return len(set(decisions.values())) <= 1


def unanimity_ok(inputs: dict[int, Any], decisions: dict[int, Any], honest) -> bool:
    values = {inputs[p] for p in honest}
    if len(values) != 1:
        return True
    (v,) = values
    return all(d == v for d in decisions.values())


@dataclass
class CertificateAudit:
    commit_conflicts: int
    decision_conflicts: int
    leader_proof_excess: int
    forgeries: int
    max_leader_proofs: int

    @property
    def clean(self) -> bool:
        return not (self.commit_conflicts or self.decision_conflicts
                    or self.leader_proof_excess or self.forgeries)


def leader_proof_limit(epsilon) -> int:
    """ceil(1 / (2 eps))."""
    x = 1 / (2 * Fraction(epsilon))
    return -(-x.numerator // x.denominator)


def audit_certificates(engine: Engine) -> CertificateAudit:
    """Scan every combined signature of a run for conflicts and forgeries."""
    scheme = engine.scheme
    q = engine.n - engine.t
    commits = defaultdict(set)
    decisions = set()
    leaders = defaultdict(set)
    for sig in scheme.combine_log:
        msg = sig.message
        if sig.k != q or not isinstance(msg, tuple) or not msg:
            continue
        if msg[0] == "commit":
            commits[msg[2]].add(msg[1])
        elif msg[0] == "decide":
            decisions.add(msg[1])
        elif msg[0] == "leader":
            leaders[msg[2]].add(msg[1])
    limit = leader_proof_limit(engine.epsilon)
    counts = [len(v) for v in leaders.values()]
    return CertificateAudit(
        commit_conflicts=sum(1 for vs in commits.values() if len(vs) > 1),
        decision_conflicts=int(len(decisions) > 1),
        leader_proof_excess=sum(1 for c in counts if c > limit),
        forgeries=len(scheme.audit_unforgeability(engine.faulty)),
        max_leader_proofs=max(counts, default=0),
    )
