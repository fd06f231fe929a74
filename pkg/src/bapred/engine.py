"""Lockstep synchronous round engine.

Honest processes are generators. Each ``yield`` hands the engine the
outbox for the current round and receives that round's ``Inbox``; the
generator's return value is the process decision. Subprotocols compose with
``yield from`` and run side by side with ``parallel``.

An outbox entry is ``(dest, kind, scope, body)`` where ``dest`` is ``ALL``,
a process id, or a tuple of process ids. ``scope`` tags the subprotocol
instance so that concurrent instances never read each other's messages; it
is implied by the round schedule and is not charged on the wire.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable

from .crypto import DEFAULT_KAPPA, ThresholdScheme
from .wire import encode, fixed_payload_bytes, payload_bytes, well_formed

ALL = "*"

Outbox = list
Process = Generator[Outbox, "Inbox", Any]


class SimulationError(Exception):
    pass


class RoundCapExceeded(SimulationError):
    pass


class ProtocolViolation(SimulationError):
    pass


class ConfinementViolation(SimulationError):
    """The adversary tried to speak for a process it does not control."""


def derive_rng(seed: int, *key: Any) -> random.Random:
    digest = hashlib.sha256(repr((seed,) + key).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class RoundEnvelope:
    sender: int
    receiver: int
    payload: bytes
    tag: str
    round: int


def account_bits(envelope: RoundEnvelope) -> int:
    return 8 * len(envelope.payload)


@dataclass
class ExecutionReport:
    rounds_used: int
    messages_sent: int
    bits_sent: int
    decisions: dict[int, Any]
    phase_trace: list[tuple[Any, str, int]]
    seed: int
    notes: dict[str, list] = field(default_factory=dict, repr=False, compare=False)

    def to_json(self) -> str:
        data = {
            "rounds_used": self.rounds_used,
            "messages_sent": self.messages_sent,
            "bits_sent": self.bits_sent,
            "decisions": {str(k): v for k, v in sorted(self.decisions.items())},
            "phase_trace": [list(x) for x in self.phase_trace],
            "seed": self.seed,
        }
        return json.dumps(data, sort_keys=True, separators=(",", ":"))


class Inbox:
    """Messages delivered to one process in one round."""

    __slots__ = ("_shared", "_direct", "_faulty", "_n")

    def __init__(self, shared: dict, direct: dict | None, faulty: frozenset, n: int):
        self._shared = shared
        self._direct = direct
        self._faulty = faulty
        self._n = n

    def get(self, kind: str, scope: tuple = ()) -> dict[int, tuple]:
        """Bodies of ``kind`` within ``scope``, one per sender (first wins)."""
        key = (kind, scope)
        got = self._shared.get(key)
        out = dict(got) if got else {}
        if self._direct:
            items = self._direct.get(key)
            if items:
                faulty = self._faulty
                for sender, body in items:
                    if sender in out:
                        continue
                    if sender in faulty and not well_formed(kind, body, self._n):
                        continue
                    out[sender] = body
        return out

    def get_all(self, kind: str, scope: tuple = ()) -> list[tuple[int, tuple]]:
        """Every well-formed body of ``kind`` within ``scope``, duplicates kept."""
        key = (kind, scope)
        got = self._shared.get(key)
        out = list(got.items()) if got else []
        if self._direct:
            for sender, body in self._direct.get(key, ()):
                if sender in self._faulty and not well_formed(kind, body, self._n):
                    continue
                out.append((sender, body))
        return out


class Ctx:
    """What an honest process knows: its id, inputs, keys and public setup."""

    def __init__(self, engine: "Engine", pid: int):
        self.engine = engine
        self.pid = pid
        self.n = engine.n
        self.t = engine.t
        self.epsilon = engine.epsilon
        self.kappa = engine.kappa
        self.input = engine.inputs.get(pid)
        self.row = engine.matrix.row(pid) if engine.matrix is not None else None
        self.scheme = engine.scheme
        self.key = engine.scheme.key(pid)
        self.shared = engine.shared

    def mark(self, phase: Any, name: str) -> None:
        self.engine._mark(phase, name)

    def note(self, key: str, value: Any) -> None:
        self.engine.notes.setdefault(key, []).append((self.engine.round, self.pid, value))


def idle(rounds: int):
    for _ in range(rounds):
        yield []


def parallel(gens: Iterable[Process]):
    """Run subprotocols in lockstep; returns their results in order."""
    gens = list(gens)
    results: list[Any] = [None] * len(gens)
    active: dict[int, list] = {}
    for i, g in enumerate(gens):
        try:
            active[i] = next(g)
        except StopIteration as stop:
            results[i] = stop.value
    while active:
        out: list = []
        for box in active.values():
            out.extend(box)
        inbox = yield out
        for i in list(active):
            try:
                active[i] = gens[i].send(inbox)
            except StopIteration as stop:
                results[i] = stop.value
                del active[i]
    return results


class Engine:
    """One simulation instance.

    ``factory(ctx)`` builds the generator for an honest process.
    ``adversary`` is anything with ``setup(view)`` and ``act(round, traffic)``;
    ``traffic`` lists the honest ``(sender, dest, kind, scope, body)`` of the
    round and ``act`` returns Byzantine envelopes in the same shape.
    """

    def __init__(
        self,
        factory: Callable[[Ctx], Process],
        n: int,
        t: int,
        fault_set: Iterable[int],
        inputs: dict[int, Any],
        matrix=None,
        adversary=None,
        seed: int = 0,
        kappa: int = DEFAULT_KAPPA,
        epsilon: float | None = None,
        round_cap: int | None = None,
        shared: dict | None = None,
        record_envelopes: bool = False,
        protocol: str | None = None,
    ):
        self.protocol = protocol
        self.n = n
        self.t = t
        self.faulty = frozenset(fault_set)
        if any(p < 1 or p > n for p in self.faulty):
            raise ValueError("fault set outside [1, n]")
        self.honest = [p for p in range(1, n + 1) if p not in self.faulty]
        missing = [p for p in self.honest if p not in inputs]
        if missing:
            raise ValueError(f"no input for honest processes {missing}")
        self.inputs = inputs
        self.matrix = matrix
        self.seed = seed
        self.kappa = kappa
        self.epsilon = epsilon
        self.round_cap = 20 * n if round_cap is None else round_cap
        self.scheme = ThresholdScheme(n, kappa)
        self.shared = {} if shared is None else shared
        self.round = 0
        self.messages_sent = 0
        self.bits_sent = 0
        self.decisions: dict[int, Any] = {}
        self.notes: dict[str, list] = {}
        self._marks: dict[int, tuple] = {}
        self._fixed_size: dict[str, int | None] = {}
        self.record_envelopes = record_envelopes
        self.envelopes: list[RoundEnvelope] = []
        self.adversary = adversary
        if adversary is not None:
            adversary.setup(AdversaryView(self))
        self._procs: dict[int, Process] = {}
        self._pending: dict[int, list] = {}
        for pid in self.honest:
            gen = factory(Ctx(self, pid))
            self._procs[pid] = gen
            self._start(pid, gen)

    def _start(self, pid: int, gen: Process) -> None:
        try:
            self._pending[pid] = next(gen)
        except StopIteration as stop:
            self.decisions[pid] = stop.value
            del self._procs[pid]
        except SimulationError:
            raise
        except Exception as exc:
            raise ProtocolViolation(f"process {pid} failed at start: {exc!r}") from exc

    def _mark(self, phase: Any, name: str) -> None:
        self._marks[self.round] = (phase, name)

    @property
    def done(self) -> bool:
        return not self._procs

    def _size(self, kind: str, body: tuple) -> int:
        fixed = self._fixed_size.get(kind, -1)
        if fixed == -1:
            fixed = fixed_payload_bytes(kind, self.n, self.kappa)
            self._fixed_size[kind] = fixed
        if fixed is not None:
            return fixed
        return payload_bytes(kind, body, self.n, self.kappa)

    def step(self) -> None:
        """Deliver one round: honest sends, rushing adversary, atomic delivery."""
        n = self.n
        shared: dict = {}
        direct: dict = defaultdict(lambda: defaultdict(list))
        traffic = []
        msgs = 0
        bits = 0
        for pid in self.honest:
            box = self._pending.get(pid)
            if not box:
                continue
            for dest, kind, scope, body in box:
                size = self._size(kind, body)
                key = (kind, scope)
                if dest == ALL:
                    slot = shared.setdefault(key, {})
                    if pid in slot:
                        raise ProtocolViolation(f"process {pid} broadcast {key} twice")
                    slot[pid] = body
                    receivers = n
                elif type(dest) is int:
                    direct[dest][key].append((pid, body))
                    receivers = 1
                else:
                    for d in dest:
                        direct[d][key].append((pid, body))
                    receivers = len(dest)
                msgs += receivers
                bits += receivers * 8 * size
                traffic.append((pid, dest, kind, scope, body))
                if self.record_envelopes:
                    self._record(pid, dest, kind, body)
        self.messages_sent += msgs
        self.bits_sent += bits

        if self.adversary is not None and self.faulty:
            for env in self.adversary.act(self.round, traffic) or ():
                try:
                    sender, dest, kind, scope, body = env
                except (TypeError, ValueError):
                    continue
                if sender not in self.faulty:
                    raise ConfinementViolation(f"adversary sent as honest process {sender!r}")
                try:
                    key = (kind, scope)
                    hash(key)
                except TypeError:
                    continue
                if dest == ALL:
                    targets = self.honest
                elif type(dest) is int:
                    targets = (dest,)
                elif isinstance(dest, tuple):
                    targets = dest
                else:
                    continue
                for d in targets:
                    if d in self._procs:
                        direct[d][key].append((sender, body))

        self.round += 1
        faulty = self.faulty
        for pid in list(self._procs):
            gen = self._procs[pid]
            inbox = Inbox(shared, direct.get(pid), faulty, n)
            try:
                self._pending[pid] = gen.send(inbox)
            except StopIteration as stop:
                self.decisions[pid] = stop.value
                del self._procs[pid]
                self._pending.pop(pid, None)
            except SimulationError:
                raise
            except Exception as exc:
                raise ProtocolViolation(
                    f"process {pid} failed in round {self.round}: {exc!r}"
                ) from exc

    def _record(self, pid: int, dest, kind: str, body: tuple) -> None:
        payload = encode(kind, body, self.n, self.kappa)
        if dest == ALL:
            receivers = range(1, self.n + 1)
        elif type(dest) is int:
            receivers = (dest,)
        else:
            receivers = dest
        for r in receivers:
            self.envelopes.append(RoundEnvelope(pid, r, payload, kind, self.round))

    def run(self) -> ExecutionReport:
        while self._procs:
            if self.round >= self.round_cap:
                raise RoundCapExceeded(f"round cap {self.round_cap} reached")
            self.step()
        return self.report()

    def phase_trace(self) -> list[tuple[Any, str, int]]:
        marks = sorted((r, m) for r, m in self._marks.items() if r < self.round)
        if not marks or marks[0][0] != 0:
            marks.insert(0, (0, (0, "start")))
        trace = []
        for i, (start, (phase, name)) in enumerate(marks):
            end = marks[i + 1][0] if i + 1 < len(marks) else self.round
            if trace and trace[-1][0] == phase and trace[-1][1] == name:
                trace[-1] = (phase, name, trace[-1][2] + end - start)
            else:
                trace.append((phase, name, end - start))
        return trace

    def report(self) -> ExecutionReport:
        return ExecutionReport(
            rounds_used=self.round,
            messages_sent=self.messages_sent,
            bits_sent=self.bits_sent,
            decisions=dict(sorted(self.decisions.items())),
            phase_trace=self.phase_trace(),
            seed=self.seed,
            notes=self.notes,
        )


class AdversaryView:
    """What the adversary is handed: public setup plus the faulty keys only."""

    def __init__(self, engine: Engine):
        self.n = engine.n
        self.t = engine.t
        self.epsilon = engine.epsilon
        self.kappa = engine.kappa
        self.fault_set = engine.faulty
        self.honest = tuple(engine.honest)
        self.scheme = engine.scheme
        self.keys = engine.scheme.keys_for(sorted(engine.faulty))
        self.matrix = engine.matrix
        self.shared = engine.shared
        self.seed = engine.seed
        self.protocol = engine.protocol
        self.rng = derive_rng(engine.seed, "adversary")
