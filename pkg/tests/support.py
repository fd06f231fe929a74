"""Small helpers for running sub-protocols inside the engine."""

from __future__ import annotations

from bapred.engine import Engine
from bapred.predictions import GroundTruth, PredictionMatrix


class Scripted:
    """Adversary driven by a plain function ``script(round, traffic, view)``."""

    def __init__(self, script):
        self.script = script
        self.view = None
        self.seen = []

    def setup(self, view):
        self.view = view

    def act(self, rnd, traffic):
        self.seen.append((rnd, list(traffic)))
        return self.script(rnd, traffic, self.view)


def perfect(n: int, faults=(), t: int | None = None) -> PredictionMatrix:
    t = max(len(faults), 0) if t is None else t
    return PredictionMatrix.perfect(GroundTruth(frozenset(faults), n, min(t, n - 1)))


def run(body, n: int, t: int = 0, faults=(), inputs=None, matrix=None, adversary=None,
        seed: int = 0, kappa: int = 256, epsilon=None, round_cap=None, record=False) -> Engine:
    """Run ``body(ctx)`` on every honest process and return the finished engine."""
    if inputs is None:
        inputs = {p: 0 for p in range(1, n + 1)}
    if matrix is None:
        matrix = perfect(n, faults, t)
    engine = Engine(body, n, t, frozenset(faults), inputs, matrix=matrix, adversary=adversary,
                    seed=seed, kappa=kappa, epsilon=epsilon, round_cap=round_cap,
                    record_envelopes=record)
    engine.run()
    return engine
