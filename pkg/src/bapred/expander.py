"""Constant-degree forwarding graphs with checked expansion.

A graph passes when every vertex set S of size ceil(2 eps n) satisfies
|S ∪ N(S)| >= (1 - 2 eps) n. Small graphs are checked over every such set;
larger ones by random sampling plus a greedy worst-case search.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

EXHAUSTIVE_LIMIT = 24
SAMPLES = 100_000


class ConstructionFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class ExpanderGraph:
    n: int
    epsilon: Fraction
    adjacency: tuple[tuple[int, ...], ...]  # adjacency[p - 1] = neighbours of p
    degree: int
    complete: bool = False

    def neighbors(self, pid: int) -> tuple[int, ...]:
        return self.adjacency[pid - 1]


def set_size(n: int, epsilon) -> int:
    return math.ceil(2 * Fraction(epsilon) * n)


def reach_target(n: int, epsilon) -> int:
    return math.ceil((1 - 2 * Fraction(epsilon)) * n)


def _closed_masks(adjacency, n: int) -> np.ndarray:
    """Closed neighbourhoods as packed uint64 words, one row per vertex."""
    words = (n + 63) // 64
    dense = np.zeros((n, words * 64), dtype=bool)
    for v, nbrs in enumerate(adjacency):
        dense[v, v] = True
        for u in nbrs:
            dense[v, u - 1] = True
    packed = np.packbits(dense, axis=1, bitorder="little")
    return packed.view(np.uint64).reshape(n, words)


def _union_sizes(masks: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    union = np.bitwise_or.reduce(masks[subsets], axis=1)
    return np.bitwise_count(union).sum(axis=1)


def check_exhaustive(graph: ExpanderGraph, chunk: int = 200_000) -> bool:
    n = graph.n
    s = set_size(n, graph.epsilon)
    need = reach_target(n, graph.epsilon)
    if s == 0 or s >= n:
        return s <= n and (s == 0 or need <= n)
    masks = _closed_masks(graph.adjacency, n)
    combos = itertools.combinations(range(n), s)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            return True
        if _union_sizes(masks, block.reshape(-1, s)).min() < need:
            return False


def check_sampled(graph: ExpanderGraph, samples: int = SAMPLES, seed: int = 0,
                  chunk: int = 10_000) -> bool:
    n = graph.n
    s = set_size(n, graph.epsilon)
    need = reach_target(n, graph.epsilon)
    if s == 0 or s >= n:
        return True
    masks = _closed_masks(graph.adjacency, n)
    rng = np.random.default_rng(seed)
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        subsets = np.argsort(rng.random((k, n)), axis=1)[:, :s]
        if _union_sizes(masks, subsets).min() < need:
            return False
        done += k
    return True


def greedy_worst(graph: ExpanderGraph) -> int:
    """Smallest closed-neighbourhood size found by greedy set growth."""
    n = graph.n
    s = set_size(n, graph.epsilon)
    closed = [set(nb) | {v + 1} for v, nb in enumerate(graph.adjacency)]
    best = n
    for start in range(1, n + 1):
        chosen = {start}
        covered = set(closed[start - 1])
        while len(chosen) < s:
            pick = min((v for v in range(1, n + 1) if v not in chosen),
                       key=lambda v: (len(closed[v - 1] - covered), v))
            chosen.add(pick)
            covered |= closed[pick - 1]
        best = min(best, len(covered))
    return best


def check_expansion(graph: ExpanderGraph, samples: int = SAMPLES, seed: int = 0) -> bool:
    if graph.complete:
        return True
    if graph.n <= EXHAUSTIVE_LIMIT:
        return check_exhaustive(graph)
    return check_sampled(graph, samples, seed)


def complete_graph(n: int, epsilon) -> ExpanderGraph:
    adj = tuple(tuple(u for u in range(1, n + 1) if u != v) for v in range(1, n + 1))
    return ExpanderGraph(n, Fraction(epsilon), adj, max(n - 1, 0), complete=True)


def _regular(n: int, d: int, seed: int, epsilon) -> ExpanderGraph:
    g = nx.random_regular_graph(d, n, seed=seed)
    adj = tuple(tuple(sorted(u + 1 for u in g.neighbors(v))) for v in range(n))
    return ExpanderGraph(n, Fraction(epsilon), adj, d)


_CACHE: dict[tuple, ExpanderGraph] = {}


def build_expander(n: int, epsilon, seed: int = 0, max_degree: int = 16,
                   tries: int = 4) -> ExpanderGraph:
    """Random regular graph of the smallest passing degree, else complete.

    A candidate must pass the expansion check and the greedy search; the
    result depends only on (n, epsilon, seed) and is cached.
    """
    eps = Fraction(epsilon)
    if not (0 < eps < Fraction(1, 2)):
        raise ValueError("epsilon must lie in (0, 1/2)")
    key = (n, eps, seed, max_degree, tries)
    if key in _CACHE:
        return _CACHE[key]
    need = reach_target(n, eps)
    result = None
    for d in range(3, min(max_degree, n - 2) + 1):
        if (n * d) % 2:
            continue
        for attempt in range(tries):
            graph = _regular(n, d, seed * 1009 + attempt, eps)
            if greedy_worst(graph) >= need and check_expansion(graph, seed=seed):
                result = graph
                break
        if result is not None:
            break
    if result is None:
        result = complete_graph(n, eps)
    _CACHE[key] = result
    return result
