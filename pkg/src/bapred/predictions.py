"""Classification predictions, misclassification, groupings and good groups."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np


class InvalidGrouping(ValueError):
    pass


class InfeasibleBudget(ValueError):
    pass


class PreconditionUnsatisfiable(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruth:
    fault_set: frozenset
    n: int
    t: int

    def __post_init__(self):
        object.__setattr__(self, "fault_set", frozenset(self.fault_set))
        if not (len(self.fault_set) <= self.t < self.n):
            raise ValueError("ground truth needs |fault_set| <= t < n")
        if any(p < 1 or p > self.n for p in self.fault_set):
            raise ValueError("fault ids must lie in [1, n]")

    @property
    def f(self) -> int:
        return len(self.fault_set)

    def honest_mask(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        for p in self.fault_set:
            mask[p - 1] = False
        return mask

    def honest(self) -> list[int]:
        return [p for p in range(1, self.n + 1) if p not in self.fault_set]


class PredictionMatrix:
    """Row i (1-indexed) is a_i; a_i[j] = 1 means p_i predicts p_j honest."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        bits = np.array(bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
            raise ValueError("prediction matrix must be n x n")
        bits.setflags(write=False)
        self.bits = bits

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    def row(self, pid: int) -> np.ndarray:
        return self.bits[pid - 1]

    @classmethod
    def perfect(cls, truth: GroundTruth) -> "PredictionMatrix":
        return cls(np.tile(truth.honest_mask(), (truth.n, 1)))

    def to_text(self) -> str:
        lines = []
        for i, row in enumerate(self.bits, start=1):
            lines.append(f"{i} " + "".join("1" if b else "0" for b in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PredictionMatrix":
        rows = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            idx, bits = line.split()
            if set(bits) - {"0", "1"}:
                raise ValueError(f"bad bit string on row {idx}")
            rows[int(idx)] = [c == "1" for c in bits]
        n = len(rows)
        if sorted(rows) != list(range(1, n + 1)) or any(len(r) != n for r in rows.values()):
            raise ValueError("rows must be numbered 1..n and have n bits each")
        return cls([rows[i] for i in range(1, n + 1)])

    def __eq__(self, other):
        return isinstance(other, PredictionMatrix) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


def _check_shape(matrix: PredictionMatrix, truth: GroundTruth) -> None:
    if matrix.n != truth.n:
        raise ValueError(f"matrix has {matrix.n} rows, expected {truth.n}")


def count_errors(matrix: PredictionMatrix, truth: GroundTruth) -> int:
    """Wrong bits in honest rows only."""
    _check_shape(matrix, truth)
    mask = truth.honest_mask()
    return int(np.count_nonzero(matrix.bits[mask] != mask))


def honest_votes(matrix: PredictionMatrix, truth: GroundTruth) -> np.ndarray:
    """For each column j, how many honest rows predict p_j honest."""
    return matrix.bits[truth.honest_mask()].sum(axis=0)


def misclassified_set(matrix: PredictionMatrix, truth: GroundTruth) -> set[int]:
    _check_shape(matrix, truth)
    n, f = truth.n, truth.f
    mask = truth.honest_mask()
    yes = honest_votes(matrix, truth)
    no = (n - f) - yes
    # byzantine: yes >= n/2 - f ; honest: no >= n - f - n/2 ; both read 2x >= n - 2f
    limit = n - 2 * f
    out = set()
    for j in range(n):
        count = no[j] if mask[j] else yes[j]
        if 2 * int(count) >= limit:
            out.add(j + 1)
    return out


def m_grouping(n: int, m: int) -> list[list[int]]:
    """Contiguous id slices; the first n mod m groups get the extra member."""
    if m < 1 or m > n:
        raise InvalidGrouping(f"need 1 <= m <= n, got m={m}, n={n}")
    base, extra = divmod(n, m)
    groups = []
    start = 1
    for j in range(m):
        size = base + (1 if j < extra else 0)
        groups.append(list(range(start, start + size)))
        start += size
    return groups


def _ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def is_c_good(group: Sequence[int], c, matrix: PredictionMatrix, truth: GroundTruth,
              misclassified: set[int] | None = None) -> bool:
    c = Fraction(c)
    if not (0 < c <= 1):
        raise ValueError("c must lie in (0, 1]")
    if misclassified is None:
        misclassified = misclassified_set(matrix, truth)
    if any(p in misclassified for p in group):
        return False
    byz = sum(1 for p in group if p in truth.fault_set)
    return byz < _ceil_frac(c * len(group))


# constants from the good-group counting arguments: (c, max resilience, c1, c2, bound)
def lemma_constants(lemma: str, epsilon) -> dict:
    eps = Fraction(epsilon)
    if lemma == "one_good_23":
        return {"c": Fraction(1), "resilience": Fraction(1, 3) - eps,
                "c1": 2 / eps, "c2": eps / (Fraction(2, 3) - eps)}
    if lemma == "half_good_23":
        return {"c": Fraction(1, 2), "resilience": Fraction(1, 6) - eps,
                "c1": 1 / eps, "c2": eps / (Fraction(1, 3) - eps)}
    if lemma == "one_good_exists":
        return {"c": Fraction(1), "resilience": Fraction(1, 2) - eps,
                "c1": 2 / eps, "c2": eps / (1 - eps)}
    raise ValueError(f"unknown lemma {lemma!r}")


LEMMAS = ("one_good_23", "half_good_23", "one_good_exists")


def valid_m_range(lemma: str, n: int, k: int, epsilon) -> range:
    """Integers m with c1*k < m < c2*n (and 1 <= m <= n)."""
    consts = lemma_constants(lemma, epsilon)
    lo = consts["c1"] * k
    hi = consts["c2"] * n
    first = max(1, math.floor(lo) + 1)
    last = min(n, _ceil_frac(hi) - 1)
    return range(first, last + 1)


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    holds: bool
    good_count: int
    bound: int
    m: int
    proof_bound_met: bool


def check_good_group_lemma(lemma: str, n: int, f: int, k: int, m: int,
                           matrix: PredictionMatrix, truth: GroundTruth,
                           grouping: list[list[int]] | None = None,
                           epsilon=Fraction(1, 12)) -> LemmaReport:
    """Brute-force good-group count against the lemma's claimed bound.

    ``bound`` is the smallest count that satisfies the claim: floor(2m/3)+1
    for the two-thirds lemmas and 1 for the existence lemma. For the
    existence lemma ``proof_bound_met`` records whether more than m/2 groups
    were good, which is what its counting argument actually gives.
    """
    consts = lemma_constants(lemma, epsilon)
    if truth.n != n or truth.f != f:
        raise ValueError("n and f must match the ground truth")
    if Fraction(f) >= consts["resilience"] * n:
        raise PreconditionUnsatisfiable(f"f={f} outside resilience for {lemma}")
    mis = misclassified_set(matrix, truth)
    if len(mis) > k:
        raise ValueError(f"k={k} below the actual misclassified count {len(mis)}")
    valid = valid_m_range(lemma, n, k, epsilon)
    if len(valid) == 0:
        raise PreconditionUnsatisfiable(f"no m with c1*k < m < c2*n for n={n}, k={k}")
    if m not in valid:
        raise PreconditionUnsatisfiable(f"m={m} outside ({valid.start}, {valid.stop - 1})")
    if grouping is None:
        grouping = m_grouping(n, m)
    good = sum(1 for g in grouping if is_c_good(g, consts["c"], matrix, truth, mis))
    if lemma == "one_good_exists":
        bound = 1
        proof_met = 2 * good > m
    else:
        bound = (2 * m) // 3 + 1
        proof_met = 3 * good > 2 * m
    return LemmaReport(lemma, good >= bound, good, bound, m, proof_met)


def max_budget(truth: GroundTruth) -> int:
    return (truth.n - truth.f) * truth.n


def misclassify_cost(truth: GroundTruth) -> int:
    """Honest-row flips needed to misclassify one process."""
    return max(0, (truth.n - 2 * truth.f + 1) // 2)


PLACEMENTS = ("uniform", "concentrated_on_targets", "adversarial_misclassify")


def generate_predictions(truth: GroundTruth, B: int, placement: str = "uniform",
                         seed: int = 0, targets: Iterable[int] | None = None) -> PredictionMatrix:
    """A matrix with exactly B wrong bits in honest rows.

    Byzantine rows are random. ``uniform`` scatters errors over honest rows.
    ``concentrated_on_targets`` flips whole columns, target by target.
    ``adversarial_misclassify`` spends the fewest flips that misclassify
    each target in turn, faulty processes first, then spreads any leftover.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    cap = max_budget(truth)
    if B < 0 or B > cap:
        raise InfeasibleBudget(f"B={B} outside [0, {cap}]")
    n = truth.n
    rng = np.random.default_rng(random.Random(repr(("predictions", seed))).getrandbits(63))
    mask = truth.honest_mask()
    honest_rows = np.flatnonzero(mask)
    flips = np.zeros((n, n), dtype=bool)

    if placement == "uniform":
        cells = rng.choice(len(honest_rows) * n, size=B, replace=False)
        flips[honest_rows[cells // n], cells % n] = True
    else:
        if targets is None:
            byz = sorted(truth.fault_set)
            hon = list(rng.permutation(truth.honest()))
            order = byz + [int(p) for p in hon]
        else:
            order = list(targets)
        per = len(honest_rows) if placement == "concentrated_on_targets" else misclassify_cost(truth)
        left = B
        for p in order:
            if left <= 0 or per == 0:
                break
            take = min(per, left)
            rows = rng.choice(honest_rows, size=take, replace=False)
            flips[rows, p - 1] = True
            left -= take
        if left > 0:
            free = np.flatnonzero(~flips[honest_rows].ravel())
            cells = rng.choice(free, size=left, replace=False)
            flips[honest_rows[cells // n], cells % n] = True

    bits = np.tile(mask, (n, 1)) ^ flips
    byz_rows = ~mask
    if byz_rows.any():
        bits[byz_rows] = rng.integers(0, 2, size=(int(byz_rows.sum()), n)).astype(bool)
    return PredictionMatrix(bits)
