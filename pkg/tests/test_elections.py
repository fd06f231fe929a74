import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bapred import elections as el
from bapred.elections import (
    authenticated_election, authenticated_exchange, dispatch_election, is_large_group,
    large_group_election, prediction_exchange, simple_election, small_group_election,
)
from bapred.engine import ALL
from bapred.predictions import GroundTruth, generate_predictions, is_c_good
from support import Scripted, perfect, run


def outcome(e):
    return {p: d.leader for p, d in e.decisions.items()}


def test_simple_election_examples():
    e = run(lambda ctx: simple_election(ctx, [2, 5]), 6, t=1, faults={4})
    assert set(outcome(e).values()) == {2} and e.round == 1
    e = run(lambda ctx: simple_election(ctx, [4, 6]), 6, t=2, faults={4, 6})
    assert {d.error for d in e.decisions.values()} == {"NoQualifiedLeader"}


def _matrices(n, faults, rng, count):
    truth = GroundTruth(frozenset(faults), n, len(faults))
    cap = (n - len(faults)) * n
    for _ in range(count):
        yield truth, generate_predictions(truth, rng.randrange(0, cap // 3 + 1), "uniform",
                                          rng.randrange(10**6))


def test_simple_election_adversary_independent_exhaustive():
    # Byzantine votes enter only through their per-member sums, so every
    # sum vector in {0..f}^|G| covers every joint Byzantine choice.
    rng = random.Random(11)
    checked = 0
    for n in range(2, 7):
        for f in range(0, (n + 1) // 2):
            for faults in itertools.combinations(range(1, n + 1), f):
                for truth, mat in _matrices(n, faults, rng, 3):
                    honest_rows = mat.bits[truth.honest_mask()]
                    for size in range(1, n + 1):
                        for group in itertools.combinations(range(1, n + 1), size):
                            if not is_c_good(group, 1, mat, truth):
                                continue
                            base = honest_rows[:, np.asarray(group) - 1].sum(axis=0)
                            sums = np.array(list(itertools.product(range(f + 1), repeat=size)))
                            ok = 2 * (base + sums) > n
                            assert ok.any(axis=1).all()
                            first = ok.argmax(axis=1)
                            assert (first == first[0]).all()
                            assert group[first[0]] not in truth.fault_set
                            checked += 1
    assert checked > 1000


def _random_votes(rnd, traffic, view, kind="pred", seed=0):
    rng = random.Random(hash((rnd, seed)))
    out = []
    for env in traffic:
        if env[2] != kind:
            continue
        length = len(env[4][0])
        for b in sorted(view.faults):
            for dest in range(1, view.n + 1):
                if rng.random() < 0.8:
                    out.append((b, dest, kind, env[3], (np.array([rng.random() < 0.5 for _ in range(length)]),)))
        break
    return out


class _View:
    def __init__(self, n, faults):
        self.n, self.faults = n, faults


def _random_adv(n, faults, kind, seed):
    view = _View(n, faults)
    return Scripted(lambda rnd, traffic, _v: _random_votes(rnd, traffic, view, kind, seed))


def test_preprocessed_oracle_matches_direct_runs():
    rng = random.Random(3)
    compared = 0
    for n in range(3, 9):
        f = (n - 1) // 2
        faults = frozenset(rng.sample(range(1, n + 1), f))
        for truth, mat in _matrices(n, faults, rng, 2):
            seed = rng.randrange(10**6)
            pre = run(lambda ctx: prediction_exchange(ctx), n, f, faults, matrix=mat,
                      adversary=_random_adv(n, faults, "pred", seed))
            oracles = pre.decisions
            for size in range(1, n + 1):
                for group in itertools.combinations(range(1, n + 1), size):
                    if not is_c_good(group, 1, mat, truth):
                        continue
                    direct = run(lambda ctx: simple_election(ctx, list(group)), n, f, faults,
                                 matrix=mat, adversary=_random_adv(n, faults, "pred", seed + size))
                    for p, out in direct.decisions.items():
                        assert oracles[p].elect(list(group)).leader == out.leader
                    compared += 1
    assert compared > 200


@pytest.mark.parametrize("n", [8, 10, 16])
def test_preprocessing_costs_n_cubed_bits_once(n):
    e = run(lambda ctx: prediction_exchange(ctx), n)
    assert e.bits_sent == n * n * 8 * math.ceil(n / 8)
    assert n ** 3 <= e.bits_sent < n * n * (n + 8)
    before = e.bits_sent
    for oracle in e.decisions.values():
        oracle.elect([1, 2])
    assert e.bits_sent == before


def test_small_group_election_examples():
    n = 8
    e = run(lambda ctx: small_group_election(ctx, [2, 3, 4, 5]), n, t=1, faults={2})
    assert set(outcome(e).values()) == {3} and e.round == 2
    # two faulty members of four stay silent: the honest pair is not a majority
    e = run(lambda ctx: small_group_election(ctx, [1, 2, 3, 4]), n, t=2, faults={3, 4})
    assert {d.error for d in e.decisions.values()} == {"NoMajorityLeader"}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_small_group_agreement_on_half_good_groups(seed):
    rng = random.Random(seed)
    n = rng.randrange(6, 14)
    f = rng.randrange(0, (n - 1) // 2 + 1)
    faults = frozenset(rng.sample(range(1, n + 1), f))
    truth = GroundTruth(faults, n, f)
    mat = generate_predictions(truth, rng.randrange(0, 2 * n), "uniform", seed)
    group = sorted(rng.sample(range(1, n + 1), rng.randrange(1, n + 1)))
    e = run(lambda ctx: small_group_election(ctx, group), n, f, faults, matrix=mat,
            adversary=_random_adv(n, faults, "vote", seed))
    leaders = set(outcome(e).values())
    if is_c_good(group, 0.5, mat, truth):
        assert len(leaders) == 1 and leaders.pop() not in faults
    assert leaders <= set(group) | {None}


def test_large_group_election_scaled_instance():
    n, size = 100, 60
    e = run(lambda ctx: large_group_election(ctx, list(range(1, size + 1))), n, t=10,
            faults=set(range(1, 11)))
    assert set(outcome(e).values()) == {11} and e.round == 3


def test_large_group_starved_member_still_common_winner(monkeypatch):
    # cap shrunk to 4 so that truncation bites at n=21
    monkeypatch.setattr(el, "list_cap", lambda n: 4)
    n, faults, group = 21, {1, 2, 3}, list(range(1, 13))
    bits = np.array(perfect(n, faults).bits)
    bits[[3, 4, 5, 6, 7, 8, 9], 0:3] = True  # 7 rows stay under the misclassification threshold
    truth = GroundTruth(frozenset(faults), n, 3)
    from bapred.predictions import PredictionMatrix
    mat = PredictionMatrix(bits)
    assert is_c_good(group, 0.5, mat, truth)

    def script(rnd, traffic, view):
        if rnd != 0:
            return []
        return [(b, d, "lvote", (), ((5, 6, 7),)) for b in faults for d in group if d % 2]
    e = run(lambda ctx: large_group_election(ctx, group), n, 3, faults, matrix=mat,
            adversary=Scripted(script))
    leaders = set(outcome(e).values())
    assert len(leaders) == 1 and leaders.pop() not in faults


def test_authenticated_election_examples():
    n = 7
    e = run(lambda ctx: authenticated_election(ctx, [1, 2, 5]), n, t=1, faults={1})
    assert set(outcome(e).values()) == {2} and e.round == 2

    def forge(rnd, traffic, view):
        if rnd != 1:
            return []
        shares = [view.keys[1].share_sign(el.vote_threshold(n), ("vote", 1))]
        with pytest.raises(Exception):
            view.scheme.combine(el.vote_threshold(n), shares)
        return []
    e = run(lambda ctx: authenticated_election(ctx, [1, 2]), n, t=1, faults={1},
            adversary=Scripted(forge))
    assert set(outcome(e).values()) == {2}


@pytest.mark.parametrize("n,f", [(8, 3), (16, 7), (32, 15)])
def test_authenticated_oracle_matches_direct_runs(n, f):
    rng = random.Random(n)
    faults = frozenset(rng.sample(range(1, n + 1), f))
    truth = GroundTruth(faults, n, f)
    mat = generate_predictions(truth, n, "uniform", n)
    pre = run(lambda ctx: authenticated_exchange(ctx), n, f, faults, matrix=mat)
    assert pre.round == 2
    for _ in range(12):
        group = sorted(rng.sample(range(1, n + 1), rng.randrange(1, 6)))
        if not is_c_good(group, 1, mat, truth):
            continue
        direct = run(lambda ctx: authenticated_election(ctx, group), n, f, faults, matrix=mat)
        for p, out in direct.decisions.items():
            assert pre.decisions[p].elect(group).leader == out.leader not in faults


def test_dispatch_routing(monkeypatch):
    assert is_large_group(120, 4) and not is_large_group(119, 4)
    assert is_large_group(3600, 3600) and not is_large_group(3599, 3600)
    rounds = {}
    for mode in ("unauth_simple", "unauth_subcubic", "auth"):
        e = run(lambda ctx: dispatch_election(ctx, [1, 2], mode), 4)
        rounds[mode] = e.round
        assert set(outcome(e).values()) == {1}
    assert rounds == {"unauth_simple": 1, "unauth_subcubic": 2, "auth": 2}
    monkeypatch.setattr(el, "is_large_group", lambda size, n: True)
    e = run(lambda ctx: dispatch_election(ctx, [1, 2, 3], "unauth_subcubic"), 4)
    assert e.round == 3 and set(outcome(e).values()) == {1}
    with pytest.raises(Exception):
        run(lambda ctx: dispatch_election(ctx, [1], "nope"), 2)
