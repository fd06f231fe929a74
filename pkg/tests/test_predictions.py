from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bapred.predictions import (
    GroundTruth, InfeasibleBudget, InvalidGrouping, PredictionMatrix, PreconditionUnsatisfiable,
    check_good_group_lemma, count_errors, generate_predictions, is_c_good, lemma_constants,
    m_grouping, misclassified_set, misclassify_cost, valid_m_range,
)


def truth_of(n, faults, t=None):
    faults = frozenset(faults)
    return GroundTruth(faults, n, max(len(faults), t or 0))


def test_count_errors_examples():
    tr = truth_of(3, {3})
    assert count_errors(PredictionMatrix.perfect(tr), tr) == 0
    bits = np.array(PredictionMatrix.perfect(tr).bits)
    bits[0] = [1, 1, 1]
    assert count_errors(PredictionMatrix(bits), tr) == 1
    bits = np.array(PredictionMatrix.perfect(tr).bits)
    bits[2] = [0, 0, 1]  # faulty row, every bit wrong
    assert count_errors(PredictionMatrix(bits), tr) == 0


def test_misclassified_examples():
    tr = truth_of(4, {4})
    assert misclassified_set(PredictionMatrix.perfect(tr), tr) == set()
    bits = np.array(PredictionMatrix.perfect(tr).bits)
    bits[0, 3] = True
    assert misclassified_set(PredictionMatrix(bits), tr) == {4}
    bits = np.array(PredictionMatrix.perfect(tr).bits)
    bits[:3, 1] = False
    assert 2 in misclassified_set(PredictionMatrix(bits), tr)


def test_misclassified_thresholds_are_exact_for_odd_n():
    # n=5, f=1: a faulty process needs 3/2 honest votes, so one vote is not enough
    tr = truth_of(5, {5})
    bits = np.array(PredictionMatrix.perfect(tr).bits)
    bits[0, 4] = True
    assert misclassified_set(PredictionMatrix(bits), tr) == set()
    bits[1, 4] = True
    assert misclassified_set(PredictionMatrix(bits), tr) == {5}


def test_grouping_examples():
    assert [len(g) for g in m_grouping(10, 3)] == [4, 3, 3]
    assert m_grouping(10, 3)[0] == [1, 2, 3, 4]
    assert m_grouping(7, 7) == [[p] for p in range(1, 8)]
    assert m_grouping(7, 1) == [list(range(1, 8))]
    for bad in (0, 8):
        with pytest.raises(InvalidGrouping):
            m_grouping(7, bad)


def test_grouping_invariants_exhaustive():
    for n in range(1, 513):
        ids = list(range(1, n + 1))
        for m in range(1, n + 1):
            groups = m_grouping(n, m)
            lo, hi = n // m, -(-n // m)
            assert len(groups) == m
            assert all(len(g) in (lo, hi) for g in groups)
            assert [p for g in groups for p in g] == ids


def test_c_good_examples():
    tr = truth_of(8, {1, 2})
    perfect = PredictionMatrix.perfect(tr)
    assert is_c_good([3, 4, 5], Fraction(1, 5), perfect, tr)
    assert not is_c_good([1, 2, 3, 4], Fraction(1, 2), perfect, tr)
    assert is_c_good([2, 3, 4, 5], Fraction(1, 2), perfect, tr)
    with pytest.raises(ValueError):
        is_c_good([3], 0, perfect, tr)


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 30), st.data())
def test_c_good_monotone(n, data):
    f = data.draw(st.integers(0, n - 1))
    tr = truth_of(n, data.draw(st.sets(st.integers(1, n), min_size=f, max_size=f)))
    B = data.draw(st.integers(0, (n - f) * n))
    mat = generate_predictions(tr, B, "uniform", data.draw(st.integers(0, 99)))
    group = sorted(data.draw(st.sets(st.integers(1, n), min_size=1)))
    c1 = Fraction(data.draw(st.integers(1, 12)), 12)
    c2 = Fraction(data.draw(st.integers(c1.numerator, 12)), 12)
    if is_c_good(group, c1, mat, tr):
        assert is_c_good(group, c2, mat, tr)


def test_generate_examples():
    tr = truth_of(12, {3, 7})
    assert count_errors(generate_predictions(tr, 0), tr) == 0
    assert generate_predictions(tr, 0).bits[tr.honest_mask()].tolist() == \
        PredictionMatrix.perfect(tr).bits[tr.honest_mask()].tolist()
    with pytest.raises(InfeasibleBudget):
        generate_predictions(tr, 10 * 12 + 1)


@pytest.mark.parametrize("n,f", [(12, 2), (25, 4), (40, 0), (41, 13)])
def test_adversarial_budget_buys_exact_misclassifications(n, f):
    tr = truth_of(n, range(1, f + 1))
    B = 3 * misclassify_cost(tr)
    mat = generate_predictions(tr, B, "adversarial_misclassify", seed=5)
    assert count_errors(mat, tr) == B
    assert len(misclassified_set(mat, tr)) == 3


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 40), st.data(),
       st.sampled_from(["uniform", "concentrated_on_targets", "adversarial_misclassify"]))
def test_generate_round_trip_and_misclassification_bound(n, data, placement):
    f = data.draw(st.integers(0, (n - 1) // 2))
    tr = truth_of(n, data.draw(st.sets(st.integers(1, n), min_size=f, max_size=f)))
    B = data.draw(st.integers(0, (n - f) * n))
    mat = generate_predictions(tr, B, placement, data.draw(st.integers(0, 10**6)))
    assert count_errors(mat, tr) == B
    # each misclassified column holds at least (n - 2f)/2 honest errors
    mis = misclassified_set(mat, tr)
    assert len(mis) * Fraction(n - 2 * f, 2) <= B
    assert PredictionMatrix.from_text(mat.to_text()) == mat


def test_text_format():
    mat = PredictionMatrix([[1, 0], [1, 1]])
    assert mat.to_text() == "1 10\n2 11\n"
    for bad in ("1 10\n", "1 10\n2 1x\n", "1 10\n3 11\n"):
        with pytest.raises(ValueError):
            PredictionMatrix.from_text(bad)


def test_lemma_constants_and_ranges():
    c = lemma_constants("one_good_23", Fraction(1, 12))
    assert c["c1"] == 24 and c["c2"] == Fraction(1, 7)
    c = lemma_constants("half_good_23", Fraction(1, 12))
    assert c["c1"] == 12 and c["c2"] == Fraction(1, 3)
    c = lemma_constants("one_good_exists", Fraction(1, 6))
    assert c["c1"] == 12 and c["c2"] == Fraction(1, 5)
    assert valid_m_range("one_good_23", 120, 0, Fraction(1, 12)) == range(1, 18)


def test_lemma_trivial_instance_and_precondition():
    n = 120
    tr = truth_of(n, ())
    rep = check_good_group_lemma("one_good_23", n, 0, 0, 10, PredictionMatrix.perfect(tr), tr)
    assert rep.holds and rep.good_count == 10 and rep.bound == 7
    f = 31  # (1/3 - 1/12) * 120 = 30
    tr = truth_of(n, range(1, f + 1))
    with pytest.raises(PreconditionUnsatisfiable):
        check_good_group_lemma("one_good_23", n, f, 0, 10, PredictionMatrix.perfect(tr), tr)
    tr = truth_of(n, ())
    with pytest.raises(PreconditionUnsatisfiable):
        check_good_group_lemma("one_good_23", n, 0, 1, 24, PredictionMatrix.perfect(tr), tr)
