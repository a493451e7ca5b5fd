from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mmcert import oracle
from mmcert.classification import (
    certified_radius_curve,
    certify,
    certify_exact,
    certify_fast,
    ensemble_predict,
    normalize_direction,
    ray_budget,
)
from mmcert.combinatorics import ModalitySpec, cert_terms
from mmcert.confidence import ProbBoundPair, VoteCounts, clopper_pearson
from mmcert.errors import ConfigError, InfeasibleBudgetError

ATTACK = st.sampled_from(["modification", "addition", "deletion"])
PROB = st.fractions(min_value=0, max_value=1, max_denominator=5000)


def pair(p_a, p_b, a=0, b=1):
    return ProbBoundPair(p_a, p_b, a, b, 0.001)


def term_by_term_condition(p_a, p_b, specs, budget):
    """The certification inequality evaluated term by term in rationals."""
    t = cert_terms(specs, budget)
    scale = Fraction(t.D, t.D_prime)
    lhs = scale * (p_a - t.delta_l(p_a) - 1 + Fraction(t.E, t.D))
    rhs = scale * (p_b + t.delta_u(p_b)) + 1 - Fraction(t.E, t.D_prime)
    return lhs, rhs


@st.composite
def geometry(draw, max_t=2, max_n=30):
    T = draw(st.integers(1, max_t))
    specs, budget = [], []
    for _ in range(T):
        n = draw(st.integers(1, max_n))
        k = draw(st.integers(1, n))
        specs.append(ModalitySpec(n, k, draw(ATTACK)))
        budget.append(draw(st.integers(0, n)))
    return tuple(specs), tuple(budget)


def test_zero_budget_example():
    d = certify_exact(Fraction(5, 6), Fraction(1, 6), [ModalitySpec(4, 2)], [0])
    assert d.certified


def test_unit_budget_example():
    d = certify_exact(Fraction(5, 6), Fraction(1, 6), [ModalitySpec(4, 2)], [1])
    assert not d.certified
    assert d.lhs == Fraction(1, 3) and d.rhs == Fraction(2, 3)


def test_ravdess_geometry_paths_agree():
    specs = [ModalitySpec(108, 5), ModalitySpec(79380, 1000)]
    for budget in [(1, 100), (0, 0), (1, 1), (0, 10)]:
        ex = certify_exact(1.0, 0.0, specs, budget)
        fa = certify_fast(1.0, 0.0, specs, budget)
        assert ex.certified == fa.certified
        assert fa.lhs <= ex.lhs and fa.rhs >= ex.rhs
        assert float(ex.lhs) == pytest.approx(fa.lhs, abs=1e-7)


def test_tie_has_no_radius():
    # equal votes never separate their confidence bounds
    bounds = clopper_pearson(VoteCounts({0: 50, 1: 50}, 100, 2), 0.001)
    assert certified_radius_curve(bounds, [ModalitySpec(10, 3)], 1, 5)[1] is None
    # equal bounds where the tie-break favors the runner-up
    assert certified_radius_curve(pair(0.5, 0.5, a=1, b=0), [ModalitySpec(10, 3)], 1, 5)[1] is None
    # equal bounds with A = 0: the ensemble keeps A on an exact tie, so r = 0 holds
    assert certified_radius_curve(pair(0.5, 0.5), [ModalitySpec(10, 3)], 1, 5)[1] == 0


def test_radius_matches_worst_case_construction():
    specs = (ModalitySpec(10, 3),)
    p_a, p_b = Fraction(9, 10), Fraction(1, 10)
    points, best = certified_radius_curve(pair(p_a, p_b), specs, 1, 6)
    expected = None
    for r in range(7):
        low = oracle.worst_case_adversarial_prob(p_a, specs, (r,), "lower")
        high = oracle.worst_case_adversarial_prob(p_b, specs, (r,), "upper")
        if low >= high:
            expected = r
    assert best == expected
    assert [p.certified for p in points] == [p.r1 <= best for p in points]


def test_equality_certifies_only_when_a_wins_ties():
    specs = [ModalitySpec(4, 1)]
    p_a, p_b = Fraction(3, 4), Fraction(1, 4)
    assert certify_exact(p_a, p_b, specs, [1]).lhs == certify_exact(p_a, p_b, specs, [1]).rhs
    assert certify(pair(p_a, p_b, a=0, b=1), specs, [1]).certified
    assert not certify(pair(p_a, p_b, a=1, b=0), specs, [1]).certified


def test_ensemble_predict_examples():
    assert ensemble_predict(VoteCounts({0: 3, 1: 7}, 10, 2)) == 1
    assert ensemble_predict(VoteCounts({0: 5, 1: 5}, 10, 2)) == 0
    assert ensemble_predict(VoteCounts({2: 4, 7: 4, 1: 2}, 10, 8)) == 2


def test_ray_budget_and_direction():
    cs = normalize_direction(Fraction(1, 2), 2)
    assert [ray_budget(r, cs) for r in range(5)] == [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)]
    assert normalize_direction([1, 3], 2) == (1, 3)
    with pytest.raises(ConfigError):
        normalize_direction([0, 1], 2)


def test_unknown_mode_rejected():
    with pytest.raises(ConfigError):
        certify(pair(0.9, 0.1), [ModalitySpec(4, 2)], [0], mode="approx")


def test_infeasible_budget_raises():
    with pytest.raises(InfeasibleBudgetError):
        certify(pair(0.9, 0.1), [ModalitySpec(4, 2, "deletion")], [3])


@given(geometry(), PROB, PROB)
def test_exact_matches_term_by_term_condition(geom, p_a, p_b):
    specs, budget = geom
    try:
        d = certify_exact(p_a, p_b, specs, budget)
    except InfeasibleBudgetError:
        return
    lhs, rhs = term_by_term_condition(p_a, p_b, specs, budget)
    assert (d.lhs, d.rhs) == (lhs, rhs)
    assert d.certified == (lhs >= rhs)


@given(geometry(), PROB, PROB)
def test_zero_budget_reduction(geom, p_a, p_b):
    specs, _ = geom
    budget = (0,) * len(specs)
    t = cert_terms(specs, budget)
    d = certify_exact(p_a, p_b, specs, budget)
    assert d.certified == (p_a - t.delta_l(p_a) >= p_b + t.delta_u(p_b))


@given(geometry(), PROB, PROB, st.data())
def test_monotone_in_budget(geom, p_a, p_b, data):
    specs, budget = geom
    smaller = tuple(data.draw(st.integers(0, r)) for r in budget)
    try:
        big = certify_exact(p_a, p_b, specs, budget)
    except InfeasibleBudgetError:
        return
    if big.certified:
        assert certify_exact(p_a, p_b, specs, smaller).certified


@given(geometry(), PROB, PROB, PROB, PROB)
def test_monotone_in_evidence(geom, p_a, p_b, up, down):
    specs, budget = geom
    try:
        d = certify_exact(p_a, p_b, specs, budget)
    except InfeasibleBudgetError:
        return
    if d.certified:
        assert certify_exact(max(p_a, up), min(p_b, down), specs, budget).certified


@given(geometry(max_n=2000), st.floats(0, 1), st.floats(0, 1))
def test_fast_implies_exact(geom, p_a, p_b):
    specs, budget = geom
    try:
        exact = certify_exact(p_a, p_b, specs, budget)
    except InfeasibleBudgetError:
        return
    if certify_fast(p_a, p_b, specs, budget).certified:
        assert exact.certified
