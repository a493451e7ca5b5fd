from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mmcert.combinatorics import (
    ModalitySpec,
    attack_params,
    binom,
    cert_terms,
    log_binom,
    log_terms,
)
from mmcert.errors import ConfigError, InfeasibleBudgetError


def pascal_row(n):
    row = [1]
    for _ in range(n):
        row = [a + b for a, b in zip([0] + row, row + [0])]
    return row


def test_binom_examples():
    assert binom(4, 0) == 1
    assert binom(3, 5) == 0
    assert binom(52, 5) == 2_598_960
    assert binom(-1, 0) == 0


def test_binom_matches_pascal_triangle():
    for n in range(40):
        assert [binom(n, k) for k in range(n + 1)] == pascal_row(n)


@given(st.integers(1, 3000), st.integers(1, 3000))
def test_pascal_identity(n, k):
    assert binom(n, k) == binom(n - 1, k - 1) + binom(n - 1, k)


def test_attack_params_examples():
    assert attack_params("modification", 108, 5) == (103, 108)
    assert attack_params("addition", 10, 0) == (10, 10)
    assert attack_params("addition", 10, 3) == (10, 13)
    assert attack_params("deletion", 10, 3) == (7, 7)
    with pytest.raises(ConfigError):
        attack_params("swap", 10, 1)


def test_modality_spec_rejects_bad_k():
    with pytest.raises(ConfigError):
        ModalitySpec(5, 0)
    with pytest.raises(ConfigError):
        ModalitySpec(5, 6)
    with pytest.raises(ConfigError):
        ModalitySpec(5, 2, "swap")


def test_cert_terms_examples():
    t = cert_terms([ModalitySpec(4, 2)], [0])
    assert (t.D, t.D_prime, t.overlap_pre) == (6, 6, 1)
    assert t.delta_l(Fraction(5, 6)) == 0
    t = cert_terms([ModalitySpec(4, 2)], [1])
    assert t.E == 3 and t.overlap_pre == Fraction(1, 2)
    t = cert_terms([ModalitySpec(5, 2), ModalitySpec(5, 2)], [1, 1])
    assert (t.D, t.E, t.overlap_pre) == (100, 36, Fraction(9, 25))


def test_deletion_below_k_is_infeasible():
    with pytest.raises(InfeasibleBudgetError):
        cert_terms([ModalitySpec(5, 3, "deletion")], [3])


def test_budget_length_mismatch():
    with pytest.raises(ConfigError):
        cert_terms([ModalitySpec(5, 3)], [1, 1])


@given(st.integers(2, 60), st.data())
def test_deltas_in_range(n, data):
    k = data.draw(st.integers(1, n))
    p = data.draw(st.fractions(min_value=0, max_value=1, max_denominator=10**6))
    t = cert_terms([ModalitySpec(n, k)], [0])
    assert 0 <= t.delta_l(p) < Fraction(1, t.D)
    assert 0 <= t.delta_u(p) < Fraction(1, t.D)
    assert (p - t.delta_l(p)) * t.D == int((p - t.delta_l(p)) * t.D)


@given(st.integers(2, 400), st.integers(1, 50), st.integers(0, 30), st.sampled_from(["modification", "addition", "deletion"]))
def test_log_terms_track_exact(n, k, r, attack):
    k = min(k, n)
    spec = ModalitySpec(n, k, attack)
    try:
        t = cert_terms([spec], [r])
    except InfeasibleBudgetError:
        return
    lt = log_terms([spec], [r])
    import math
    assert abs(lt.log_scale - math.log(Fraction(t.D, t.D_prime))) <= lt.abs_err + 1e-9
    if t.E:
        assert abs(lt.log_overlap_post - math.log(t.overlap_post)) <= lt.abs_err + 1e-9
    assert abs(lt.log_D - math.log(t.D)) <= lt.abs_err + 1e-9


def test_log_binom():
    import math
    assert log_binom(52, 5) == pytest.approx(math.log(2_598_960), rel=1e-12)
