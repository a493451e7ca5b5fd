import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, optimize, special

from mmcert.confidence import VoteCounts, beta_quantile, clopper_pearson, lower_bound, upper_bound
from mmcert.errors import ConfigError, DataError, NumericError


def quad_quantile(q, a, b):
    """Quantile from numerically integrating the beta density (independent of betainc)."""
    norm = math.exp(special.betaln(a, b))

    def cdf(x):
        val, _ = integrate.quad(lambda t: t ** (a - 1) * (1 - t) ** (b - 1), 0.0, x, epsabs=1e-14, epsrel=1e-13)
        return val / norm

    return optimize.brentq(lambda x: cdf(x) - q, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


def test_beta_quantile_uniform():
    assert beta_quantile(0.5, 1, 1) == pytest.approx(0.5, abs=1e-12)


def test_beta_quantile_closed_form():
    assert beta_quantile(0.0005, 100, 1) == pytest.approx(0.0005 ** (1 / 100), abs=1e-12)
    assert beta_quantile(0.0005, 100, 1) == pytest.approx(0.926807842, abs=1e-9)


def test_beta_quantile_against_quadrature():
    assert beta_quantile(0.975, 3, 8) == pytest.approx(quad_quantile(0.975, 3, 8), abs=1e-9)
    assert beta_quantile(0.01, 40, 61) == pytest.approx(quad_quantile(0.01, 40, 61), abs=1e-9)


def test_beta_quantile_residual():
    for q, a, b in [(0.3, 2.5, 7), (0.999, 97, 4), (1e-6, 10, 91)]:
        x = beta_quantile(q, a, b)
        assert special.betainc(a, b, x) == pytest.approx(q, abs=1e-12)


def test_beta_quantile_rejects_bad_input():
    with pytest.raises(ConfigError):
        beta_quantile(1.5, 1, 1)
    with pytest.raises(ConfigError):
        beta_quantile(0.5, 0, 1)


def test_beta_quantile_nan_raises(monkeypatch):
    import mmcert.confidence as conf

    monkeypatch.setattr(conf.special, "betainc", lambda a, b, x: float("nan"))
    with pytest.raises(NumericError):
        conf.beta_quantile(0.4, 3, 4)


def test_beta_quantile_is_smallest_double():
    x = beta_quantile(0.3, 4, 9)
    assert special.betainc(4, 9, x) >= 0.3
    assert special.betainc(4, 9, np.nextafter(x, 0.0)) < 0.3


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.integers(1, 50), st.integers(1, 50))
def test_beta_quantile_monotone_in_q(q1, q2, a, b):
    lo, hi = sorted((q1, q2))
    assert beta_quantile(lo, a, b) <= beta_quantile(hi, a, b)


def test_clopper_pearson_unanimous():
    b = clopper_pearson(VoteCounts({0: 100}, 100, 2), 0.001)
    exact = mpmath.power(mpmath.mpf(0.001 / 2), mpmath.mpf(1) / 100)
    assert b.p_A_lower == pytest.approx(float(exact), abs=1e-12)
    assert b.p_A_lower <= exact
    assert b.A == 0 and b.B == 1


def test_zero_runner_up_limit():
    # zero-success upper limit: 1 - level**(1/N)
    b = clopper_pearson(VoteCounts({1: 100}, 100, 2), 0.001)
    exact = 1 - mpmath.power(mpmath.mpf(0.001 / 2), mpmath.mpf(1) / 100)
    assert b.p_B_upper == pytest.approx(float(exact), abs=1e-12)
    assert b.p_B_upper >= exact
    # same value from integrating the Beta(1, N) density
    assert b.p_B_upper == pytest.approx(quad_quantile(1 - 0.0005, 1, 100), abs=1e-9)


def test_uniform_votes_never_separate():
    b = clopper_pearson(VoteCounts({0: 50, 1: 50}, 100, 2), 0.001)
    assert b.p_A_lower < 0.5 < b.p_B_upper


def test_zero_top_count_gives_zero_lower():
    assert lower_bound(0, 10, 0.01) == 0.0
    assert upper_bound(10, 10, 0.01) == 1.0


def test_ties_go_to_smallest_label():
    assert VoteCounts({0: 5, 1: 5}, 10, 2).top == (0, 5, 1, 5)
    assert VoteCounts({2: 4, 7: 4, 1: 2}, 10, 8).top == (2, 4, 7, 4)
    assert VoteCounts({3: 10}, 10, 5).top == (3, 10, 0, 0)


def test_vote_count_validation():
    with pytest.raises(DataError):
        VoteCounts({0: 99}, 100, 2)
    with pytest.raises(DataError):
        VoteCounts({2: 100}, 100, 2)
    with pytest.raises(ConfigError):
        VoteCounts({0: 1}, 1, 1)
    with pytest.raises(ConfigError):
        clopper_pearson(VoteCounts({0: 1}, 1, 2), 1.0)


@given(st.integers(1, 200), st.data())
def test_monotone_in_counts_and_alpha(N, data):
    n = data.draw(st.integers(0, N - 1))
    a1, a2 = sorted(data.draw(st.lists(st.floats(1e-6, 0.5), min_size=2, max_size=2)))
    assert lower_bound(n, N, a1) <= lower_bound(n + 1, N, a1)
    assert upper_bound(n, N, a1) <= upper_bound(n + 1, N, a1)
    assert lower_bound(n, N, a1) <= lower_bound(n, N, a2)
    assert upper_bound(n, N, a1) >= upper_bound(n, N, a2)
    assert lower_bound(n, N, a1) <= n / N


@pytest.mark.slow
def test_simultaneous_coverage():
    import numpy as np

    rng = np.random.default_rng(7)
    p = np.array([0.6, 0.3, 0.1])
    alpha, N, sims = 0.1, 60, 3000
    misses = 0
    for _ in range(sims):
        counts = rng.multinomial(N, p)
        votes = VoteCounts({l: int(c) for l, c in enumerate(counts) if c}, N, 3)
        b = clopper_pearson(votes, alpha)
        if b.p_A_lower > p[b.A]:
            misses += 1
    # the A-side event alone holds with probability >= 1 - alpha/C
    assert misses / sims <= alpha / 3 + 3 * math.sqrt(alpha / 3 / sims)
