from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmcert.baseline import CombinedSpec, overlap, ra_alpha_star, ra_certify, ra_subsample, ra_subsample_indices
from mmcert.combinatorics import ModalitySpec
from mmcert.confidence import ProbBoundPair, VoteCounts
from mmcert.errors import ConfigError


def pair(p_a, p_b):
    return ProbBoundPair(p_a, p_b, 0, 1, 0.001)


def test_examples():
    cb = CombinedSpec((8,), 3)
    assert overlap(cb, 1) == Fraction(5, 8)
    d = ra_certify(pair(Fraction(9, 10), Fraction(1, 10)), cb, (1,))
    assert d.certified and d.lhs == Fraction(21, 40) and d.rhs == Fraction(19, 40)
    d = ra_certify(pair(Fraction(9, 10), Fraction(1, 10)), cb, (2,))
    assert overlap(cb, 2) == Fraction(5, 14)
    assert not d.certified
    assert float(d.lhs) == pytest.approx(0.2571, abs=1e-4)
    assert float(d.rhs) == pytest.approx(0.7429, abs=1e-4)


@given(st.fractions(0, 1, max_denominator=1000), st.fractions(0, 1, max_denominator=1000))
def test_zero_budget_is_plain_comparison(p_a, p_b):
    cb = CombinedSpec((5, 7), 4)
    assert ra_certify(pair(p_a, p_b), cb, (0, 0)).certified == (p_a >= p_b)


def test_unanimous_with_exhausting_budget():
    cb = CombinedSpec((4, 4), 6)
    assert overlap(cb, 3) == 0
    assert ra_alpha_star(VoteCounts({0: 100}, 100, 2), cb, (2, 1)) == 1.0


def test_combined_subsample_shape():
    cb = CombinedSpec((6, 4, 5), 7)
    rng = np.random.default_rng(0)
    for _ in range(50):
        idx = ra_subsample_indices(cb, rng)
        assert sum(len(ix) for ix in idx) == 7
        assert all(((ix >= 0) & (ix < n)).all() for ix, n in zip(idx, cb.sizes))
    x = (tuple(range(6)), tuple(range(4)), tuple(range(5)))
    assert sum(len(m) for m in ra_subsample(x, CombinedSpec((6, 4, 5), 15), 1)) == 15


def test_combined_subsample_is_uniform_over_concatenation():
    cb = CombinedSpec((3, 2), 2)
    rng = np.random.default_rng(3)
    hits = np.zeros(5)
    trials = 20000
    for _ in range(trials):
        for off, ix in zip(cb.offsets, ra_subsample_indices(cb, rng)):
            hits[off + ix] += 1
    # each of the 5 positions is kept with probability 2/5
    assert np.abs(hits / trials - 0.4).max() < 4 * np.sqrt(0.24 / trials)


def test_rejects_non_modification():
    with pytest.raises(ConfigError):
        CombinedSpec.from_specs([ModalitySpec(5, 2, "deletion")], 2)
    with pytest.raises(ConfigError):
        CombinedSpec((3, 3), 7)
