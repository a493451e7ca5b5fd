"""Clopper-Pearson label-probability bounds from Monte Carlo vote counts."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special

from .errors import ConfigError, DataError, NumericError

# allowance for the error of the incomplete beta evaluation itself
QUANTILE_XTOL = 1e-15
MAX_ITER = 64
_ONE_BITS = struct.unpack("<q", struct.pack("<d", 1.0))[0]


@dataclass(frozen=True)
class VoteCounts:
    """Label histogram of N base-classifier predictions over C classes.

    Labels are integers in ``range(num_classes)``; absent labels have count 0. With
    ``complete=False`` the histogram may omit labels, so counts may sum to less than N.
    """

    counts: Mapping[int, int]
    N: int
    num_classes: int
    complete: bool = True
    _top: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        counts = {int(l): int(c) for l, c in self.counts.items() if int(c) != 0}
        if self.num_classes < 2:
            raise ConfigError(f"need at least two classes, got {self.num_classes}")
        if self.N < 1:
            raise DataError(f"N must be positive, got {self.N}")
        for label, c in counts.items():
            if not 0 <= label < self.num_classes:
                raise DataError(f"label {label} outside 0..{self.num_classes - 1}")
            if c < 0:
                raise DataError(f"negative count for label {label}")
        total = sum(counts.values())
        if total != self.N and (self.complete or total > self.N):
            raise DataError(f"counts sum to {total}, expected N={self.N}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "_top", _top_two(counts, self.num_classes))

    @classmethod
    def from_top_two(cls, a: int, n_a: int, b: int, n_b: int, N: int, num_classes: int) -> "VoteCounts":
        """Compact form listing only the two leading labels; other votes stay implicit."""
        return cls({a: n_a, b: n_b}, N, num_classes, complete=False)

    @property
    def top(self) -> tuple[int, int, int, int]:
        """``(A, N_A, B, N_B)`` with ties broken toward the smaller label."""
        return self._top


def _top_two(counts: Mapping[int, int], num_classes: int) -> tuple[int, int, int, int]:
    order = sorted(counts.items(), key=lambda lc: (-lc[1], lc[0]))
    if order:
        a, n_a = order[0]
    else:
        a, n_a = 0, 0
    if len(order) > 1:
        b, n_b = order[1]
    else:
        b = 0 if a != 0 else 1
        n_b = 0
    return a, n_a, b, n_b


@dataclass(frozen=True)
class ProbBoundPair:
    p_A_lower: float
    p_B_upper: float
    A: int
    B: int
    alpha_used: float


def beta_quantile(q: float, a: float, b: float) -> float:
    """Quantile of Beta(a, b): the smallest double x with I_x(a, b) >= q.

    Bisection over the bit patterns of the doubles in [0, 1] (ordered like the
    values), on the regularized incomplete beta function. The bracket
    I_0 = 0 < q <= 1 = I_1 always holds, at most 62 halvings reach adjacent
    doubles, and the result is monotone in q.
    """
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"q must lie in [0, 1], got {q}")
    if a <= 0 or b <= 0:
        raise ConfigError(f"shape parameters must be positive, got a={a}, b={b}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    lo, hi = 0, _ONE_BITS
    for _ in range(MAX_ITER):
        if hi - lo <= 1:
            return _from_bits(hi)
        mid = (lo + hi) // 2
        f = special.betainc(a, b, _from_bits(mid))
        if math.isnan(f):
            raise NumericError(f"incomplete beta returned NaN for a={a}, b={b}")
        if f >= q:
            hi = mid
        else:
            lo = mid
    raise NumericError(f"beta quantile did not converge for q={q}, a={a}, b={b}")


def _from_bits(bits: int) -> float:
    return struct.unpack("<d", struct.pack("<q", bits))[0]


def _margin(x: float) -> float:
    """Outward allowance for evaluation error in a computed quantile."""
    return QUANTILE_XTOL + 4.0 * np.finfo(float).eps * abs(x)


def lower_bound(n_a: int, N: int, level: float) -> float:
    """One-sided lower bound Beta(level; n_a, N - n_a + 1), pushed down past solver error."""
    if n_a <= 0:
        return 0.0
    x = beta_quantile(level, n_a, N - n_a + 1)
    return max(0.0, float(np.nextafter(x - _margin(x), 0.0)))


def upper_bound(n_b: int, N: int, level: float) -> float:
    """Upper bound Beta(1 - level; n_b, N - n_b + 1), pushed up past solver error.

    A zero count uses the zero-success limit 1 - level**(1/N), which is also the
    Beta(1 - level; 1, N) quantile, so it is evaluated that way. A count of N gives 1.
    """
    if n_b >= N:
        return 1.0
    a, b = (n_b, N - n_b + 1) if n_b > 0 else (1, N)
    x = beta_quantile(1.0 - level, a, b)
    return min(1.0, float(np.nextafter(x + _margin(x), 1.0)))


def clopper_pearson(votes: VoteCounts, alpha: float) -> ProbBoundPair:
    """Bonferroni-corrected bounds on the top label (lower) and runner-up (upper)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    a, n_a, b, n_b = votes.top
    level = alpha / votes.num_classes
    return ProbBoundPair(
        p_A_lower=lower_bound(n_a, votes.N, level),
        p_B_upper=upper_bound(n_b, votes.N, level),
        A=a,
        B=b,
        alpha_used=alpha,
    )
