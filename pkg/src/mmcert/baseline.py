"""Randomized-ablation baseline: one subsample of size k over all modalities combined.

Only modification attacks are covered. The condition has no rounding slack::

    pA - 1 + C(n - sum r, k) / C(n, k)  >=  pB + 1 - C(n - sum r, k) / C(n, k)
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .classification import CertificateDecision
from .combinatorics import ModalitySpec, as_fraction, binom
from .confidence import ProbBoundPair, VoteCounts
from .errors import ConfigError, InfeasibleBudgetError
from .sampling import MultiModalInput, SubsampledInput, check_sizes
from .segmentation import bounds_at, holm_select, search_alpha_star


@dataclass(frozen=True)
class CombinedSpec:
    sizes: tuple[int, ...]
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"combined subsample needs 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(np.cumsum((0,) + self.sizes[:-1]).tolist())

    @classmethod
    def from_specs(cls, specs: Sequence[ModalitySpec], k: int) -> "CombinedSpec":
        bad = [s.attack for s in specs if s.attack != "modification"]
        if bad:
            raise ConfigError(f"the ablation baseline only covers modification attacks, got {bad[0]}")
        return cls(tuple(s.n for s in specs), int(k))


def ra_subsample_indices(combined: CombinedSpec, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    picked = np.sort(rng.choice(combined.n, size=combined.k, replace=False))
    out = []
    for off, size in zip(combined.offsets, combined.sizes):
        sel = picked[(picked >= off) & (picked < off + size)]
        out.append(sel - off)
    return tuple(out)


def ra_subsample(x: MultiModalInput, combined: CombinedSpec, rng) -> SubsampledInput:
    """k elements from the concatenated modalities, split back per modality."""
    if len(x) != len(combined.sizes) or any(len(m) != n for m, n in zip(x, combined.sizes)):
        raise ConfigError("input sizes do not match the combined spec")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    idx = ra_subsample_indices(combined, rng)
    return tuple(tuple(m[j] for j in ix) for m, ix in zip(x, idx))


def overlap(combined: CombinedSpec, total_r: int) -> Fraction:
    """C(n - sum r, k) / C(n, k)."""
    if total_r < 0 or total_r > combined.n:
        raise InfeasibleBudgetError(f"total budget {total_r} outside 0..{combined.n}")
    return Fraction(binom(combined.n - total_r, combined.k), binom(combined.n, combined.k))


def ra_certify(bounds: ProbBoundPair, combined: CombinedSpec, budget: Sequence[int]) -> CertificateDecision:
    total = sum(int(r) for r in budget)
    if len(budget) != len(combined.sizes):
        raise ConfigError("budget length does not match the number of modalities")
    rho = overlap(combined, total)
    lhs = as_fraction(bounds.p_A_lower) - 1 + rho
    rhs = as_fraction(bounds.p_B_upper) + 1 - rho
    ok = lhs > rhs or (lhs == rhs and bounds.A == 0)
    return CertificateDecision(ok, lhs, rhs, None, True)


@lru_cache(maxsize=65536)
def _ra_alpha_star_counts(n_a, n_b, N, num_classes, combined, total_r, wins_ties=True) -> float:
    a, b = (0, 1) if wins_ties else (1, 0)

    def holds(alpha):
        return ra_certify(bounds_at(n_a, n_b, N, num_classes, alpha, a, b), combined, (total_r,) + (0,) * (len(combined.sizes) - 1)).certified

    try:
        return search_alpha_star(holds)
    except InfeasibleBudgetError:
        return 1.0


def ra_alpha_star(votes: VoteCounts, combined: CombinedSpec, budget: Sequence[int]) -> float:
    a, n_a, _, n_b = votes.top
    return _ra_alpha_star_counts(n_a, n_b, votes.N, votes.num_classes, combined, sum(int(r) for r in budget), a == 0)


ra_holm = holm_select
