"""Per-element certification of segmentation outputs.

Each element j of the segmented modality gets the smallest confidence budget
alpha*_j at which its own certification condition holds. A Holm step-down over
the alpha*_j then picks the elements reported stable, keeping the family-wise
probability of a false certification at most alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .classification import certify
from .combinatorics import ModalitySpec
from .confidence import ProbBoundPair, VoteCounts, lower_bound, upper_bound
from .errors import ConfigError, InfeasibleBudgetError

BISECTION_STEPS = 50
ALPHA_CEILING = 1.0 - 2.0 ** -50


@dataclass(frozen=True)
class ElementVotes:
    index: int
    votes: VoteCounts
    gt: int | None = None


@dataclass(frozen=True)
class ElementCertification:
    index: int
    predicted: int
    alpha_star: float
    stable: bool = False
    gt: int | None = None


@dataclass(frozen=True)
class SegmentationTally:
    TP: int
    TN: int
    FP: int
    FN: int

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN


def bounds_at(n_a: int, n_b: int, N: int, num_classes: int, alpha: float, a: int = 0, b: int = 1) -> ProbBoundPair:
    level = alpha / num_classes
    return ProbBoundPair(lower_bound(n_a, N, level), upper_bound(n_b, N, level), a, b, alpha)


def search_alpha_star(holds: Callable[[float], bool]) -> float:
    """Smallest alpha in (0, 1) with ``holds(alpha)``, or 1 if none.

    ``holds`` must be monotone (false below some point, true above). The result
    is within 2**-50 above the infimum and always satisfies ``holds``.
    """
    if not holds(ALPHA_CEILING):
        return 1.0
    lo, hi = 0.0, ALPHA_CEILING
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


@lru_cache(maxsize=65536)
def _alpha_star_counts(n_a, n_b, N, num_classes, specs, budget, mode, wins_ties=True) -> float:
    a, b = (0, 1) if wins_ties else (1, 0)

    def holds(alpha):
        return certify(bounds_at(n_a, n_b, N, num_classes, alpha, a, b), specs, budget, mode).certified

    try:
        return search_alpha_star(holds)
    except InfeasibleBudgetError:
        return 1.0


def alpha_star(votes: VoteCounts, specs: Sequence[ModalitySpec], budget: Sequence[int], mode: str = "exact") -> float:
    """Smallest per-element confidence budget at which the element certifies.

    Depends on the votes only through (N_A, N_B) and whether A is label 0 (which
    decides exact ties), so results are memoized on those for a fixed geometry.
    """
    a, n_a, _, n_b = votes.top
    return _alpha_star_counts(n_a, n_b, votes.N, votes.num_classes, tuple(specs), tuple(int(r) for r in budget), mode, a == 0)


def holm_mask(alphas: Sequence[float], alpha: float) -> np.ndarray:
    """Boolean mask of elements kept by the Holm step-down procedure."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    a = np.asarray(alphas, dtype=float)
    n_o = a.size
    if n_o == 0:
        return np.zeros(0, dtype=bool)
    ordered = np.sort(a)
    thresholds = alpha / (n_o + 1 - np.arange(1, n_o + 1))
    violations = np.flatnonzero(ordered > thresholds)
    if violations.size == 0:
        return np.ones(n_o, dtype=bool)
    cutoff = ordered[violations[0]]
    return a < cutoff


def holm_select(alphas: Sequence[float], alpha: float) -> set[int]:
    """Positions of ``alphas`` reported certifiably stable."""
    return set(np.flatnonzero(holm_mask(alphas, alpha)).tolist())


def certify_elements(
    elements: Sequence[ElementVotes],
    specs: Sequence[ModalitySpec],
    budget: Sequence[int],
    alpha: float,
    mode: str = "exact",
    alpha_star_fn: Callable[[VoteCounts], float] | None = None,
) -> list[ElementCertification]:
    """alpha*_j for every element followed by Holm selection."""
    if alpha_star_fn is None:
        def alpha_star_fn(v):
            return alpha_star(v, specs, budget, mode)
    stars = [alpha_star_fn(e.votes) for e in elements]
    mask = holm_mask(stars, alpha)
    return [
        ElementCertification(e.index, e.votes.top[0], s, bool(m), e.gt)
        for e, s, m in zip(elements, stars, mask)
    ]


def tally(predicted: Iterable[int], gt: Iterable[int], stable: Iterable[bool], positive: int = 1) -> SegmentationTally:
    """TP/TN/FP/FN counts where only stable, correct elements count as true.

    ``positive`` is the label treated as 1; every other label counts as 0.
    """
    pred = np.asarray(list(predicted)) == positive
    truth = np.asarray(list(gt)) == positive
    st = np.asarray(list(stable), dtype=bool)
    tp = int(np.count_nonzero(pred & truth & st))
    tn = int(np.count_nonzero(~pred & ~truth & st))
    fp = int(np.count_nonzero(pred)) - tp
    fn = int(np.count_nonzero(~pred)) - tn
    return SegmentationTally(tp, tn, fp, fn)


def _ratio(num, den) -> float:
    return num / den if den > 0 else 0.0


def certified_metrics(t: SegmentationTally, attack: str = "modification", r_o: int = 0) -> tuple[float, float, float]:
    """Certified (pixel accuracy, F-score, IoU) for one sample.

    Addition on the segmented modality counts the r_o inserted elements as
    wrong; deletion assumes the r_o removed elements were true positives.
    Negative intermediates clamp to 0 and a zero denominator yields 0.
    """
    TP, TN, FP, FN = t.TP, t.TN, t.FP, t.FN
    if attack == "modification":
        extra, tp = 0, TP
        acc = _ratio(TP + TN, TP + TN + FP + FN)
    elif attack == "addition":
        extra, tp = r_o, TP
        acc = _ratio(TP + TN, TP + TN + FP + FN + r_o)
    elif attack == "deletion":
        extra, tp = 0, max(TP - r_o, 0)
        acc = _ratio(max(TP + TN - r_o, 0), max(TP + TN + FP + FN - r_o, 0))
    else:
        raise ConfigError(f"unknown attack type {attack!r}")
    f_score = _ratio(2 * tp * tp, 2 * tp * tp + tp * (FP + FN + extra))
    if attack == "deletion":
        iou = _ratio(tp, max(TP + FP + FN - r_o, 0))
    else:
        iou = _ratio(tp, TP + FP + FN + extra)
    return acc, f_score, iou


def mean_metrics(per_sample: Sequence[tuple[float, float, float]]) -> tuple[float, float, float]:
    if not per_sample:
        return 0.0, 0.0, 0.0
    arr = np.asarray(per_sample, dtype=float)
    return tuple(float(x) for x in arr.mean(axis=0))


def segmented_budget(specs: Sequence[ModalitySpec], budget: Sequence[int], segmented: int) -> tuple[str, int]:
    """(attack type, r_o) on the segmented modality."""
    if not 0 <= segmented < len(specs):
        raise ConfigError(f"segmented modality index {segmented} out of range")
    return specs[segmented].attack, int(budget[segmented])
