"""Certification of multi-modal classification against per-modality element budgets.

The certified condition compares a lower bound on the post-attack probability of
the top label A with an upper bound on that of the runner-up B::

    (D/D') (pA - dl - 1 + E/D)  >=  (D/D') (pB + du) + 1 - E/D'

Multiplying through by D' turns both sides into integers over a common
denominator, which is how the exact path evaluates it.

At equality the adversary can force an exact tie between A and some other
label, and the ensemble breaks ties toward the smallest label. Equality
therefore certifies only when A is label 0, the only label that wins every tie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .combinatorics import (
    CertTerms,
    ModalitySpec,
    as_fraction,
    ceil_ratio,
    cert_terms,
    floor_ratio,
    log_terms,
)
from .confidence import ProbBoundPair, VoteCounts
from .errors import ConfigError, InfeasibleBudgetError

MODES = ("exact", "fast")


@dataclass(frozen=True)
class CertificateDecision:
    """Outcome of one certification check.

    ``lhs`` and ``rhs`` are exact in exact mode. In fast mode they are the
    conservatively rounded floats the decision was based on.
    """

    certified: bool
    lhs: Fraction | float
    rhs: Fraction | float
    terms: CertTerms | None
    exact: bool = True


def ensemble_predict(votes: VoteCounts) -> int:
    """Majority label, smallest index on ties."""
    return votes.top[0]


def _check_bounds(p_a, p_b):
    for name, p in (("p_A_lower", p_a), ("p_B_upper", p_b)):
        if not 0 <= p <= 1:
            raise ConfigError(f"{name} must lie in [0, 1], got {p}")


def condition_counts(p_a, p_b, terms: CertTerms) -> tuple[int, int]:
    """Integer numerators of both sides over the common denominator D'."""
    p_a = as_fraction(p_a)
    p_b = as_fraction(p_b)
    D, Dp, E = terms.D, terms.D_prime, terms.E
    lhs = floor_ratio(p_a, D) - D + E
    rhs = ceil_ratio(p_b, D) + Dp - E
    return lhs, rhs


def certify_exact(p_a, p_b, specs: Sequence[ModalitySpec], budget: Sequence[int], wins_ties: bool = True) -> CertificateDecision:
    """Exact rational check. ``wins_ties`` says whether A beats every label it could tie with."""
    _check_bounds(p_a, p_b)
    terms = cert_terms(specs, budget)
    lhs, rhs = condition_counts(p_a, p_b, terms)
    ok = lhs > rhs or (wins_ties and lhs == rhs)
    return CertificateDecision(ok, Fraction(lhs, terms.D_prime), Fraction(rhs, terms.D_prime), terms, True)


def certify_fast(p_a: float, p_b: float, specs: Sequence[ModalitySpec], budget: Sequence[int]) -> CertificateDecision:
    """Log-space evaluation; a ``True`` here always implies ``True`` from the exact path.

    The rounding slacks are replaced by their bound 1/D, and every float term is
    widened by its error bound in the direction that hurts certification.
    """
    _check_bounds(p_a, p_b)
    lt = log_terms(specs, budget)
    err = lt.abs_err
    # relative widening of exp() of a log carrying absolute error err
    widen = math.expm1(err + 1e-15) + 4e-16
    scale = math.exp(lt.log_scale) if lt.log_scale < 709.0 else math.inf
    post = math.exp(lt.log_overlap_post) if lt.log_overlap_post > -math.inf else 0.0
    inv_d = math.exp(-lt.log_D + err) if lt.log_D - err < 700 else 5e-324
    inv_d = max(inv_d, 5e-324)

    # lhs = scale * (pA - 1/D - 1) + E/D'   (scale * E/D == E/D')
    # rhs = scale * (pB + 1/D) + 1 - E/D'
    head = float(p_a) - inv_d - 1.0  # <= 0, so a larger scale only lowers lhs
    lhs = scale * (1 + widen) * head + post * (1 - widen)
    rhs = scale * (1 + widen) * (float(p_b) + inv_d) + 1.0 - post * (1 - widen)
    # absorb the handful of roundings in the two lines above
    slack = 8e-16 * (scale * 2 + 2 + 2 * post)
    if math.isinf(scale):
        return CertificateDecision(False, -math.inf, math.inf, None, False)
    lhs -= slack
    rhs += slack
    return CertificateDecision(lhs > rhs, lhs, rhs, None, False)


def certify(
    bounds: ProbBoundPair,
    specs: Sequence[ModalitySpec],
    budget: Sequence[int],
    mode: str = "exact",
) -> CertificateDecision:
    """Check whether the ensemble prediction is stable for every attack within ``budget``."""
    if mode == "exact":
        return certify_exact(bounds.p_A_lower, bounds.p_B_upper, specs, budget, wins_ties=bounds.A == 0)
    if mode == "fast":
        return certify_fast(bounds.p_A_lower, bounds.p_B_upper, specs, budget)
    raise ConfigError(f"unknown mode {mode!r}")


def ray_budget(r1: int, direction: Sequence[Fraction]) -> tuple[int, ...]:
    """Budget on the ray r_i = floor(c_i * r_1), with c_1 = 1."""
    return tuple(math.floor(Fraction(c) * r1) for c in direction)


def normalize_direction(direction, num_modalities: int) -> tuple[Fraction, ...]:
    """Accept a scalar c (two modalities, r_2 = c r_1) or a full per-modality vector."""
    if isinstance(direction, (list, tuple)):
        cs = tuple(Fraction(str(c)) if isinstance(c, float) else Fraction(c) for c in direction)
        if len(cs) == num_modalities - 1:
            cs = (Fraction(1),) + cs
    else:
        c = Fraction(str(direction)) if isinstance(direction, float) else Fraction(direction)
        cs = (Fraction(1),) + (c,) * (num_modalities - 1)
    if len(cs) != num_modalities:
        raise ConfigError(f"direction needs {num_modalities} entries, got {len(cs)}")
    if any(c < 0 for c in cs) or cs[0] <= 0:
        raise ConfigError("direction entries must be non-negative with c_1 > 0")
    return cs


@dataclass(frozen=True)
class RadiusPoint:
    r1: int
    budget: tuple[int, ...]
    certified: bool


def certified_radius_curve(
    bounds: ProbBoundPair,
    specs: Sequence[ModalitySpec],
    direction,
    r_max: int,
    mode: str = "exact",
) -> tuple[list[RadiusPoint], int | None]:
    """Decisions for r_1 = 0..r_max along a ray, plus the largest certified r_1.

    Every point is evaluated; no monotonicity is assumed. Budgets that exceed a
    modality's size are reported as not certified.
    """
    if r_max < 0:
        raise ConfigError("r_max must be non-negative")
    cs = normalize_direction(direction, len(specs))
    points = []
    best = None
    for r1 in range(r_max + 1):
        budget = ray_budget(r1, cs)
        try:
            ok = certify(bounds, specs, budget, mode).certified
        except InfeasibleBudgetError:
            ok = False
        points.append(RadiusPoint(r1, budget, ok))
        if ok:
            best = r1
    return points, best
