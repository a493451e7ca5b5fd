"""Exact binomial arithmetic and the per-geometry terms of the certification condition.

All quantities are Python integers or :class:`fractions.Fraction`, so products such as
C(465750, 9000) * C(465750, 1000) (about 75,000 bits) are held without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import ConfigError, InfeasibleBudgetError

ATTACKS = ("modification", "addition", "deletion")

Rational = Fraction


@dataclass(frozen=True)
class ModalitySpec:
    """Subsampling geometry and threat type of one modality."""

    n: int
    k: int
    attack: str = "modification"
    name: str = ""

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise ConfigError(f"unknown attack type {self.attack!r}")
        if not (isinstance(self.n, int) and isinstance(self.k, int)):
            raise ConfigError("n and k must be integers")
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"modality {self.name or '?'}: need 1 <= k <= n, got k={self.k}, n={self.n}")

    def with_attack(self, attack: str) -> "ModalitySpec":
        return ModalitySpec(self.n, self.k, attack, self.name)


@lru_cache(maxsize=4096)
def binom(n: int, k: int) -> int:
    """Exact binomial coefficient; 0 when k > n or either argument is negative."""
    if k < 0 or n < 0 or k > n:
        return 0
    return math.comb(n, k)


def attack_params(attack: str, n: int, r: int) -> tuple[int, int]:
    """Return ``(e, n_prime)``: elements shared with the attacked input and its size."""
    if r < 0:
        raise InfeasibleBudgetError(f"negative budget r={r}")
    if attack == "modification":
        if r > n:
            raise InfeasibleBudgetError(f"cannot modify {r} of {n} elements")
        return n - r, n
    if attack == "addition":
        return n, n + r
    if attack == "deletion":
        if r > n:
            raise InfeasibleBudgetError(f"cannot delete {r} of {n} elements")
        return n - r, n - r
    raise ConfigError(f"unknown attack type {attack!r}")


def floor_ratio(p: Fraction, d: int) -> int:
    return (p.numerator * d) // p.denominator


def ceil_ratio(p: Fraction, d: int) -> int:
    return -((-p.numerator * d) // p.denominator)


def as_fraction(p) -> Fraction:
    """Exact rational value of a float, int or Fraction (floats convert without rounding)."""
    if isinstance(p, Fraction):
        return p
    return Fraction(p)


@dataclass(frozen=True)
class CertTerms:
    """Exact products D = prod C(n_i, k_i), D' = prod C(n'_i, k_i), E = prod C(e_i, k_i)."""

    specs: tuple[ModalitySpec, ...]
    budget: tuple[int, ...]
    e: tuple[int, ...]
    n_prime: tuple[int, ...]
    D: int
    D_prime: int
    E: int

    @property
    def overlap_pre(self) -> Fraction:
        """E/D: probability a pre-attack subsample avoids every attacked element."""
        return Fraction(self.E, self.D)

    @property
    def overlap_post(self) -> Fraction:
        """E/D'."""
        return Fraction(self.E, self.D_prime)

    @property
    def scale(self) -> Fraction:
        """D/D'."""
        return Fraction(self.D, self.D_prime)

    def delta_l(self, p) -> Fraction:
        p = as_fraction(p)
        return p - Fraction(floor_ratio(p, self.D), self.D)

    def delta_u(self, p) -> Fraction:
        p = as_fraction(p)
        return Fraction(ceil_ratio(p, self.D), self.D) - p


def _normalize(specs: Sequence[ModalitySpec], budget: Iterable[int]):
    specs = tuple(specs)
    budget = tuple(int(r) for r in budget)
    if len(budget) != len(specs):
        raise ConfigError(f"budget has {len(budget)} entries for {len(specs)} modalities")
    return specs, budget


def cert_terms(specs: Sequence[ModalitySpec], budget: Iterable[int]) -> CertTerms:
    """Memoized :class:`CertTerms` for one (geometry, budget) pair."""
    return _cert_terms(*_normalize(specs, budget))


@lru_cache(maxsize=1024)
def _cert_terms(specs: tuple[ModalitySpec, ...], budget: tuple[int, ...]) -> CertTerms:
    es, nps = [], []
    D = Dp = E = 1
    for spec, r in zip(specs, budget):
        e, n_prime = attack_params(spec.attack, spec.n, r)
        if n_prime < spec.k:
            # post-attack input cannot be subsampled at all
            raise InfeasibleBudgetError(
                f"modality {spec.name or '?'}: {spec.attack} of {r} leaves {n_prime} < k={spec.k} elements"
            )
        es.append(e)
        nps.append(n_prime)
        D *= binom(spec.n, spec.k)
        Dp *= binom(n_prime, spec.k)
        E *= binom(e, spec.k)
    return CertTerms(specs, budget, tuple(es), tuple(nps), D, Dp, E)


def clear_caches() -> None:
    binom.cache_clear()
    _cert_terms.cache_clear()
    _log_terms.cache_clear()


# -- log-space terms for the fast path ---------------------------------------------


def _log_drop_ratio(n: int, k: int, r: int) -> float:
    """log(C(n - r, k) / C(n, k)) as a telescoping product of r factors."""
    if n - r < k:
        return -math.inf
    return math.fsum(math.log1p(-k / (n - j)) for j in range(r))


def _log_grow_ratio(n: int, k: int, r: int) -> float:
    """log(C(n, k) / C(n + r, k))."""
    return math.fsum(math.log1p(-k / (n + j)) for j in range(1, r + 1))


def log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class LogTerms:
    """Float logs of D/D', E/D' and D, each with an absolute error bound."""

    log_scale: float
    log_overlap_post: float
    log_D: float
    abs_err: float


def log_terms(specs: Sequence[ModalitySpec], budget: Iterable[int]) -> LogTerms:
    return _log_terms(*_normalize(specs, budget))


@lru_cache(maxsize=1024)
def _log_terms(specs: tuple[ModalitySpec, ...], budget: tuple[int, ...]) -> LogTerms:
    log_scale = 0.0
    log_post = 0.0
    log_D = 0.0
    terms = 0
    magnitude = 0.0
    for spec, r in zip(specs, budget):
        e, n_prime = attack_params(spec.attack, spec.n, r)
        if n_prime < spec.k:
            raise InfeasibleBudgetError(
                f"modality {spec.name or '?'}: {spec.attack} of {r} leaves {n_prime} < k={spec.k} elements"
            )
        n, k = spec.n, spec.k
        if spec.attack == "modification":
            log_post += _log_drop_ratio(n, k, r)
        elif spec.attack == "addition":
            g = _log_grow_ratio(n, k, r)
            log_scale += g
            log_post += g
        else:
            log_scale -= _log_drop_ratio(n, k, r)
        log_D += log_binom(n, k)
        magnitude += math.lgamma(n + 1)
        terms += r + 3
    # each log1p term carries a few ulps and lgamma a few ulps of its magnitude
    return LogTerms(log_scale, log_post, log_D, 1e-12 * terms + 1e-14 * magnitude)
