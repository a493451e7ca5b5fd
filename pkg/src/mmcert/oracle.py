"""Brute-force ground truth for small instances.

Elements are tokens ``(position, value)``. The clean input holds value 0 at every
position. Canonical attacks act on the first r_i positions: modification writes
value 1 there, deletion removes them, and addition appends positions
n_i .. n_i + r_i - 1 carrying value 1.

Subsamples of the clean input (X) and of the attacked input (Y) live in one
joint outcome space, split into three parts:

* ``A``: subsamples of the clean input that touch an attacked element,
* ``B``: subsamples drawn entirely from elements both inputs share,
* ``C``: subsamples of the attacked input that touch an attacked element.

X is uniform on A and B, Y is uniform on B and C. Every closed-form quantity
in the certificate can then be checked by counting.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .classification import certify, certify_exact
from .combinatorics import ModalitySpec, as_fraction, binom, cert_terms, ceil_ratio, floor_ratio
from .confidence import ProbBoundPair
from .errors import EnumerationLimitError, InfeasibleBudgetError
from .sampling import LookupTableClassifier, table_key

ENUM_LIMIT = 10**6
EXHAUSTIVE_LIMIT = 5 * 10**6


def clean_input(specs: Sequence[ModalitySpec]) -> tuple[tuple[tuple[int, int], ...], ...]:
    return tuple(tuple((j, 0) for j in range(s.n)) for s in specs)


def attacked_modality(m: Sequence[tuple[int, int]], attack: str, r: int, positions: Iterable[int] | None = None, value: int = 1):
    """Apply one canonical (or positioned) attack of size r to a modality."""
    n = len(m)
    if positions is None:
        positions = range(r)
    positions = list(positions)
    if attack == "addition":
        return tuple(m) + tuple((n + j, value) for j in range(r))
    if len(positions) != r or any(not 0 <= p < n for p in positions):
        raise InfeasibleBudgetError(f"need {r} distinct positions in 0..{n - 1}")
    hit = set(positions)
    if attack == "modification":
        return tuple((p, value) if p in hit else (p, v) for p, v in m)
    if attack == "deletion":
        return tuple(t for t in m if t[0] not in hit)
    raise ValueError(f"unknown attack {attack!r}")


@dataclass(frozen=True)
class SubsetPartition:
    clean: tuple
    attacked: tuple
    A: tuple
    B: tuple
    C: tuple

    @property
    def D(self) -> int:
        return len(self.A) + len(self.B)

    @property
    def D_prime(self) -> int:
        return len(self.B) + len(self.C)


def partition(specs: Sequence[ModalitySpec], budget: Sequence[int], positions=None, limit: int = ENUM_LIMIT) -> SubsetPartition:
    """Split the joint subsample space of the clean and attacked inputs.

    ``positions`` optionally gives, per modality, which positions are modified or
    deleted; the default is the first r_i.
    """
    specs = tuple(specs)
    m = clean_input(specs)
    mp = tuple(
        attacked_modality(mi, s.attack, r, None if positions is None else positions[i])
        for i, (mi, s, r) in enumerate(zip(m, specs, budget))
    )
    universes = []
    size = 1
    for mi, mpi, s in zip(m, mp, specs):
        u = sorted(set(mi) | set(mpi))
        universes.append(u)
        size *= binom(len(u), s.k)
    if size > limit:
        raise EnumerationLimitError(f"{size} joint outcomes exceed the limit {limit}")

    # per modality: each k-subset of the union with its membership flags
    flagged = []
    for mi, mpi, u, s in zip(m, mp, universes, specs):
        a, b = set(mi), set(mpi)
        rows = []
        for sub in itertools.combinations(u, s.k):
            ss = set(sub)
            rows.append((sub, ss <= a, ss <= b))
        flagged.append(rows)

    A, B, C = [], [], []
    for combo in itertools.product(*flagged):
        in_x = all(c[1] for c in combo)
        in_y = all(c[2] for c in combo)
        key = tuple(c[0] for c in combo)
        if in_x and in_y:
            B.append(key)
        elif in_x:
            A.append(key)
        elif in_y:
            C.append(key)
    return SubsetPartition(m, mp, tuple(A), tuple(B), tuple(C))


@dataclass(frozen=True)
class OverlapProbs:
    x_A: Fraction
    x_B: Fraction
    x_C: Fraction
    y_A: Fraction
    y_B: Fraction
    y_C: Fraction


def enumerate_probs(specs: Sequence[ModalitySpec], budget: Sequence[int], positions=None) -> OverlapProbs:
    """Exact probabilities of X and Y landing in each part, by counting."""
    p = partition(specs, budget, positions)
    D, Dp = p.D, p.D_prime
    return OverlapProbs(
        Fraction(len(p.A), D), Fraction(len(p.B), D), Fraction(0),
        Fraction(0), Fraction(len(p.B), Dp), Fraction(len(p.C), Dp),
    )


def closed_form_probs(specs: Sequence[ModalitySpec], budget: Sequence[int]) -> OverlapProbs:
    t = cert_terms(specs, budget)
    return OverlapProbs(1 - t.overlap_pre, t.overlap_pre, Fraction(0), Fraction(0), t.overlap_post, 1 - t.overlap_post)


# -- worst-case classifiers -------------------------------------------------------

LABEL_A, LABEL_B = 0, 1


def worst_case_classifier(part: SubsetPartition, p, direction: str = "lower") -> tuple[LookupTableClassifier, Fraction]:
    """Lookup table realizing the extremal post-attack probability of one label.

    ``lower``: label A on all of part A plus just enough of part B to give A a
    clean-input probability of floor(p D)/D; B elsewhere. ``upper``: label B on
    part C plus ceil(p D) subsamples of part B; A elsewhere. Returns the table
    and the clean-input probability it assigns to the tracked label.
    """
    p = as_fraction(p)
    D = part.D
    if direction == "lower":
        target = floor_ratio(p, D)
        take = max(0, min(len(part.B), target - len(part.A)))
        keep_a = part.A if target >= len(part.A) else part.A[:target]
        s = set(keep_a) | set(part.B[:take])
        table = {key: LABEL_A for key in s}
        return LookupTableClassifier(table, LABEL_B), Fraction(len(s), D)
    if direction == "upper":
        target = ceil_ratio(p, D)
        take = min(len(part.B), target)
        extra = part.A[: max(0, target - len(part.B))]
        s = set(part.C) | set(part.B[:take]) | set(extra)
        table = {key: LABEL_B for key in s}
        return LookupTableClassifier(table, LABEL_A), Fraction(take + len(extra), D)
    raise ValueError(f"direction must be 'lower' or 'upper', got {direction!r}")


def post_attack_prob(part: SubsetPartition, clf, label: int) -> Fraction:
    hits = sum(1 for key in part.B + part.C if clf(key) == label)
    return Fraction(hits, part.D_prime)


def worst_case_adversarial_prob(p, specs: Sequence[ModalitySpec], budget: Sequence[int], direction: str = "lower") -> Fraction:
    """Post-attack probability of the tracked label under the extremal classifier.

    For ``lower`` this is the smallest post-attack probability of A consistent
    with a clean-input probability of at least p (rounded down to the grid of
    multiples of 1/D); 0 once p no longer exceeds the mass of part A. For
    ``upper`` it is the largest post-attack probability of B consistent with a
    clean-input probability of at most p.
    """
    part = partition(specs, budget)
    clf, _ = worst_case_classifier(part, p, direction)
    if direction == "lower":
        if floor_ratio(as_fraction(p), part.D) <= len(part.A):
            return Fraction(0)
        return post_attack_prob(part, clf, LABEL_A)
    return post_attack_prob(part, clf, LABEL_B)


def closed_form_bound(p, specs: Sequence[ModalitySpec], budget: Sequence[int], direction: str = "lower") -> Fraction:
    """The two sides of the certificate evaluated term by term in exact rationals."""
    t = cert_terms(specs, budget)
    p = as_fraction(p)
    scale = Fraction(t.D, t.D_prime)
    if direction == "lower":
        return scale * (p - t.delta_l(p) - 1 + Fraction(t.E, t.D))
    return scale * (p + t.delta_u(p)) + 1 - Fraction(t.E, t.D_prime)


def realizable(p, specs: Sequence[ModalitySpec], budget: Sequence[int], direction: str) -> bool:
    """Whether the extremal set can be built inside part B (no clipping)."""
    t = cert_terms(specs, budget)
    p = as_fraction(p)
    if direction == "lower":
        return 0 <= floor_ratio(p, t.D) - (t.D - t.E) <= t.E
    return ceil_ratio(p, t.D) <= t.E


# -- exhaustive stability ---------------------------------------------------------


def _modality_variants(m, spec: ModalitySpec, r: int, alphabet: Sequence[int]):
    n = len(m)
    if spec.attack == "modification":
        for size in range(r + 1):
            for pos in itertools.combinations(range(n), size):
                for vals in itertools.product(alphabet, repeat=size):
                    change = dict(zip(pos, vals))
                    yield tuple((p, change.get(p, v)) for p, v in m)
    elif spec.attack == "addition":
        for size in range(r + 1):
            for vals in itertools.product(alphabet, repeat=size):
                yield tuple(m) + tuple((n + j, v) for j, v in enumerate(vals))
    elif spec.attack == "deletion":
        for size in range(r + 1):
            for pos in itertools.combinations(range(n), size):
                gone = set(pos)
                yield tuple(t for t in m if t[0] not in gone)
    else:
        raise ValueError(f"unknown attack {spec.attack!r}")


def exact_probs(x, clf, specs: Sequence[ModalitySpec], num_classes: int) -> list[Fraction] | None:
    """Exact label probabilities of ``clf`` on input ``x``; None if some modality is too small."""
    subs = []
    for mi, s in zip(x, specs):
        if len(mi) < s.k:
            return None
        subs.append(list(itertools.combinations(mi, s.k)))
    counts = [0] * num_classes
    total = 0
    for z in itertools.product(*subs):
        counts[clf(z)] += 1
        total += 1
    return [Fraction(c, total) for c in counts]


def argmax_label(probs: Sequence[Fraction]) -> int:
    best = 0
    for l, p in enumerate(probs):
        if p > probs[best]:
            best = l
    return best


def attack_space_size(x, specs: Sequence[ModalitySpec], budget: Sequence[int], alphabet: Sequence[int]) -> int:
    total = 1
    for mi, s, r in zip(x, specs, budget):
        n = len(mi)
        a = len(alphabet)
        if s.attack == "modification":
            variants = sum(binom(n, j) * a**j for j in range(r + 1))
            largest = binom(n, s.k)
        elif s.attack == "addition":
            variants = sum(a**j for j in range(r + 1))
            largest = binom(n + r, s.k)
        else:
            variants = sum(binom(n, j) for j in range(r + 1))
            largest = binom(n, s.k)
        total *= variants * largest
    return total


def exhaustive_certify(
    clf,
    x,
    specs: Sequence[ModalitySpec],
    budget: Sequence[int],
    num_classes: int = 2,
    alphabet: Sequence[int] = (1, 2),
    limit: int = EXHAUSTIVE_LIMIT,
) -> bool:
    """Ground-truth stability: the ensemble argmax on every attacked input equals the clean one.

    Attacked inputs range over every choice of up to r_i positions (and, for
    modification and addition, every value in ``alphabet``) in each modality.
    Attacked inputs too small to subsample are skipped.
    """
    if attack_space_size(x, specs, budget, alphabet) > limit:
        raise EnumerationLimitError("attack space too large for exhaustive search")
    clean = exact_probs(x, clf, specs, num_classes)
    target = argmax_label(clean)
    per_mod = [list(_modality_variants(mi, s, r, alphabet)) for mi, s, r in zip(x, specs, budget)]
    for xp in itertools.product(*per_mod):
        probs = exact_probs(xp, clf, specs, num_classes)
        if probs is None:
            continue
        if argmax_label(probs) != target:
            return False
    return True


@dataclass
class HashedTableClassifier:
    """Pseudo-random lookup table over every possible subsample.

    Each normalized subsample maps to label 0 with probability ``bias`` and to a
    uniformly chosen other label otherwise, derived from a keyed hash so the
    table never needs materializing.
    """

    seed: int
    num_classes: int = 2
    bias: float = 0.5

    def __call__(self, z) -> int:
        digest = hashlib.blake2b(repr(table_key(z)).encode(), digest_size=8, key=self.seed.to_bytes(8, "little")).digest()
        u = int.from_bytes(digest, "little")
        if (u >> 11) / 2.0**53 < self.bias:
            return 0
        return 1 + (u & 0x7FF) % (self.num_classes - 1)


def attack_witness(specs: Sequence[ModalitySpec], budget: Sequence[int], count_a: int):
    """Adversary-favoring classifier for a clean-input A-probability of count_a/D.

    Label A covers part A and count_a - |A| subsamples of part B, label B the rest,
    so the certificate's lower bound for A and upper bound for B are both met
    with equality. Returns ``(classifier, clean input, p_A, p_B)``.
    """
    part = partition(specs, budget)
    if not len(part.A) <= count_a <= part.D:
        raise ValueError("count_a must cover part A and fit in the clean space")
    s = set(part.A) | set(part.B[: count_a - len(part.A)])
    clf = LookupTableClassifier({key: LABEL_A for key in s}, LABEL_B)
    p_a = Fraction(count_a, part.D)
    return clf, part.clean, p_a, 1 - p_a


# -- grid sweeps used by the acceptance suite and the CLI ----------------------------


def small_grid(ns=range(3, 7), ks=range(1, 4), rs=range(0, 3), modalities=(1, 2), attacks=("modification", "addition", "deletion")):
    """Yield ``(specs, budget)`` over a grid of small geometries; infeasible ones are skipped."""
    per_mod = [
        (n, k, r, a)
        for n in ns for k in ks for r in rs for a in attacks
        if k <= n
    ]
    for T in modalities:
        for combo in itertools.product(per_mod, repeat=T):
            specs = tuple(ModalitySpec(n, k, a) for n, k, r, a in combo)
            budget = tuple(r for n, k, r, a in combo)
            try:
                cert_terms(specs, budget)
            except InfeasibleBudgetError:
                continue
            yield specs, budget


def probe_points(D: int) -> list[Fraction]:
    """A spread of probabilities on and off the 1/D grid."""
    pts = {Fraction(0), Fraction(1), Fraction(1, 2), Fraction(D - 1, D), Fraction(1, D)}
    for j in range(0, D + 1, max(1, D // 7)):
        pts.add(Fraction(j, D))
    pts.add(Fraction(2, 3))
    pts.add(Fraction(0.8125))
    pts.add(Fraction(1, 2) + Fraction(1, 3 * D))
    return sorted(p for p in pts if 0 <= p <= 1)


@dataclass
class GridReport:
    name: str
    checked: int
    failures: list
    certified: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures


def check_probs_grid(grid) -> GridReport:
    checked, failures = 0, []
    for specs, budget in grid:
        if enumerate_probs(specs, budget) != closed_form_probs(specs, budget):
            failures.append((specs, budget))
        checked += 1
    return GridReport("closed_form_vs_enumeration", checked, failures)


def check_bounds_grid(grid) -> GridReport:
    checked, failures = 0, []
    for specs, budget in grid:
        part = partition(specs, budget)
        for p in probe_points(part.D):
            for direction in ("lower", "upper"):
                if not realizable(p, specs, budget, direction):
                    continue
                clf, _ = worst_case_classifier(part, p, direction)
                label = LABEL_A if direction == "lower" else LABEL_B
                got = post_attack_prob(part, clf, label)
                if got != closed_form_bound(p, specs, budget, direction):
                    failures.append((specs, budget, p, direction))
                checked += 1
    return GridReport("bound_tightness", checked, failures)


def check_soundness(instances: int = 500, seed: int = 0) -> GridReport:
    """Random hashed-table classifiers: a certificate must never be contradicted."""
    import random

    rng = random.Random(seed)
    geometries = [
        (ModalitySpec(4, 1, "modification"),),
        (ModalitySpec(5, 2, "modification"),),
        (ModalitySpec(4, 2, "addition"),),
        (ModalitySpec(5, 2, "deletion"),),
        (ModalitySpec(3, 1, "modification"), ModalitySpec(4, 2, "modification")),
        (ModalitySpec(3, 1, "addition"), ModalitySpec(3, 1, "deletion")),
        (ModalitySpec(4, 1, "deletion"), ModalitySpec(3, 2, "modification")),
    ]
    checked, failures, certified = 0, [], 0
    for t in range(instances):
        specs = geometries[t % len(geometries)]
        budget = tuple(rng.randint(0, 1) for _ in specs)
        num_classes = rng.choice((2, 3))
        clf = HashedTableClassifier(rng.getrandbits(63), num_classes, bias=rng.uniform(0.6, 0.98))
        x = clean_input(specs)
        probs = exact_probs(x, clf, specs, num_classes)
        order = sorted(range(num_classes), key=lambda l: (-probs[l], l))
        a, b = order[0], order[1]
        try:
            dec = certify(ProbBoundPair(probs[a], probs[b], a, b, 0.0), specs, budget)
        except InfeasibleBudgetError:
            continue
        checked += 1
        if dec.certified:
            certified += 1
            if not exhaustive_certify(clf, x, specs, budget, num_classes, alphabet=(1, 2)):
                failures.append((specs, budget, clf.seed))
    return GridReport("soundness", checked, failures, certified)


def check_witnesses(grid) -> GridReport:
    """Every non-certified realizable instance is broken by its witness classifier."""
    checked, failures = 0, []
    for specs, budget in grid:
        part = partition(specs, budget)
        D = part.D
        for count_a in range(max(len(part.A), (D + 1) // 2), D + 1):
            clf, x, p_a, p_b = attack_witness(specs, budget, count_a)
            dec = certify_exact(p_a, p_b, specs, budget)
            stable = exhaustive_certify(clf, x, specs, budget, 2, alphabet=(1,))
            if stable != dec.certified:
                failures.append((specs, budget, count_a, dec.certified, stable))
            checked += 1
    return GridReport("tightness_witness", checked, failures)
