"""Independent per-modality subsampling and Monte Carlo vote collection.

Inputs are tuples of modalities, each a sequence of hashable element tokens.
The synthetic tasks use tokens ``(position, feature)`` where ``feature`` is a
class label the toy classifiers vote with.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .combinatorics import ModalitySpec, binom
from .confidence import VoteCounts
from .errors import ConfigError, EnumerationLimitError

MultiModalInput = tuple  # tuple[Sequence[Hashable], ...]
SubsampledInput = tuple  # tuple[tuple[Hashable, ...], ...]


class BaseClassifier(Protocol):
    def __call__(self, z: SubsampledInput) -> int: ...


def stream_key(sample_id) -> int:
    """Stable 63-bit key for a sample identifier (str or int)."""
    if isinstance(sample_id, (int, np.integer)):
        return int(sample_id) & (2**63 - 1)
    digest = hashlib.sha256(str(sample_id).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def draw_rng(seed: int, sample_id, draw: int) -> np.random.Generator:
    """Generator for one Monte Carlo draw, independent of every other (seed, sample, draw)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_key(sample_id), int(draw)))
    return np.random.Generator(np.random.PCG64(ss))


def check_sizes(x: MultiModalInput, specs: Sequence[ModalitySpec]) -> None:
    if len(x) != len(specs):
        raise ConfigError(f"input has {len(x)} modalities, specs declare {len(specs)}")
    for i, (m, spec) in enumerate(zip(x, specs)):
        if len(m) != spec.n:
            raise ConfigError(f"modality {i} has {len(m)} elements, spec declares n={spec.n}")


def subsample_indices(specs: Sequence[ModalitySpec], rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Sorted positions of k_i elements drawn uniformly without replacement per modality."""
    return tuple(np.sort(rng.choice(spec.n, size=spec.k, replace=False)) for spec in specs)


def subsample(x: MultiModalInput, specs: Sequence[ModalitySpec], rng) -> SubsampledInput:
    """Keep k_i uniformly chosen elements of each modality, independently across modalities.

    ``rng`` is a Generator or an integer seed.
    """
    check_sizes(x, specs)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    idx = subsample_indices(specs, rng)
    return tuple(tuple(m[j] for j in ix) for m, ix in zip(x, idx))


def monte_carlo_votes(
    x: MultiModalInput,
    base: BaseClassifier,
    specs: Sequence[ModalitySpec],
    N: int,
    num_classes: int,
    seed: int = 0,
    sample_id=0,
    sampler: Callable | None = None,
) -> VoteCounts:
    """Tally the base classifier over N independent subsamples.

    ``sampler(x, rng)`` replaces the independent per-modality subsampler (the
    ablation baseline draws from the concatenated modalities instead).
    """
    if N < 1:
        raise ConfigError("N must be positive")
    if sampler is None:
        check_sizes(x, specs)

        def sampler(inp, rng):
            return subsample(inp, specs, rng)

    counts = Counter()
    for t in range(N):
        counts[int(base(sampler(x, draw_rng(seed, sample_id, t))))] += 1
    return VoteCounts(dict(counts), N, num_classes)


# -- base classifiers -------------------------------------------------------------


def table_key(z: SubsampledInput) -> tuple:
    return tuple(tuple(sorted(zi)) for zi in z)


@dataclass
class LookupTableClassifier:
    """Explicit map from subsample to label; unseen subsamples get ``default``.

    ``default`` is a label or a callable of the normalized key.
    """

    table: Mapping[tuple, int]
    default: int | Callable[[tuple], int] = 0

    def __call__(self, z: SubsampledInput) -> int:
        key = table_key(z)
        if key in self.table:
            return self.table[key]
        return self.default(key) if callable(self.default) else self.default


@dataclass
class MajorityFeatureClassifier:
    """Votes by the most frequent feature among all kept elements; ties go to the smaller label."""

    num_classes: int

    def __call__(self, z: SubsampledInput) -> int:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for zi in z:
            for _, feature in zi:
                counts[feature] += 1
        return int(np.argmax(counts))


def majority_label_probs(x: MultiModalInput, specs: Sequence[ModalitySpec], num_classes: int) -> list[Fraction]:
    """Exact label probabilities of :class:`MajorityFeatureClassifier` on ``x``.

    Sums over the multivariate hypergeometric distribution of feature counts in
    each modality's subsample rather than over the subsamples themselves.
    """
    check_sizes(x, specs)
    total = Counter({(0,) * num_classes: 1})
    denom = 1
    for m, spec in zip(x, specs):
        avail = [0] * num_classes
        for _, f in m:
            avail[f] += 1
        local = Counter()
        for comp in _compositions(spec.k, num_classes):
            w = math.prod(binom(a, c) for a, c in zip(avail, comp))
            if w:
                local[comp] += w
        merged = Counter()
        for u, wu in total.items():
            for v, wv in local.items():
                merged[tuple(a + b for a, b in zip(u, v))] += wu * wv
        total = merged
        denom *= binom(spec.n, spec.k)
    probs = [0] * num_classes
    for comp, w in total.items():
        probs[int(np.argmax(comp))] += w
    return [Fraction(p, denom) for p in probs]


def _compositions(k: int, parts: int):
    if parts == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, parts - 1):
            yield (first,) + rest


# -- synthetic tasks --------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic task.

    ``separation`` in [0, 1] sets how strongly element features follow the class:
    a fraction 1/C + s(1 - 1/C) of each modality carries the true label. A
    scalar applies to every modality; a sequence sets it per modality.
    """

    n: tuple[int, ...]
    num_classes: int = 2
    separation: float | tuple[float, ...] = 0.5
    num_samples: int = 20
    task: str = "classification"
    segmented: int = 0
    regions: int = 8

    def separations(self) -> tuple[float, ...]:
        if isinstance(self.separation, (int, float)):
            return (float(self.separation),) * len(self.n)
        seps = tuple(float(s) for s in self.separation)
        if len(seps) != len(self.n):
            raise ConfigError("separation needs one entry per modality")
        return seps


@dataclass
class SynthSample:
    sample_id: str
    x: MultiModalInput
    label: int | np.ndarray


def _feature_list(n: int, label: int, sep: float, num_classes: int, rng: np.random.Generator) -> list[int]:
    agree = int(round(n * (1.0 / num_classes + sep * (1.0 - 1.0 / num_classes))))
    others = [l for l in range(num_classes) if l != label]
    feats = [label] * agree + [others[j % len(others)] for j in range(n - agree)]
    rng.shuffle(feats)
    return feats


def synth_dataset(config: SynthConfig, seed: int = 0) -> list[SynthSample]:
    """Deterministic synthetic classification or segmentation samples.

    Classification: each sample has one label and every modality's features
    follow it. Segmentation: positions are split into ``regions`` contiguous
    blocks per modality, each block has its own label, and the ground truth of
    the segmented modality is the block label of each element.
    """
    if not 0 <= config.segmented < len(config.n):
        raise ConfigError("segmented modality index out of range")
    seps = config.separations()
    out = []
    for s in range(config.num_samples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(s,)))
        sid = f"s{s}"
        if config.task == "classification":
            label = int(rng.integers(config.num_classes))
            x = tuple(
                tuple(enumerate(_feature_list(n, label, sep, config.num_classes, rng)))
                for n, sep in zip(config.n, seps)
            )
            out.append(SynthSample(sid, x, label))
        elif config.task == "segmentation":
            region_labels = rng.integers(config.num_classes, size=config.regions)
            mods = []
            for n, sep in zip(config.n, seps):
                regions = region_of(n, config.regions)
                feats = np.empty(n, dtype=int)
                for g in range(config.regions):
                    where = np.flatnonzero(regions == g)
                    feats[where] = _feature_list(where.size, int(region_labels[g]), sep, config.num_classes, rng)
                mods.append(tuple(enumerate(feats.tolist())))
            gt = region_labels[region_of(config.n[config.segmented], config.regions)]
            out.append(SynthSample(sid, tuple(mods), gt))
        else:
            raise ConfigError(f"unknown task {config.task!r}")
    return out


def region_of(n: int, regions: int) -> np.ndarray:
    return (np.arange(n) * regions) // n


@dataclass
class RegionMajoritySegmenter:
    """Toy segmenter: each element takes the majority feature of kept elements in its region.

    Regions are aligned across modalities by relative position. A region with no
    kept element falls back to the global majority.
    """

    n: tuple[int, ...]
    num_classes: int
    segmented: int = 0
    regions: int = 8

    def __post_init__(self):
        self._region_maps = [region_of(n, self.regions) for n in self.n]

    def predict_indices(self, x: MultiModalInput, idx: Sequence[np.ndarray]) -> np.ndarray:
        C = self.num_classes
        counts = np.zeros(self.regions * C, dtype=np.int64)
        for i, ix in enumerate(idx):
            feats = np.fromiter((x[i][j][1] for j in ix), dtype=np.int64, count=len(ix))
            counts += np.bincount(self._region_maps[i][ix] * C + feats, minlength=self.regions * C)
        counts = counts.reshape(self.regions, C)
        pred = np.argmax(counts, axis=1)
        empty = counts.sum(axis=1) == 0
        if empty.any():
            pred[empty] = int(np.argmax(counts.sum(axis=0)))
        return pred[self._region_maps[self.segmented]]


def monte_carlo_element_votes(
    x: MultiModalInput,
    seg: RegionMajoritySegmenter,
    specs: Sequence[ModalitySpec],
    N: int,
    seed: int = 0,
    sample_id=0,
    index_sampler: Callable | None = None,
) -> np.ndarray:
    """(n_o, C) array of per-element label counts over N subsamples."""
    check_sizes(x, specs)
    if index_sampler is None:
        def index_sampler(rng):
            return subsample_indices(specs, rng)
    n_o = len(x[seg.segmented])
    counts = np.zeros((n_o, seg.num_classes), dtype=np.int64)
    rows = np.arange(n_o)
    for t in range(N):
        pred = seg.predict_indices(x, index_sampler(draw_rng(seed, sample_id, t)))
        counts[rows, pred] += 1
    return counts


def enumerate_label_probs(x: MultiModalInput, base: BaseClassifier, specs: Sequence[ModalitySpec], num_classes: int, limit: int = 10**6) -> list[Fraction]:
    """Exact label probabilities by visiting every joint subsample (small inputs only)."""
    check_sizes(x, specs)
    size = math.prod(binom(s.n, s.k) for s in specs)
    if size > limit:
        raise EnumerationLimitError(f"{size} joint subsamples exceed the limit {limit}")
    counts = [0] * num_classes
    per_mod = [list(itertools.combinations(m, s.k)) for m, s in zip(x, specs)]
    for z in itertools.product(*per_mod):
        counts[int(base(z))] += 1
    return [Fraction(c, size) for c in counts]
