"""Run configuration and vote-file ingestion.

Vote files are JSON lines. Classification rows::

    {"sample_id": "s1", "gt": 3, "N": 100, "counts": {"3": 97, "1": 3}}

Segmentation rows, one per element, either full or compact (top two labels)::

    {"sample_id": "img7", "idx": 42, "gt": 1, "counts": {"1": 96, "0": 4}}
    {"sample_id": "img7", "idx": 42, "gt": 1, "top": [[1, 96], [0, 4]]}

``N`` may be omitted when the configuration supplies it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .classification import MODES, normalize_direction
from .combinatorics import ATTACKS, ModalitySpec
from .confidence import VoteCounts
from .errors import ConfigError, DataError
from .segmentation import ElementVotes

TASKS = ("classification", "segmentation")
ENGINES = ("mmcert", "baseline")


@dataclass
class RunConfig:
    modalities: list[ModalitySpec]
    alpha: float = 0.001
    N: int = 100
    num_classes: int = 2
    mode: str = "exact"
    direction: Any = 1
    r_max: int = 10
    seed: int = 0
    task: str = "classification"
    engine: str = "mmcert"
    budget: tuple[int, ...] | None = None
    baseline_k: int | None = None
    segmented: int = 0
    synth: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.modalities:
            raise ConfigError("at least one modality is required")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.N) < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.r_max < 0:
            raise ConfigError("r_max must be non-negative")
        if self.budget is not None:
            self.budget = tuple(int(r) for r in self.budget)
            if len(self.budget) != len(self.modalities):
                raise ConfigError("budget needs one entry per modality")
            if any(r < 0 for r in self.budget):
                raise ConfigError("budget entries must be non-negative")
        self.direction = normalize_direction(self.direction, len(self.modalities))
        if self.engine == "baseline":
            if self.baseline_k is None:
                raise ConfigError("engine 'baseline' needs baseline_k")
            if any(m.attack != "modification" for m in self.modalities):
                raise ConfigError("the ablation baseline only covers modification attacks")
        if not 0 <= self.segmented < len(self.modalities):
            raise ConfigError("segmented modality index out of range")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        try:
            mods = [
                ModalitySpec(int(m["n"]), int(m["k"]), m.get("attack", "modification"), m.get("name", ""))
                for m in d.pop("modalities")
            ]
        except KeyError as exc:
            raise ConfigError(f"modality entry missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad modality entry: {exc}") from None
        known = set(cls.__dataclass_fields__) - {"modalities"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "direction" in d:
            d["direction"] = _parse_direction(d["direction"])
        return cls(modalities=mods, **d)

    def to_dict(self) -> dict:
        """Canonical serializable form; stable across runs for hashing."""
        return {
            "modalities": [{"name": m.name, "n": m.n, "k": m.k, "attack": m.attack} for m in self.modalities],
            "alpha": repr(float(self.alpha)),
            "N": int(self.N),
            "num_classes": self.num_classes,
            "mode": self.mode,
            "direction": [str(c) for c in self.direction],
            "r_max": self.r_max,
            "seed": self.seed,
            "task": self.task,
            "engine": self.engine,
            "budget": list(self.budget) if self.budget is not None else None,
            "baseline_k": self.baseline_k,
            "segmented": self.segmented,
            "synth": self.synth,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_attack(self, attack: str) -> "RunConfig":
        if attack not in ATTACKS:
            raise ConfigError(f"unknown attack type {attack!r}")
        d = self.to_dict()
        for m in d["modalities"]:
            m["attack"] = attack
        d["alpha"] = float(d["alpha"])
        return RunConfig.from_dict(d)


def _parse_direction(v):
    if isinstance(v, str):
        parts = [p.strip() for p in v.split(",") if p.strip()]
        vals = [Fraction(p) for p in parts]
        return vals[0] if len(vals) == 1 else vals
    return v


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(raw)


@dataclass
class SampleVotes:
    sample_id: str
    gt: int | None
    votes: VoteCounts


def _int_counts(raw, lineno) -> dict[int, int]:
    if not isinstance(raw, dict):
        raise DataError("counts must be an object mapping label to count", lineno)
    try:
        out = {int(k): int(v) for k, v in raw.items()}
    except (TypeError, ValueError):
        raise DataError("labels and counts must be integers", lineno) from None
    if any(v < 0 for v in out.values()):
        raise DataError("negative count", lineno)
    return out


def _iter_rows(path):
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot read votes: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(row, dict):
                raise DataError("row must be a JSON object", lineno)
            yield lineno, row


def _row_votes(row, lineno, N_default, num_classes) -> VoteCounts:
    N = row.get("N", N_default)
    if N is None:
        raise DataError("N missing and not set in the config", lineno)
    try:
        N = int(N)
    except (TypeError, ValueError):
        raise DataError("N must be an integer", lineno) from None
    try:
        if "counts" in row:
            return VoteCounts(_int_counts(row["counts"], lineno), N, num_classes)
        if "top" in row:
            top = row["top"]
            if not (isinstance(top, list) and 1 <= len(top) <= 2 and all(isinstance(t, list) and len(t) == 2 for t in top)):
                raise DataError("top must be [[label, count], [label, count]]", lineno)
            counts = {int(l): int(c) for l, c in top}
            if len(counts) != len(top):
                raise DataError("top labels must differ", lineno)
            return VoteCounts(counts, N, num_classes, complete=False)
    except DataError as exc:
        if exc.line is None:
            raise DataError(str(exc), lineno) from None
        raise
    raise DataError("row needs 'counts' or 'top'", lineno)


def _gt(row, lineno, num_classes):
    gt = row.get("gt")
    if gt is None:
        return None
    try:
        gt = int(gt)
    except (TypeError, ValueError):
        raise DataError("gt must be an integer label", lineno) from None
    if not 0 <= gt < num_classes:
        raise DataError(f"gt label {gt} outside 0..{num_classes - 1}", lineno)
    return gt


def read_classification_votes(path, num_classes: int, N: int | None = None) -> list[SampleVotes]:
    out = []
    seen = set()
    for lineno, row in _iter_rows(path):
        if "sample_id" not in row:
            raise DataError("missing sample_id", lineno)
        sid = str(row["sample_id"])
        if sid in seen:
            raise DataError(f"duplicate sample_id {sid!r}", lineno)
        seen.add(sid)
        if "counts" not in row:
            raise DataError("classification rows need full 'counts'", lineno)
        votes = _row_votes(row, lineno, N, num_classes)
        out.append(SampleVotes(sid, _gt(row, lineno, num_classes), votes))
    return out


def read_segmentation_votes(path, num_classes: int, N: int | None = None) -> dict[str, list[ElementVotes]]:
    """Element rows grouped by sample, each group in file order."""
    out: dict[str, list[ElementVotes]] = {}
    for lineno, row in _iter_rows(path):
        if "idx" not in row:
            raise DataError("missing idx", lineno)
        sid = str(row.get("sample_id", "0"))
        votes = _row_votes(row, lineno, N, num_classes)
        try:
            idx = int(row["idx"])
        except (TypeError, ValueError):
            raise DataError("idx must be an integer", lineno) from None
        out.setdefault(sid, []).append(ElementVotes(idx, votes, _gt(row, lineno, num_classes)))
    for sid, elems in out.items():
        Ns = {e.votes.N for e in elems}
        if len(Ns) > 1:
            raise DataError(f"sample {sid!r} mixes vote totals {sorted(Ns)}")
    return out


def write_classification_votes(path, records: list[SampleVotes]) -> None:
    with open(path, "w") as fh:
        for r in records:
            row = {"sample_id": r.sample_id, "gt": r.gt, "N": r.votes.N,
                   "counts": {str(l): c for l, c in sorted(r.votes.counts.items())}}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def write_segmentation_votes(path, samples: dict[str, list[ElementVotes]]) -> None:
    with open(path, "w") as fh:
        for sid, elems in samples.items():
            for e in elems:
                row = {"sample_id": sid, "idx": e.index, "gt": e.gt, "N": e.votes.N,
                       "counts": {str(l): c for l, c in sorted(e.votes.counts.items())}}
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sig12(x) -> float:
    """Round to 12 significant digits for output."""
    return float(f"{float(x):.12g}")


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
