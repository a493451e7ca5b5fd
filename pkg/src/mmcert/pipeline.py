"""Experiment orchestration behind the CLI subcommands.

Every run writes into one output directory:

* ``certifications.jsonl``: one row per sample (classification) or element (segmentation),
* ``curves.csv``: header ``r_1,...,r_T,metric,value``, one row per (budget, metric),
* ``metadata.json``: config hash, seed, mode and library version.

Outputs depend only on (config, votes, seed); worker count never changes a byte.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .baseline import CombinedSpec, ra_alpha_star, ra_certify, ra_subsample, ra_subsample_indices
from .classification import certify, ray_budget
from .confidence import VoteCounts, clopper_pearson
from .datafiles import (
    RunConfig,
    SampleVotes,
    ensure_dir,
    file_digest,
    read_classification_votes,
    read_segmentation_votes,
    sig12,
    write_classification_votes,
    write_segmentation_votes,
)
from .errors import ConfigError, DataError, InfeasibleBudgetError
from .sampling import (
    MajorityFeatureClassifier,
    RegionMajoritySegmenter,
    SynthConfig,
    monte_carlo_element_votes,
    monte_carlo_votes,
    synth_dataset,
)
from .segmentation import (
    BISECTION_STEPS,
    ElementVotes,
    alpha_star,
    certified_metrics,
    holm_mask,
    mean_metrics,
    segmented_budget,
    tally,
)

JOBS_ENV = "MMCERT_JOBS"
SEG_METRICS = ("pixel_acc", "f_score", "iou")


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None


def parallel_map(fn: Callable, items: Sequence, jobs: int, chunksize: int | None = None) -> list:
    """``map`` preserving input order, optionally over a process pool."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (jobs * 8))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def budgets_along_ray(cfg: RunConfig) -> list[tuple[int, ...]]:
    return [ray_budget(r1, cfg.direction) for r1 in range(cfg.r_max + 1)]


# -- classification ----------------------------------------------------------------


@dataclass(frozen=True)
class _ClsTask:
    votes: VoteCounts
    cfg: RunConfig
    budgets: tuple[tuple[int, ...], ...]


def _decide(bounds, cfg: RunConfig, budget) -> tuple[bool, object, object]:
    try:
        if cfg.engine == "baseline":
            dec = ra_certify(bounds, CombinedSpec.from_specs(cfg.modalities, cfg.baseline_k), budget)
        else:
            dec = certify(bounds, cfg.modalities, budget, cfg.mode)
    except InfeasibleBudgetError:
        return False, None, None
    return dec.certified, dec.lhs, dec.rhs


def _classify_one(task: _ClsTask):
    bounds = clopper_pearson(task.votes, task.cfg.alpha)
    return bounds, [_decide(bounds, task.cfg, b) for b in task.budgets]


def classification_rows(records: list[SampleVotes], cfg: RunConfig, budgets, jobs: int = 1):
    tasks = [_ClsTask(r.votes, cfg, tuple(budgets)) for r in records]
    return parallel_map(_classify_one, tasks, jobs)


def _num(x):
    return None if x is None else sig12(x)


def run_classification(cfg: RunConfig, records: list[SampleVotes], out, budgets=None, jobs: int = 1, extra_meta=None, suffix: str = ""):
    """Certify every sample at each budget; write per-sample rows and accuracy curves."""
    if budgets is None:
        budgets = [cfg.budget] if cfg.budget is not None else budgets_along_ray(cfg)
    budgets = [tuple(b) for b in budgets]
    out = ensure_dir(out)
    results = classification_rows(records, cfg, budgets, jobs)
    exact = cfg.mode == "exact" or cfg.engine == "baseline"
    hits = np.zeros(len(budgets), dtype=np.int64)
    with open(out / f"certifications{suffix}.jsonl", "w") as fh:
        for rec, (bounds, decisions) in zip(records, results):
            a, n_a, b, n_b = rec.votes.top
            correct = rec.gt is not None and a == rec.gt
            certified_budgets = [list(bud) for bud, (ok, _, _) in zip(budgets, decisions) if ok]
            for j, (ok, _, _) in enumerate(decisions):
                hits[j] += ok and correct
            row = {
                "sample_id": rec.sample_id,
                "gt": rec.gt,
                "predicted": a,
                "A": a, "N_A": n_a, "B": b, "N_B": n_b,
                "N": rec.votes.N,
                "alpha": cfg.alpha,
                "p_A_lower": sig12(bounds.p_A_lower),
                "p_B_upper": sig12(bounds.p_B_upper),
                "correct": correct,
                "exact": exact,
            }
            if len(budgets) == 1:
                ok, lhs, rhs = decisions[0]
                row.update(budget=list(budgets[0]), certified=ok, lhs=_num(lhs), rhs=_num(rhs))
            else:
                largest = None
                for bud, (ok, _, _) in zip(budgets, decisions):
                    if ok:
                        largest = bud[0]
                row.update(certified_r1=largest, certified_budgets=certified_budgets)
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    total = max(len(records), 1)
    curve = [(bud, "certified_accuracy", hits[j] / total) for j, bud in enumerate(budgets)]
    write_curves(out / f"curves{suffix}.csv", curve, len(cfg.modalities))
    return curve


# -- segmentation ------------------------------------------------------------------


@dataclass(frozen=True)
class _StarTask:
    key: tuple
    cfg: RunConfig
    budget: tuple[int, ...]


def _star_one(task: _StarTask) -> float:
    n_a, n_b, N, wins = task.key
    a, b = (0, 1) if wins else (1, 0)
    votes = VoteCounts.from_top_two(a, n_a, b, n_b, N, task.cfg.num_classes)
    if task.cfg.engine == "baseline":
        return ra_alpha_star(votes, CombinedSpec.from_specs(task.cfg.modalities, task.cfg.baseline_k), task.budget)
    return alpha_star(votes, task.cfg.modalities, task.budget, task.cfg.mode)


def _star_key(votes: VoteCounts) -> tuple:
    a, n_a, _, n_b = votes.top
    return n_a, n_b, votes.N, a == 0


def element_alpha_stars(samples: dict[str, list[ElementVotes]], cfg: RunConfig, budget, jobs: int = 1) -> dict[str, np.ndarray]:
    """alpha*_j for every element; computed once per distinct (N_A, N_B, N, A == 0)."""
    keys = sorted({_star_key(e.votes) for elems in samples.values() for e in elems})
    stars = parallel_map(_star_one, [_StarTask(k, cfg, tuple(budget)) for k in keys], jobs)
    lookup = dict(zip(keys, stars))
    return {
        sid: np.array([lookup[_star_key(e.votes)] for e in elems], dtype=float)
        for sid, elems in samples.items()
    }


def segmentation_metrics(samples, stars, stable, cfg: RunConfig, budget):
    attack, r_o = segmented_budget(cfg.modalities, budget, cfg.segmented)
    per_sample = []
    labels = [1] if cfg.num_classes == 2 else list(range(cfg.num_classes))
    for sid, elems in samples.items():
        if any(e.gt is None for e in elems):
            continue
        pred = [e.votes.top[0] for e in elems]
        gt = [e.gt for e in elems]
        vals = [certified_metrics(tally(pred, gt, stable[sid], positive=l), attack, r_o) for l in labels]
        per_sample.append(mean_metrics(vals))
    return mean_metrics(per_sample), len(per_sample)


def run_segmentation(cfg: RunConfig, samples: dict[str, list[ElementVotes]], out, budgets=None, jobs: int = 1, suffix: str = "", write_elements: bool = True):
    if budgets is None:
        budgets = [cfg.budget] if cfg.budget is not None else budgets_along_ray(cfg)
    budgets = [tuple(b) for b in budgets]
    out = ensure_dir(out)
    curve = []
    exact = cfg.mode == "exact" or cfg.engine == "baseline"
    with open(out / f"certifications{suffix}.jsonl", "w") as fh:
        for budget in budgets:
            stars = element_alpha_stars(samples, cfg, budget, jobs)
            stable = {sid: holm_mask(stars[sid], cfg.alpha) for sid in samples}
            if write_elements:
                for sid, elems in samples.items():
                    for e, s, st in zip(elems, stars[sid], stable[sid]):
                        fh.write(json.dumps({
                            "sample_id": sid, "idx": e.index, "budget": list(budget),
                            "predicted": e.votes.top[0], "gt": e.gt,
                            "alpha_star": sig12(s), "stable": bool(st), "exact": exact,
                        }, sort_keys=True) + "\n")
            (acc, f1, iou), counted = segmentation_metrics(samples, stars, stable, cfg, budget)
            if counted:
                curve += [(budget, "pixel_acc", acc), (budget, "f_score", f1), (budget, "iou", iou)]
            n_stable = sum(int(m.sum()) for m in stable.values())
            n_total = sum(m.size for m in stable.values())
            curve.append((budget, "stable_fraction", n_stable / max(n_total, 1)))
    write_curves(out / f"curves{suffix}.csv", curve, len(cfg.modalities))
    return curve


# -- synthetic pipeline ------------------------------------------------------------


def synth_config(cfg: RunConfig) -> SynthConfig:
    s = cfg.synth or {}
    sep = s.get("separation", 0.5)
    return SynthConfig(
        n=tuple(m.n for m in cfg.modalities),
        num_classes=cfg.num_classes,
        separation=tuple(sep) if isinstance(sep, list) else sep,
        num_samples=int(s.get("num_samples", 20)),
        task=cfg.task,
        segmented=cfg.segmented,
        regions=int(s.get("regions", 8)),
    )


@dataclass(frozen=True)
class _SimTask:
    sample: object
    cfg: RunConfig
    N: int


def _simulate_one(task: _SimTask):
    cfg, smp = task.cfg, task.sample
    if cfg.task == "classification":
        sampler = None
        if cfg.engine == "baseline":
            comb = CombinedSpec.from_specs(cfg.modalities, cfg.baseline_k)

            def sampler(x, rng):
                return ra_subsample(x, comb, rng)
        votes = monte_carlo_votes(smp.x, MajorityFeatureClassifier(cfg.num_classes), cfg.modalities, task.N,
                                  cfg.num_classes, cfg.seed, smp.sample_id, sampler)
        return SampleVotes(smp.sample_id, int(smp.label), votes)
    sc = synth_config(cfg)
    seg = RegionMajoritySegmenter(sc.n, cfg.num_classes, cfg.segmented, sc.regions)
    index_sampler = None
    if cfg.engine == "baseline":
        comb = CombinedSpec.from_specs(cfg.modalities, cfg.baseline_k)

        def index_sampler(rng):
            return ra_subsample_indices(comb, rng)
    counts = monte_carlo_element_votes(smp.x, seg, cfg.modalities, task.N, cfg.seed, smp.sample_id, index_sampler)
    elems = [
        ElementVotes(j, VoteCounts({l: int(c) for l, c in enumerate(row) if c}, task.N, cfg.num_classes), int(g))
        for j, (row, g) in enumerate(zip(counts, smp.label))
    ]
    return smp.sample_id, elems


def simulate_votes(cfg: RunConfig, N: int | None = None, jobs: int = 1):
    """Synthetic dataset plus Monte Carlo votes, deterministic in ``cfg.seed``."""
    N = int(cfg.N if N is None else N)
    data = synth_dataset(synth_config(cfg), cfg.seed)
    res = parallel_map(_simulate_one, [_SimTask(s, cfg, N) for s in data], jobs, chunksize=1)
    if cfg.task == "classification":
        return res
    return dict(res)


# -- output ------------------------------------------------------------------------


def write_curves(path, rows, num_modalities: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"r_{i + 1}" for i in range(num_modalities)] + ["metric", "value"])
        for budget, metric, value in rows:
            w.writerow(list(budget) + [metric, repr(sig12(value))])


def write_metadata(out, cfg: RunConfig, command: str, inputs: dict | None = None, extra: dict | None = None) -> dict:
    meta = {
        "tool": "mmcert",
        "version": __version__,
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "engine": cfg.engine,
        "alpha_search": {"method": "bisection", "domain": [0.0, 1.0], "steps": BISECTION_STEPS},
        "inputs": inputs or {},
    }
    if extra:
        meta.update(extra)
    with open(Path(out) / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


# -- subcommand entry points ---------------------------------------------------------


def _sweep_suffix(name, value) -> str:
    return f"_{name}-{value}"


def _alpha_configs(cfg: RunConfig, sweep_alpha):
    if not sweep_alpha:
        return [(cfg, "")]
    out = []
    for a in sweep_alpha:
        d = cfg.to_dict()
        d["alpha"] = float(a)
        out.append((RunConfig.from_dict(d), _sweep_suffix("alpha", a)))
    return out


def run_certify(cfg: RunConfig, votes_path, out, jobs=1, sweep_alpha=None):
    """Classification votes at the config budget (or r = 0 when none is set)."""
    if cfg.task != "classification":
        raise ConfigError("certify handles classification; use segment for segmentation")
    records = read_classification_votes(votes_path, cfg.num_classes, cfg.N)
    budget = cfg.budget if cfg.budget is not None else (0,) * len(cfg.modalities)
    for c, suffix in _alpha_configs(cfg, sweep_alpha):
        run_classification(c, records, out, [budget], jobs, suffix=suffix)
    return write_metadata(out, cfg, "certify", {"votes": file_digest(votes_path)})


def run_radius(cfg: RunConfig, votes_path, out, jobs=1, sweep_alpha=None):
    if cfg.task != "classification":
        raise ConfigError("radius handles classification")
    records = read_classification_votes(votes_path, cfg.num_classes, cfg.N)
    for c, suffix in _alpha_configs(cfg, sweep_alpha):
        run_classification(c, records, out, budgets_along_ray(c), jobs, suffix=suffix)
    return write_metadata(out, cfg, "radius", {"votes": file_digest(votes_path)})


def run_segment(cfg: RunConfig, votes_path, out, jobs=1, sweep_alpha=None, write_elements=True):
    if cfg.task != "segmentation":
        raise ConfigError("segment needs task 'segmentation'")
    samples = read_segmentation_votes(votes_path, cfg.num_classes, cfg.N)
    for c, suffix in _alpha_configs(cfg, sweep_alpha):
        run_segmentation(c, samples, out, None, jobs, suffix=suffix, write_elements=write_elements)
    return write_metadata(out, cfg, "segment", {"votes": file_digest(votes_path)})


def run_baseline(cfg: RunConfig, votes_path, out, jobs=1, sweep_alpha=None):
    if cfg.baseline_k is None:
        raise ConfigError("baseline needs baseline_k in the config")
    d = cfg.to_dict()
    d["alpha"] = float(d["alpha"])
    d["engine"] = "baseline"
    bcfg = RunConfig.from_dict(d)
    if bcfg.task == "classification":
        records = read_classification_votes(votes_path, bcfg.num_classes, bcfg.N)
        for c, suffix in _alpha_configs(bcfg, sweep_alpha):
            run_classification(c, records, out, None, jobs, suffix=suffix)
    else:
        samples = read_segmentation_votes(votes_path, bcfg.num_classes, bcfg.N)
        for c, suffix in _alpha_configs(bcfg, sweep_alpha):
            run_segmentation(c, samples, out, None, jobs, suffix=suffix)
    return write_metadata(out, bcfg, "baseline", {"votes": file_digest(votes_path)})


def run_simulate(cfg: RunConfig, out, jobs=1, sweep_alpha=None, sweep_n=None):
    """Generate synthetic votes, store them, then certify along the configured ray."""
    out = ensure_dir(out)
    Ns = [int(n) for n in sweep_n] if sweep_n else [int(cfg.N)]
    for N in Ns:
        tag = _sweep_suffix("N", N) if sweep_n else ""
        d = cfg.to_dict()
        d["alpha"] = float(d["alpha"])
        d["N"] = N
        ncfg = RunConfig.from_dict(d)
        data = simulate_votes(ncfg, N, jobs)
        if ncfg.task == "classification":
            write_classification_votes(out / f"votes{tag}.jsonl", data)
            for c, suffix in _alpha_configs(ncfg, sweep_alpha):
                run_classification(c, data, out, None, jobs, suffix=tag + suffix)
        else:
            write_segmentation_votes(out / f"votes{tag}.jsonl", data)
            for c, suffix in _alpha_configs(ncfg, sweep_alpha):
                run_segmentation(c, data, out, None, jobs, suffix=tag + suffix)
    return write_metadata(out, cfg, "simulate")


def run_oracle(out, quick: bool = False, instances: int = 500, seed: int = 0) -> dict:
    """Closed-form, tightness, soundness and witness checks on small instances."""
    from . import oracle

    out = ensure_dir(out)
    if quick:
        grid = dict(ns=range(3, 5), ks=range(1, 3), rs=range(0, 2), modalities=(1, 2))
        instances = min(instances, 60)
    else:
        grid = dict(ns=range(3, 7), ks=range(1, 4), rs=range(0, 3), modalities=(1, 2))
    witness_grid = dict(ns=range(3, 5), ks=range(1, 3), rs=range(0, 3), modalities=(1,))
    reports = [
        oracle.check_probs_grid(oracle.small_grid(**grid)),
        oracle.check_bounds_grid(oracle.small_grid(**grid)),
        oracle.check_soundness(instances, seed),
        oracle.check_witnesses(oracle.small_grid(**witness_grid)),
    ]
    result = {
        "passed": all(r.passed for r in reports),
        "checks": [
            {"name": r.name, "checked": r.checked, "failures": len(r.failures), "passed": r.passed,
             "examples": [repr(f) for f in r.failures[:5]]}
            for r in reports
        ],
    }
    with open(out / "oracle_report.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


__all__ = [
    "run_certify", "run_radius", "run_segment", "run_baseline", "run_simulate", "run_oracle",
    "run_classification", "run_segmentation", "simulate_votes", "default_jobs", "DataError",
]
