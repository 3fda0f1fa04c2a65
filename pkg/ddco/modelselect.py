"""
Model Selection
===============

Choosing the number of options by k-fold cross-validation, and run-to-run
stability diagnostics (likelihood variance, segmentation NMI, high-level
option usage) across initialization and schedule regimes.
"""

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import normalized_mutual_info_score
from sklearn.model_selection import KFold

from .configs.training_config import InitMode, Schedule, TrainConfig
from .core import Dataset, HierarchicalPolicy
from .errors import ConfigError, DDCOError, DimensionError
from .inference import dataset_loglikelihoods, heldout_loglik_per_step, high_level_usage, segment_dataset
from .training.trainer import TrainingLog, ddco_train
from .workflows.orchestrator import JobOrchestrator, JobSpec

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 10
MIN_HELDOUT_GAIN = 0.01

REGIMES: Tuple[Tuple[InitMode, Schedule], ...] = (
    (InitMode.RANDOM, Schedule.JOINT),
    (InitMode.RANDOM, Schedule.LAYERWISE),
    (InitMode.VQ, Schedule.JOINT),
    (InitMode.VQ, Schedule.LAYERWISE),
)


def fold_assignment(n: int, folds: int = DEFAULT_FOLDS, seed: int = 0) -> List[np.ndarray]:
    """
    Held-out index sets: trajectories shuffled once with the seed and split
    into contiguous folds (leave-one-out when n < folds).
    """
    if n < 2:
        raise ConfigError(f"cross-validation needs at least 2 trajectories, got {n}")
    splitter = KFold(n_splits=min(folds, n), shuffle=True, random_state=seed)
    return [test for _, test in splitter.split(np.arange(n))]


@dataclass
class CrossValidationResult:
    """Per-fold scores, per-k summary and the final full-data fit"""
    table: pd.DataFrame
    summary: pd.DataFrame
    selected_k: int
    policy: HierarchicalPolicy
    log: TrainingLog
    failures: Dict[int, List[str]] = field(default_factory=dict)

    def write_csv(self, table_path: Union[str, Path], summary_path: Union[str, Path]) -> None:
        self.table.to_csv(table_path, index=False, float_format="%.17g")
        self.summary.to_csv(summary_path, index=False, float_format="%.17g")


def _fold_score(dataset: Dataset, train_idx: np.ndarray, test_idx: np.ndarray, cfg: TrainConfig) -> float:
    policy, _ = ddco_train(dataset.subset(train_idx), cfg)
    return heldout_loglik_per_step(policy, dataset.subset(test_idx), jobs=1)


def select_k(summary: pd.DataFrame, min_gain: float = MIN_HELDOUT_GAIN) -> int:
    """
    Smallest valid k whose fold mean is within min_gain nats per step of the
    best fold mean; min_gain=0 is the plain argmax with ties to the smaller k.
    """
    if min_gain < 0:
        raise ConfigError(f"min_gain must be >= 0, got {min_gain}")
    valid = summary[summary["valid"].astype(bool)].sort_values("k")
    if valid.empty:
        raise DDCOError("no candidate k completed cross-validation")
    best = valid["mean"].max()
    return int(valid.loc[valid["mean"] >= best - min_gain, "k"].iloc[0])


def cross_validate_k(dataset: Dataset,
                     k_candidates: Sequence[int],
                     cfg: TrainConfig,
                     folds: int = DEFAULT_FOLDS,
                     jobs: Optional[int] = None,
                     min_gain: float = MIN_HELDOUT_GAIN) -> CrossValidationResult:
    """
    Select the number of options by held-out per-step log-likelihood.

    The smallest k within the select_k margin of the best fold mean wins. Every (k, fold) pair is an independent training job sharing cfg (with k
    replaced); a failed fold invalidates its k without stopping the sweep.
    The selected k is retrained on the full dataset.
    """
    candidates = sorted(set(int(k) for k in k_candidates))
    if not candidates:
        raise ConfigError("k_candidates must not be empty")
    if min_gain < 0:
        raise ConfigError(f"min_gain must be >= 0, got {min_gain}")
    held_out = fold_assignment(len(dataset), folds, cfg.seed)
    everything = np.arange(len(dataset))

    jobs_list = []
    for k in candidates:
        for fold, test_idx in enumerate(held_out):
            train_idx = np.setdiff1d(everything, test_idx)
            jobs_list.append(JobSpec(
                id=f"k{k}-fold{fold}",
                func=lambda tr, te, kk: _fold_score(dataset, tr, te, cfg.replace(k=kk, jobs=1)),
                args=(train_idx, test_idx, k),
            ))
    results = JobOrchestrator(jobs).run(jobs_list)

    rows = []
    failures: Dict[int, List[str]] = {}
    for job, result in zip(jobs_list, results):
        k = job.args[2]
        fold = int(job.id.split("fold")[1])
        if result.ok:
            rows.append({"k": k, "fold": fold, "heldout_loglik_per_step": result.value})
        else:
            failures.setdefault(k, []).append(f"fold {fold}: {result.error}")
            logger.warning(f"Cross-validation k={k} fold {fold} failed: {result.error}")
    table = pd.DataFrame(rows, columns=["k", "fold", "heldout_loglik_per_step"])

    summary_rows = []
    for k in candidates:
        scores = table.loc[table["k"] == k, "heldout_loglik_per_step"].to_numpy()
        valid = k not in failures and scores.size == len(held_out)
        mean = float(scores.mean()) if valid else float("nan")
        stderr = float(scores.std(ddof=1) / np.sqrt(scores.size)) if valid and scores.size > 1 else 0.0
        summary_rows.append({"k": k, "mean": mean, "stderr": stderr, "valid": valid})
    summary = pd.DataFrame(summary_rows)
    selected = select_k(summary, min_gain)
    summary["selected"] = summary["k"] == selected
    summary = summary[["k", "mean", "stderr", "selected", "valid"]]
    logger.info(f"Cross-validation selected k={selected}")

    policy, log = ddco_train(dataset, cfg.replace(k=selected))
    return CrossValidationResult(table, summary, selected, policy, log, failures)


def nmi(labels_a: Sequence[int], labels_b: Sequence[int]) -> float:
    """
    Normalized mutual information I(A;B) / sqrt(H(A) H(B)).

    Two constant labelings score 1; exactly one constant labeling scores 0.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"labelings must have equal lengths, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise DimensionError("labelings must not be empty")
    constant_a = np.unique(a).size == 1
    constant_b = np.unique(b).size == 1
    if constant_a and constant_b:
        return 1.0
    if constant_a or constant_b:
        return 0.0
    score = normalized_mutual_info_score(a, b, average_method="geometric")
    return float(min(max(score, 0.0), 1.0))


def mean_pairwise_nmi(labelings: Sequence[np.ndarray]) -> float:
    pairs = list(itertools.combinations(range(len(labelings)), 2))
    if not pairs:
        return float("nan")
    return float(np.mean([nmi(labelings[i], labelings[j]) for i, j in pairs]))


@dataclass
class StabilityReport:
    """Per-run outcomes and per-regime aggregates"""
    runs: pd.DataFrame
    regimes: pd.DataFrame
    labelings: Dict[str, List[np.ndarray]] = field(default_factory=dict)

    def regime(self, init: InitMode, schedule: Schedule) -> pd.Series:
        name = regime_name(init, schedule)
        return self.regimes.set_index("regime").loc[name]

    def write_csv(self, path: Union[str, Path], runs_path: Optional[Union[str, Path]] = None) -> None:
        self.regimes.to_csv(path, index=False, float_format="%.17g")
        if runs_path is not None:
            self.runs.to_csv(runs_path, index=False, float_format="%.17g")


def regime_name(init: InitMode, schedule: Schedule) -> str:
    return f"{init.value}+{schedule.value}"


def _stability_run(dataset: Dataset, cfg: TrainConfig) -> Dict[str, object]:
    policy, _ = ddco_train(dataset, cfg)
    loglik = float(dataset_loglikelihoods(policy, dataset, jobs=1)["loglik"].sum())
    labels = np.concatenate(segment_dataset(policy, dataset, jobs=1))
    usage = high_level_usage(policy, dataset)
    return {"loglik": loglik, "labels": labels, "option_mass": usage["option_mass"], "hc_mass": usage["hc_mass"]}


def stability_report(dataset: Dataset,
                     k: int,
                     n_seeds: int,
                     cfg: TrainConfig,
                     seeds: Optional[Sequence[int]] = None,
                     regimes: Sequence[Tuple[InitMode, Schedule]] = REGIMES,
                     jobs: Optional[int] = None) -> StabilityReport:
    """
    Train n_seeds runs per regime and summarize their consistency.

    Reports per regime the variance of the final total log-likelihood, the
    mean pairwise NMI of the segmentations, and the mean high-level mass on
    options versus h^c.

    Args:
        seeds: Explicit seeds (default 0..n_seeds-1); repeated seeds give identical runs
    """
    if seeds is None:
        seeds = list(range(n_seeds))
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ConfigError(f"stability needs at least 2 seeds, got {len(seeds)}")

    jobs_list = []
    for init, schedule in regimes:
        for seed in seeds:
            name = regime_name(init, schedule)
            try:
                run_cfg = cfg.replace(k=k, init=init, schedule=schedule, seed=seed, jobs=1)
            except ConfigError as e:
                run_cfg = e
            jobs_list.append((name, seed, run_cfg))

    def run(run_cfg):
        if isinstance(run_cfg, Exception):
            raise run_cfg
        return _stability_run(dataset, run_cfg)

    results = JobOrchestrator(jobs).run(
        [JobSpec(id=f"{name}-seed{seed}", func=run, args=(run_cfg,)) for name, seed, run_cfg in jobs_list])

    run_rows = []
    labelings: Dict[str, List[np.ndarray]] = {}
    for (name, seed, _), result in zip(jobs_list, results):
        if not result.ok:
            logger.warning(f"Stability run {name} seed {seed} failed: {result.error}")
            run_rows.append({"regime": name, "seed": seed, "final_loglik": np.nan,
                             "option_mass": np.nan, "hc_mass": np.nan, "ok": False})
            continue
        value = result.value
        labelings.setdefault(name, []).append(value["labels"])
        run_rows.append({"regime": name, "seed": seed, "final_loglik": value["loglik"],
                         "option_mass": value["option_mass"], "hc_mass": value["hc_mass"], "ok": True})
    runs = pd.DataFrame(run_rows)

    regime_rows = []
    for init, schedule in regimes:
        name = regime_name(init, schedule)
        done = runs[(runs["regime"] == name) & runs["ok"]]
        regime_rows.append({
            "regime": name,
            "init": init.value,
            "schedule": schedule.value,
            "completed_runs": len(done),
            "loglik_mean": float(done["final_loglik"].mean()) if len(done) else np.nan,
            "loglik_variance": float(np.var(done["final_loglik"].to_numpy(), ddof=1)) if len(done) > 1 else np.nan,
            "mean_pairwise_nmi": mean_pairwise_nmi(labelings.get(name, [])),
            "option_mass": float(done["option_mass"].mean()) if len(done) else np.nan,
            "hc_mass": float(done["hc_mass"].mean()) if len(done) else np.nan,
        })
    return StabilityReport(runs, pd.DataFrame(regime_rows), labelings)
