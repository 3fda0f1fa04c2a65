"""
Training Loops
==============

Flat behavior cloning and DDCO Expectation-Gradient training.

Every run derives three independent generators from its seed:
initialization (default_rng(seed)), batch order (default_rng([seed, 1])) and
dropout masks (default_rng([seed, 2])). A hybrid policy with k = 0 and a flat
network with the same architecture therefore follow identical parameter
sequences under the same seed and optimizer.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..approx import Approximator, HeadSpec
from ..configs.training_config import BatchMode, BCConfig, HeadMode, InitMode, TrainConfig
from ..core import Dataset, FlatPolicy, HierarchicalPolicy, PosteriorTables
from ..errors import DimensionError
from ..inference import dataset_posteriors, forward_backward, heldout_loglik_per_step
from ..workflows.orchestrator import JobOrchestrator
from .gradients import bc_gradient, eg_gradient
from .optimizers import OptimizerState, optimizer_step
from .vq import vq_initialize

logger = logging.getLogger(__name__)


def run_rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Initialization, batch-order and dropout generators for one run"""
    return (np.random.default_rng(seed),
            np.random.default_rng([seed, 1]),
            np.random.default_rng([seed, 2]))


@dataclass
class TrainingLog:
    """Per-epoch training record; epochs are numbered from 1"""
    k: int = 0
    records: List[Dict[str, Any]] = field(default_factory=list)

    def append(self, **values: Any) -> None:
        self.records.append(values)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def total_loglik(self) -> List[float]:
        return [r["total_loglik"] for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        """epoch, phase, total_loglik, [heldout_loglik], usage_0..usage_{k-1}, hc_mass"""
        rows = []
        for record in self.records:
            row = {key: value for key, value in record.items() if key != "usage"}
            for h, mass in enumerate(record.get("usage", [])):
                row[f"usage_{h}"] = mass
            rows.append(row)
        frame = pd.DataFrame(rows)
        if "hc_mass" in frame.columns:
            frame = frame[[c for c in frame.columns if c != "hc_mass"] + ["hc_mass"]]
        return frame

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def bc_train(dataset: Dataset,
             cfg: BCConfig,
             initial: Optional[Approximator] = None,
             heldout: Optional[Dataset] = None) -> Tuple[FlatPolicy, TrainingLog]:
    """
    Fit a flat Gaussian policy by behavior cloning.

    Args:
        dataset: Training demonstrations
        cfg: Architecture, sigma, epochs, batching, seed, optimizer
        initial: Start from this network instead of a seeded initialization
        heldout: Optional dataset scored (per step) after every epoch

    Returns:
        Tuple of (FlatPolicy, TrainingLog)
    """
    init_rng, order_rng, dropout_rng = run_rngs(cfg.seed)
    if initial is None:
        network = Approximator.initialize(dataset.d_s, HeadSpec.gaussian(dataset.d_a), cfg.arch.kind,
                                          cfg.arch.hidden_width, init_rng, cfg.dropout_rate)
    else:
        if initial.head != HeadSpec.gaussian(dataset.d_a) or initial.input_dim != dataset.d_s:
            raise DimensionError("initial network does not match the dataset dimensions")
        network = initial

    mode = "train" if cfg.dropout_rate > 0.0 else "eval"
    params = network.params.copy()
    state = OptimizerState.create(cfg.optimizer, params.size)
    log = TrainingLog(k=0)

    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        if cfg.batch is BatchMode.TRAJECTORY:
            for index in order_rng.permutation(len(dataset)):
                grad, loglik = bc_gradient(network.with_params(params), dataset[index], cfg.sigma, mode, dropout_rng)
                params, state = optimizer_step(state, params, grad)
                total += loglik
        else:
            current = network.with_params(params)
            grad = np.zeros(params.size)
            for traj in dataset:
                traj_grad, loglik = bc_gradient(current, traj, cfg.sigma, mode, dropout_rng)
                grad += traj_grad
                total += loglik
            params, state = optimizer_step(state, params, grad)

        record: Dict[str, Any] = {"epoch": epoch, "phase": "bc", "total_loglik": total}
        if heldout is not None:
            record["heldout_loglik"] = heldout_loglik_per_step(FlatPolicy(network.with_params(params), cfg.sigma),
                                                               heldout)
        log.append(**record)
        logger.info(f"BC epoch {epoch}: total log-likelihood {total:.6f}")

    return FlatPolicy(network.with_params(params), cfg.sigma), log


def _phase_mask(policy: HierarchicalPolicy, train_high: bool, train_options: bool) -> np.ndarray:
    mask = np.zeros(policy.n_params, dtype=bool)
    for (role, _), part in policy.param_slices().items():
        mask[part] = train_high if role == "high" else train_options
    return mask


def _epoch_record(epoch: int, phase: str, posteriors: List[PosteriorTables], k: int) -> Dict[str, Any]:
    usage = np.zeros(k)
    hc_mass = 0.0
    for post in posteriors:
        usage += post.usage_mass()
        hc_mass += post.hc_mass()
    return {
        "epoch": epoch,
        "phase": phase,
        "total_loglik": float(sum(post.loglik for post in posteriors)),
        "usage": usage.tolist(),
        "hc_mass": hc_mass,
    }


def initial_policy(dataset: Dataset, cfg: TrainConfig, init_rng: np.random.Generator) -> HierarchicalPolicy:
    """Random initialization, with the options replaced by VQ-seeded ones when requested"""
    policy = HierarchicalPolicy.initialize(
        dataset.d_s, dataset.d_a, cfg.k, cfg.head_mode, cfg.sigma, init_rng,
        high_arch=cfg.high_arch, option_arch=cfg.option_arch,
        termination_arch=cfg.termination_arch, dropout_rate=cfg.dropout_rate,
    )
    if cfg.init is InitMode.VQ:
        policy = policy.with_options(vq_initialize(dataset, cfg.k, cfg, init_rng))
    return policy


def ddco_train(dataset: Dataset,
               cfg: TrainConfig,
               heldout: Optional[Dataset] = None,
               initial: Optional[HierarchicalPolicy] = None) -> Tuple[HierarchicalPolicy, TrainingLog]:
    """
    Expectation-Gradient training of a hierarchical policy.

    Each epoch alternates E-steps (exact posteriors, eval mode) with G-steps
    (eg_gradient, train mode when dropout is enabled) and optimizer updates.
    Per-trajectory batching runs E-step, G-step and update trajectory by
    trajectory in a seeded random order; full batching computes every E-step
    against one parameter snapshot (in parallel with cfg.jobs workers) and takes
    a single step. The layer-wise schedule first trains the options under a
    uniform high-level policy without h^c, then trains the high-level policy
    with the options frozen (unless cfg.finetune_options).

    Returns:
        Tuple of (trained policy, TrainingLog)
    """
    if cfg.head_mode is HeadMode.FLAT:
        raise DimensionError("ddco_train needs a categorical or hybrid head")
    init_rng, order_rng, dropout_rng = run_rngs(cfg.seed)
    policy = initial if initial is not None else initial_policy(dataset, cfg, init_rng)
    if policy.d_s != dataset.d_s or policy.d_a != dataset.d_a:
        raise DimensionError("initial policy does not match the dataset dimensions")

    mode = "train" if cfg.dropout_rate > 0.0 else "eval"
    params = policy.flat_params()
    state = OptimizerState.create(cfg.optimizer, params.size)
    log = TrainingLog(k=policy.k)
    phase1_epochs = cfg.layerwise_phase1_epochs
    orchestrator = JobOrchestrator(cfg.jobs)
    previous_total = None

    for epoch in range(1, cfg.epochs + 1):
        if epoch <= phase1_epochs:
            phase, uniform_high, mask = "options", True, _phase_mask(policy, False, True)
        elif phase1_epochs > 0:
            phase, uniform_high = "high", False
            mask = _phase_mask(policy, True, cfg.finetune_options)
        else:
            phase, uniform_high, mask = "joint", False, None

        posteriors: List[PosteriorTables] = []
        if cfg.batch is BatchMode.TRAJECTORY:
            for index in order_rng.permutation(len(dataset)):
                current = policy.with_flat_params(params)
                traj = dataset[index]
                post = forward_backward(current, traj, uniform_high)
                grad = eg_gradient(current, traj, post, uniform_high, mode, dropout_rng)
                params, state = optimizer_step(state, params, grad, mask)
                posteriors.append(post)
        else:
            current = policy.with_flat_params(params)
            posteriors = dataset_posteriors(current, dataset, uniform_high, jobs=orchestrator.max_workers)
            grad = np.zeros(params.size)
            for traj, post in zip(dataset, posteriors):
                grad += eg_gradient(current, traj, post, uniform_high, mode, dropout_rng)
            params, state = optimizer_step(state, params, grad, mask)

        record = _epoch_record(epoch, phase, posteriors, policy.k)
        if heldout is not None:
            record["heldout_loglik"] = heldout_loglik_per_step(policy.with_flat_params(params), heldout,
                                                               jobs=orchestrator.max_workers)
        log.append(**record)
        total = record["total_loglik"]
        logger.info(f"DDCO epoch {epoch} ({phase}): total log-likelihood {total:.6f}, "
                    f"h^c mass {record['hc_mass']:.3f}")
        if previous_total is not None and total < previous_total:
            logger.debug(f"Epoch {epoch}: log-likelihood decreased by {previous_total - total:.3e}")
        previous_total = total

    return policy.with_flat_params(params), log
