"""
Experiment Drivers
==================

End-to-end studies on the pushing task and the switching-system generator.
Each driver returns a pandas DataFrame whose columns are the axes of the
corresponding curve:

- sample_efficiency: reward vs number of demonstrations, flat BC vs DDCO
- reward_vs_k:       DDCO reward vs number of options
- augmentation:      h^c selection fraction vs k with the hybrid head
- dropout_effect:    held-out log-likelihood with and without dropout
"""

import logging
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from .configs.training_config import BCConfig, HeadMode, TrainConfig
from .core import Dataset
from .env.push import DEFAULT_CONFIG, PushConfig, generate_demos
from .env.rollout import STOCHASTIC, evaluate_policy, supervisor_reference
from .env.slds import SldsConfig, slds_generate
from .inference import heldout_loglik_per_step
from .modelselect import cross_validate_k
from .training.trainer import bc_train, ddco_train

logger = logging.getLogger(__name__)

DEFAULT_BUDGETS = (10, 20, 30, 60)
DEFAULT_K_CANDIDATES = (1, 2, 3, 4)


def _reward_row(frame: pd.DataFrame, **keys) -> Dict[str, object]:
    rewards = frame["reward"].to_numpy(dtype=float)
    stderr = float(rewards.std(ddof=1) / np.sqrt(rewards.size)) if rewards.size > 1 else 0.0
    return {**keys, "mean_reward": float(rewards.mean()), "stderr": stderr}


def sample_efficiency(budgets: Sequence[int] = DEFAULT_BUDGETS,
                      train_cfg: TrainConfig = TrainConfig(),
                      bc_cfg: BCConfig = BCConfig(),
                      k_candidates: Sequence[int] = DEFAULT_K_CANDIDATES,
                      eval_seeds: Sequence[int] = tuple(range(20)),
                      demo_seed: int = 0,
                      horizon: Optional[int] = None,
                      folds: int = 10,
                      config: PushConfig = DEFAULT_CONFIG,
                      mode: str = STOCHASTIC,
                      jobs: Optional[int] = None) -> pd.DataFrame:
    """
    Reward of flat BC and DDCO (k chosen by cross-validation) trained on the
    first n demonstrations, for each budget n; the supervisor's reward under
    the same evaluation seeds is reported as policy "supervisor".

    Columns: demos, policy, k, mean_reward, stderr
    """
    demos = generate_demos(max(budgets), demo_seed, config)
    rows = [_reward_row(supervisor_reference(eval_seeds, horizon, config, jobs),
                        demos=np.nan, policy="supervisor", k=np.nan)]
    for n in sorted(budgets):
        subset = demos.subset(range(min(n, len(demos))))
        flat, _ = bc_train(subset, bc_cfg)
        rows.append(_reward_row(evaluate_policy(flat, eval_seeds, horizon, mode, config, jobs),
                                demos=n, policy="bc", k=0))

        cv = cross_validate_k(subset, k_candidates, train_cfg, folds=folds, jobs=jobs)
        rows.append(_reward_row(evaluate_policy(cv.policy, eval_seeds, horizon, mode, config, jobs),
                                demos=n, policy="ddco", k=cv.selected_k))
        logger.info(f"Sample efficiency at {n} demos: BC {rows[-2]['mean_reward']:.2f}, "
                    f"DDCO(k={cv.selected_k}) {rows[-1]['mean_reward']:.2f}")
    return pd.DataFrame(rows, columns=["demos", "policy", "k", "mean_reward", "stderr"])


def reward_vs_k(k_list: Sequence[int] = DEFAULT_K_CANDIDATES,
                n_demos: int = 60,
                train_cfg: TrainConfig = TrainConfig(),
                eval_seeds: Sequence[int] = tuple(range(20)),
                demo_seed: int = 0,
                horizon: Optional[int] = None,
                config: PushConfig = DEFAULT_CONFIG,
                mode: str = STOCHASTIC,
                jobs: Optional[int] = None,
                demos: Optional[Dataset] = None) -> pd.DataFrame:
    """DDCO reward for each number of options. Columns: k, mean_reward, stderr, hc_fraction"""
    if demos is None:
        demos = generate_demos(n_demos, demo_seed, config)
    rows = []
    for k in k_list:
        policy, _ = ddco_train(demos, train_cfg.replace(k=k))
        frame = evaluate_policy(policy, eval_seeds, horizon, mode, config, jobs)
        row = _reward_row(frame, k=k)
        row["hc_fraction"] = float(frame["hc_fraction"].mean())
        rows.append(row)
        logger.info(f"k={k}: mean reward {row['mean_reward']:.2f}")
    return pd.DataFrame(rows, columns=["k", "mean_reward", "stderr", "hc_fraction"])


def augmentation(k_list: Sequence[int] = (1, 2, 3, 4),
                 n_demos: int = 60,
                 train_cfg: TrainConfig = TrainConfig(),
                 eval_seeds: Sequence[int] = tuple(range(20)),
                 demo_seed: int = 0,
                 horizon: Optional[int] = None,
                 config: PushConfig = DEFAULT_CONFIG,
                 mode: str = STOCHASTIC,
                 jobs: Optional[int] = None) -> pd.DataFrame:
    """
    Hybrid-head DDCO for each k: how often rollouts choose the physical
    control branch. Columns: k, mean_reward, stderr, hc_fraction
    """
    return reward_vs_k(k_list, n_demos, train_cfg.replace(head_mode=HeadMode.HYBRID), eval_seeds,
                       demo_seed, horizon, config, mode, jobs)


def dropout_effect(k: int = 2,
                   rate: float = 0.5,
                   n_train: int = 10,
                   n_heldout: int = 50,
                   seeds: Sequence[int] = tuple(range(5)),
                   train_cfg: TrainConfig = TrainConfig(),
                   slds: SldsConfig = SldsConfig()) -> pd.DataFrame:
    """
    Held-out per-step log-likelihood of DDCO trained on a small switching-system
    set, with and without dropout. Columns: seed, dropout_rate, heldout_loglik_per_step
    """
    rows = []
    for seed in seeds:
        train, _ = slds_generate(slds, n_train, seed)
        heldout, _ = slds_generate(slds, n_heldout, seed + 10_000)
        for dropout_rate in (0.0, rate):
            policy, _ = ddco_train(train, train_cfg.replace(k=k, seed=seed, dropout_rate=dropout_rate))
            rows.append({
                "seed": seed,
                "dropout_rate": dropout_rate,
                "heldout_loglik_per_step": heldout_loglik_per_step(policy, heldout),
            })
    return pd.DataFrame(rows, columns=["seed", "dropout_rate", "heldout_loglik_per_step"])
