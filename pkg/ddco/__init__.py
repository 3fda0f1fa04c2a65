"""
DDCO: Discovery of Deep Continuous Options
Segments continuous-control demonstrations into options and trains a two-level
hierarchical policy with Expectation-Gradient.
"""

from .core import (
    Dataset,
    FlatPolicy,
    HierarchicalPolicy,
    PosteriorTables,
    Trajectory,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from .configs.training_config import BCConfig, HeadMode, TrainConfig
from .inference import brute_force_posteriors, forward_backward, segment_dataset, trajectory_loglikelihood
from .modelselect import cross_validate_k, nmi, stability_report
from .training.trainer import bc_train, ddco_train

__version__ = "1.0.0"
__author__ = "DDCO Developers"
__description__ = "Hierarchical options discovery with Expectation-Gradient"

__all__ = [
    "BCConfig",
    "Dataset",
    "FlatPolicy",
    "HeadMode",
    "HierarchicalPolicy",
    "PosteriorTables",
    "TrainConfig",
    "Trajectory",
    "bc_train",
    "brute_force_posteriors",
    "cross_validate_k",
    "ddco_train",
    "forward_backward",
    "load_checkpoint",
    "load_dataset",
    "nmi",
    "save_checkpoint",
    "save_dataset",
    "segment_dataset",
    "stability_report",
    "trajectory_loglikelihood",
]
