"""
Training Package
================

G-step gradients, optimizers, vector-quantization initialization and the
behavior-cloning / DDCO training loops.
"""

from .gradients import bc_gradient, control_residual, eg_gradient, pairs_gradient
from .optimizers import OptimizerState, optimizer_step
from .trainer import TrainingLog, bc_train, ddco_train, initial_policy, run_rngs
from .vq import cluster_states, rebalance_clusters, vq_initialize

__all__ = [
    'OptimizerState',
    'TrainingLog',
    'bc_gradient',
    'bc_train',
    'cluster_states',
    'control_residual',
    'ddco_train',
    'eg_gradient',
    'initial_policy',
    'optimizer_step',
    'pairs_gradient',
    'rebalance_clusters',
    'run_rngs',
    'vq_initialize',
]
