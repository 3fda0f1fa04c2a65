"""
Vector-Quantization Initialization
Clusters the demonstrated states with k-means and fits one behavior-cloning
policy per cluster to seed the options
"""

import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from ..approx import Approximator, HeadSpec
from ..configs.training_config import TrainConfig
from ..core import Dataset, OptionSpec
from ..errors import ClusteringError
from .optimizers import OptimizerState, optimizer_step
from .gradients import pairs_gradient

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


def cluster_states(states: np.ndarray, k: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """k-means (k-means++ seeding, Lloyd iterations): cluster index per state and the centers"""
    if states.shape[0] < k:
        raise ClusteringError(f"cannot form {k} clusters from {states.shape[0]} states")
    kmeans = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=KMEANS_MAX_ITER,
                    tol=KMEANS_TOL, random_state=seed)
    with warnings.catch_warnings():
        # degenerate data (fewer distinct states than k) is handled by rebalance_clusters
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = kmeans.fit_predict(states)
    return labels.astype(int), kmeans.cluster_centers_


def rebalance_clusters(states: np.ndarray,
                       labels: np.ndarray,
                       centers: np.ndarray,
                       min_size: int) -> np.ndarray:
    """
    Reassign the nearest points of larger clusters until every cluster has at
    least min_size members.
    """
    k = centers.shape[0]
    if states.shape[0] < k * min_size:
        raise ClusteringError(
            f"{states.shape[0]} samples cannot give {k} clusters of at least {min_size} samples each")
    labels = labels.copy()
    for cluster in range(k):
        deficit = min_size - int(np.sum(labels == cluster))
        if deficit <= 0:
            continue
        logger.warning(f"Cluster {cluster} has {min_size - deficit} samples (< {min_size}); reassigning nearest points")
        distances = np.linalg.norm(states - centers[cluster], axis=1)
        for index in np.argsort(distances, kind="stable"):
            if deficit == 0:
                break
            donor = labels[index]
            if donor == cluster or np.sum(labels == donor) <= min_size:
                continue
            labels[index] = cluster
            deficit -= 1
        if deficit > 0:
            raise ClusteringError(f"could not give cluster {cluster} at least {min_size} samples")
    return labels


def fit_pairs(network: Approximator,
              states: np.ndarray,
              controls: np.ndarray,
              sigma: float,
              epochs: int,
              optimizer: OptimizerState,
              rng: Optional[np.random.Generator] = None) -> Approximator:
    """Full-batch behavior cloning on (s, a) pairs"""
    mode = "train" if network.dropout_rate > 0.0 else "eval"
    params = network.params.copy()
    state = optimizer
    for _ in range(epochs):
        grad, _ = pairs_gradient(network.with_params(params), states, controls, sigma, mode, rng)
        params, state = optimizer_step(state, params, grad)
    return network.with_params(params)


def vq_initialize(dataset: Dataset,
                  k: int,
                  cfg: TrainConfig,
                  rng: Optional[np.random.Generator] = None) -> List[OptionSpec]:
    """
    Seed k options from state clusters.

    Each option policy is trained by behavior cloning on its cluster's (s, a)
    pairs; terminations start with a zero output layer (psi = 0.5).

    Args:
        dataset: Demonstrations
        k: Number of options (>= 1)
        cfg: Training configuration (architecture, sigma, optimizer, vq_epochs)
        rng: Initialization rng for the option networks (default: seeded from cfg.seed)
    """
    if k < 1:
        raise ClusteringError(f"vq initialization needs k >= 1, got {k}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    bc = cfg.bc_config()
    dropout_rng = np.random.default_rng([cfg.seed, 3])

    states, controls = dataset.pairs()
    labels, centers = cluster_states(states, k, cfg.seed)
    min_size = dataset.d_a + 1
    if np.bincount(labels, minlength=k).min() < min_size:
        labels = rebalance_clusters(states, labels, centers, min_size)

    options = []
    for cluster in range(k):
        members = labels == cluster
        network = Approximator.initialize(dataset.d_s, HeadSpec.gaussian(dataset.d_a), bc.arch.kind,
                                          bc.arch.hidden_width, rng, cfg.dropout_rate)
        termination = Approximator.initialize(dataset.d_s, HeadSpec.logistic(), cfg.termination_arch.kind,
                                              cfg.termination_arch.hidden_width, rng, cfg.dropout_rate,
                                              zero_output=True)
        optimizer = OptimizerState.create(bc.optimizer, network.n_params)
        network = fit_pairs(network, states[members], controls[members], cfg.sigma, bc.epochs, optimizer, dropout_rng)
        logger.debug(f"VQ cluster {cluster}: {int(members.sum())} samples")
        options.append(OptionSpec(network, termination))
    logger.info(f"VQ initialization: cluster sizes {np.bincount(labels, minlength=k).tolist()}")
    return options
