"""
Likelihood Gradients
====================

The behavior-cloning gradient of a flat Gaussian policy and the
Expectation-Gradient G-step of a hierarchical policy. Both are computed in
batch over a trajectory's steps; in train mode each network draws its own
dropout masks from the supplied rng in parameter order (high, then policy and
termination of each option).
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, softmax

from ..approx import Approximator, gaussian_logdensity
from ..core import HierarchicalPolicy, PosteriorTables, Trajectory
from ..errors import DimensionError

logger = logging.getLogger(__name__)


def control_residual(mu: np.ndarray, controls: np.ndarray, sigma: float) -> np.ndarray:
    """(a - mu) / sigma^2: gradient of the Gaussian log-density with respect to mu"""
    return (controls - mu) / (sigma * sigma)


def pairs_gradient(network: Approximator,
                   states: np.ndarray,
                   controls: np.ndarray,
                   sigma: float,
                   mode: str = "eval",
                   rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, float]:
    """Gradient and total log-likelihood of a Gaussian-head network on (s, a) pairs"""
    outputs, cache = network.forward_batch(states, mode, rng)
    mu = outputs[0]
    if mu.shape != controls.shape:
        raise DimensionError(f"Network control dimension {mu.shape[1]} != data control dimension {controls.shape[1]}")
    grad = network.backward_batch(cache, [control_residual(mu, controls, sigma)])
    return grad, float(np.sum(gaussian_logdensity(mu, controls, sigma)))


def bc_gradient(network: Approximator,
                traj: Trajectory,
                sigma: float,
                mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, float]:
    """
    Behavior-cloning gradient sum_t ((a_t - mu(s_t)) / sigma^2)^T grad mu(s_t)
    and the trajectory log-likelihood.
    """
    if traj.state_matrix.shape[1] != network.input_dim:
        raise DimensionError(f"Trajectory state dimension {traj.state_matrix.shape[1]} != {network.input_dim}")
    return pairs_gradient(network, traj.state_matrix[:-1], traj.control_matrix, sigma, mode, rng)


def _selection_grad(weights: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """d/dlogits of sum_j weights[:, j] * log softmax(logits)[:, j]"""
    return weights - weights.sum(axis=1, keepdims=True) * softmax(logits, axis=1)


def eg_gradient(policy: HierarchicalPolicy,
                traj: Trajectory,
                post: PosteriorTables,
                uniform_high: bool = False,
                mode: str = "eval",
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Gradient of the trajectory log-likelihood from its posterior tables.

    sum_h [ sum_t v_t(h) grad log eta(h|s_t) + u_t(h) grad log pi_h(a_t|s_t)
            + sum_{t<T-1} (u_t(h) - w_t(h)) grad log psi_h(s_{t+1})
                          + w_t(h) grad log(1 - psi_h(s_{t+1})) ]
    plus, for the hybrid head, vc_t grad log eta(h^c|s_t) and the Gaussian
    control term vc_t ((a_t - mu_eta(s_t)) / sigma^2)^T grad mu_eta(s_t).
    With uniform_high the high-level parameters get no gradient.
    """
    T, k = traj.T, policy.k
    if post.u.shape != (T, k) or post.v.shape != (T, k) or post.w.shape != (T - 1, k):
        raise DimensionError(
            f"posterior tables of shape u={post.u.shape}, w={post.w.shape} do not match T={T}, k={k}")
    hybrid = policy.is_hybrid and not uniform_high
    if hybrid and (post.vc is None or post.vc.shape != (T,)):
        raise DimensionError("hybrid policy needs the physical-control posterior vc of length T")

    S = traj.state_matrix[:-1]
    A = traj.control_matrix
    slices = policy.param_slices()
    grad = np.zeros(policy.n_params)

    if not uniform_high:
        outputs, cache = policy.high.forward_batch(S, mode, rng)
        if hybrid:
            selections = np.column_stack([post.vc, post.v])
            dmu = post.vc[:, None] * control_residual(outputs[0], A, policy.sigma)
            dout = [dmu, _selection_grad(selections, outputs[1])]
        else:
            dout = [_selection_grad(post.v, outputs[0])]
        grad[slices[("high", -1)]] = policy.high.backward_batch(cache, dout)

    for h, option in enumerate(policy.options):
        outputs, cache = option.policy.forward_batch(S, mode, rng)
        dmu = post.u[:, h:h + 1] * control_residual(outputs[0], A, policy.sigma)
        grad[slices[("policy", h)]] = option.policy.backward_batch(cache, [dmu])

        if T > 1:
            outputs, cache = option.termination.forward_batch(traj.state_matrix[1:T], mode, rng)
            psi = expit(outputs[0][:, 0])
            u_prev = post.u[:-1, h]
            dz = (u_prev - post.w[:, h]) - u_prev * psi
            grad[slices[("termination", h)]] = option.termination.backward_batch(cache, [dz[:, None]])

    return grad
