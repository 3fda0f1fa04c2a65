"""
Posterior Inference
===================

Exact E-step for the options model: scaled forward-backward messages, the
posterior tables used by the gradient step, a brute-force enumeration oracle,
and posterior-based segmentation.

Latent values are indexed 0..k-1 for the options and k for the physical-control
branch h^c when the high-level head is hybrid. h^c always terminates after one
step. No termination is modeled after the last control.
"""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import log_expit, log_softmax, logsumexp

from .approx import gaussian_logdensity
from .core import AnyPolicy, Dataset, FlatPolicy, HierarchicalPolicy, PosteriorTables, Trajectory
from .errors import DimensionError, EnumerationTooLarge, InferenceError
from .workflows.orchestrator import JobOrchestrator

logger = logging.getLogger(__name__)

MAX_ENUMERATION_T = 8
MAX_ENUMERATION_K = 4


@dataclass(frozen=True, eq=False)
class StepTerms:
    """
    Per-step log-quantities of one trajectory under a policy (T x K each).

    log_emission[t, h] = log pi_h(a_t | s_t) (h^c: log N(a_t; mu_eta(s_t), sigma^2))
    log_eta[t, h]      = log eta(h | s_t)
    log_psi[t, h]      = log psi_h(s_t), log_stay[t, h] = log(1 - psi_h(s_t));
                         row 0 is unused, h^c has psi = 1
    """
    log_emission: np.ndarray
    log_eta: np.ndarray
    log_psi: np.ndarray
    log_stay: np.ndarray
    k: int
    hybrid: bool

    @property
    def T(self) -> int:
        return self.log_emission.shape[0]

    @property
    def K(self) -> int:
        return self.log_emission.shape[1]


@dataclass(frozen=True, eq=False)
class MessageTable:
    """
    Scaled forward-backward messages for t = 0..T-1.

    alpha rows are normalized; scale[t] is the step normalizer and shift[t]
    the log-emission offset removed before exponentiation, so
    loglik = sum(log scale) + sum(shift). fresh/pre hold the forward mass
    entering step t through a new selection / in total.
    """
    alpha: np.ndarray
    beta: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    fresh: np.ndarray
    pre: np.ndarray
    emission: np.ndarray
    psi: np.ndarray
    stay: np.ndarray

    @property
    def loglik(self) -> float:
        return float(np.sum(np.log(self.scale)) + np.sum(self.shift))


def _check_dims(policy: AnyPolicy, traj: Trajectory) -> None:
    if traj.T < 1:
        raise DimensionError("trajectory must contain at least one control")
    if traj.state_matrix.shape[1] != policy.d_s:
        raise DimensionError(f"trajectory state dimension {traj.state_matrix.shape[1]} != policy d_s={policy.d_s}")
    if traj.control_matrix.shape[1] != policy.d_a:
        raise DimensionError(f"trajectory control dimension {traj.control_matrix.shape[1]} != policy d_a={policy.d_a}")


def step_terms(policy: HierarchicalPolicy, traj: Trajectory, uniform_high: bool = False) -> StepTerms:
    """
    Evaluate every network once over the trajectory (eval mode).

    uniform_high replaces eta by the uniform distribution over the k options
    and drops h^c (first phase of layer-wise training).
    """
    _check_dims(policy, traj)
    S = traj.state_matrix[:-1]
    A = traj.control_matrix
    T, k = traj.T, policy.k
    hybrid = policy.is_hybrid and not uniform_high
    K = k + (1 if hybrid else 0)
    if K == 0:
        raise DimensionError("no latent values: k=0 needs the hybrid head")

    log_emission = np.empty((T, K))
    for h, option in enumerate(policy.options):
        mu = option.policy.forward_batch(S)[0][0]
        log_emission[:, h] = gaussian_logdensity(mu, A, policy.sigma)

    log_eta = np.empty((T, K))
    if uniform_high:
        log_eta[:] = -np.log(k)
    else:
        outputs = policy.high.forward_batch(S)[0]
        if hybrid:
            log_probs = log_softmax(outputs[1], axis=1)
            log_eta[:, :k] = log_probs[:, 1:]
            log_eta[:, k] = log_probs[:, 0]
            log_emission[:, k] = gaussian_logdensity(outputs[0], A, policy.sigma)
        else:
            log_eta[:] = log_softmax(outputs[0], axis=1)

    log_psi = np.zeros((T, K))
    log_stay = np.full((T, K), -np.inf)
    if T > 1:
        S_next = traj.state_matrix[1:T]
        for h, option in enumerate(policy.options):
            z = option.termination.forward_batch(S_next)[0][0][:, 0]
            log_psi[1:, h] = log_expit(z)
            log_stay[1:, h] = log_expit(-z)
    return StepTerms(log_emission, log_eta, log_psi, log_stay, k, hybrid)


def _as_dynamics(dynamics_log: Optional[Sequence[float]], T: int) -> float:
    if dynamics_log is None:
        return 0.0
    values = np.asarray(dynamics_log, dtype=np.float64)
    if values.shape != (T,):
        raise DimensionError(f"dynamics_log must have length T={T}, got shape {values.shape}")
    return float(np.sum(values))


def message_pass(terms: StepTerms) -> MessageTable:
    """Scaled forward and backward recursions"""
    T, K = terms.T, terms.K
    shift = np.max(terms.log_emission, axis=1)
    if not np.all(np.isfinite(shift)):
        bad = int(np.argmin(np.isfinite(shift)))
        raise InferenceError(f"non-finite emission log-density at t={bad}")
    emission = np.exp(terms.log_emission - shift[:, None])
    eta = np.exp(terms.log_eta)
    psi = np.exp(terms.log_psi)
    stay = np.exp(terms.log_stay)

    alpha = np.empty((T, K))
    fresh = np.empty((T, K))
    pre = np.empty((T, K))
    scale = np.empty(T)

    fresh[0] = eta[0]
    pre[0] = eta[0]
    for t in range(T):
        if t > 0:
            fresh[t] = np.dot(alpha[t - 1], psi[t]) * eta[t]
            pre[t] = fresh[t] + alpha[t - 1] * stay[t]
        joint = pre[t] * emission[t]
        mass = joint.sum()
        if not (np.isfinite(mass) and mass > 0.0):
            raise InferenceError(f"forward mass underflow at t={t} (mass={mass!r})")
        scale[t] = mass
        alpha[t] = joint / mass

    beta = np.empty((T, K))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        carried = emission[t + 1] * beta[t + 1]
        renewed = np.dot(eta[t + 1], carried)
        beta[t] = (psi[t + 1] * renewed + stay[t + 1] * carried) / scale[t + 1]
        if not np.all(np.isfinite(beta[t])):
            raise InferenceError(f"non-finite backward message at t={t}")

    return MessageTable(alpha, beta, scale, shift, fresh, pre, emission, psi, stay)


def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    return np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0.0)


def posteriors_from_messages(table: MessageTable, terms: StepTerms, dynamics: float = 0.0) -> PosteriorTables:
    T, k = terms.T, terms.k
    occupancy = table.alpha * table.beta
    occupancy = occupancy / occupancy.sum(axis=1, keepdims=True)
    selected = occupancy * _ratio(table.fresh, table.pre)

    if T > 1:
        continuing = table.stay[1:] * table.emission[1:] * table.beta[1:] / table.scale[1:, None]
        staying = occupancy[:-1] * _ratio(continuing, table.beta[:-1])
    else:
        staying = np.zeros((0, terms.K))

    vc = selected[:, k].copy() if terms.hybrid else None
    return PosteriorTables(
        u=occupancy[:, :k].copy(),
        v=selected[:, :k].copy(),
        w=staying[:, :k].copy(),
        vc=vc,
        loglik=table.loglik + dynamics,
    )


def forward_backward(policy: HierarchicalPolicy,
                     traj: Trajectory,
                     uniform_high: bool = False,
                     dynamics_log: Optional[Sequence[float]] = None) -> PosteriorTables:
    """
    Exact posterior marginals and log-likelihood of one trajectory.

    Args:
        policy: Hierarchical policy (evaluated in eval mode)
        traj: Trajectory whose dimensions match the policy
        uniform_high: Use a uniform eta over the options and no h^c
        dynamics_log: Optional per-step log p(s_{t+1} | s_t, a_t), with log p_0(s_0)
            folded into the first entry; shifts loglik only

    Returns:
        PosteriorTables with u, v, w (and vc for the hybrid head)
    """
    terms = step_terms(policy, traj, uniform_high)
    table = message_pass(terms)
    return posteriors_from_messages(table, terms, _as_dynamics(dynamics_log, traj.T))


def trajectory_loglikelihood(policy: AnyPolicy,
                             traj: Trajectory,
                             dynamics_log: Optional[Sequence[float]] = None) -> float:
    """log sum over latent paths of p(latents, trajectory), up to the dynamics terms"""
    if isinstance(policy, FlatPolicy):
        _check_dims(policy, traj)
        mu = policy.network.forward_batch(traj.state_matrix[:-1])[0][0]
        logp = gaussian_logdensity(mu, traj.control_matrix, policy.sigma)
        return float(np.sum(logp)) + _as_dynamics(dynamics_log, traj.T)
    terms = step_terms(policy, traj)
    return message_pass(terms).loglik + _as_dynamics(dynamics_log, traj.T)


def brute_force_posteriors(policy: HierarchicalPolicy,
                           traj: Trajectory,
                           uniform_high: bool = False,
                           dynamics_log: Optional[Sequence[float]] = None) -> PosteriorTables:
    """
    Posterior tables by enumerating every latent path (test oracle).

    A path is a sequence of choices c_t: a newly selected latent value
    (0..K-1, b_t = 1) or K meaning "continue the current option" (b_t = 0).
    """
    terms = step_terms(policy, traj, uniform_high)
    T, K, k = terms.T, terms.K, terms.k
    if T > MAX_ENUMERATION_T or K > MAX_ENUMERATION_K:
        raise EnumerationTooLarge(
            f"enumeration limited to T <= {MAX_ENUMERATION_T} and K <= {MAX_ENUMERATION_K}, got T={T}, K={K}")

    choices = np.array(list(itertools.product(range(K), *[range(K + 1)] * (T - 1))), dtype=int)
    choices = choices.reshape(-1, T)

    renewed = choices < K
    options = np.empty_like(choices)
    options[:, 0] = choices[:, 0]
    for t in range(1, T):
        options[:, t] = np.where(renewed[:, t], choices[:, t], options[:, t - 1])

    # continuing after h^c has log_stay = -inf, so those paths get zero weight
    log_weight = terms.log_emission[0, options[:, 0]] + terms.log_eta[0, options[:, 0]]
    for t in range(1, T):
        previous = options[:, t - 1]
        current = options[:, t]
        step = np.where(
            renewed[:, t],
            terms.log_psi[t, previous] + terms.log_eta[t, current],
            terms.log_stay[t, previous],
        )
        log_weight = log_weight + step + terms.log_emission[t, current]

    total = logsumexp(log_weight)
    if not np.isfinite(total):
        raise InferenceError("every latent path has zero probability")
    weight = np.exp(log_weight - total)

    u = np.zeros((T, K))
    v = np.zeros((T, K))
    w = np.zeros((max(T - 1, 0), K))
    for t in range(T):
        u[t] = np.bincount(options[:, t], weights=weight, minlength=K)
        v[t] = np.bincount(options[:, t], weights=weight * renewed[:, t], minlength=K)
        if t < T - 1:
            w[t] = np.bincount(options[:, t], weights=weight * ~renewed[:, t + 1], minlength=K)

    return PosteriorTables(
        u=u[:, :k],
        v=v[:, :k],
        w=w[:, :k],
        vc=v[:, k].copy() if terms.hybrid else None,
        loglik=float(total) + _as_dynamics(dynamics_log, T),
    )


def annotate_segments(policy: HierarchicalPolicy, traj: Trajectory) -> np.ndarray:
    """Most likely latent value per step; ties go to the lowest index, h^c is label k"""
    post = forward_backward(policy, traj)
    return np.argmax(post.occupancy(), axis=1)


def segment_dataset(policy: HierarchicalPolicy, dataset: Dataset, jobs: Optional[int] = None) -> List[np.ndarray]:
    orchestrator = JobOrchestrator(jobs)
    return orchestrator.map(lambda traj: annotate_segments(policy, traj), dataset.trajectories, prefix="segment")


def dataset_posteriors(policy: HierarchicalPolicy,
                       dataset: Dataset,
                       uniform_high: bool = False,
                       jobs: Optional[int] = None) -> List[PosteriorTables]:
    """E-step over every trajectory against a fixed parameter snapshot"""
    orchestrator = JobOrchestrator(jobs)
    return orchestrator.map(lambda traj: forward_backward(policy, traj, uniform_high),
                            dataset.trajectories, prefix="estep")


def dataset_loglikelihoods(policy: AnyPolicy, dataset: Dataset, jobs: Optional[int] = None) -> pd.DataFrame:
    """Per-trajectory log-likelihood table (trajectory, T, loglik, loglik_per_step)"""
    orchestrator = JobOrchestrator(jobs)
    values = orchestrator.map(lambda traj: trajectory_loglikelihood(policy, traj),
                              dataset.trajectories, prefix="loglik")
    lengths = [traj.T for traj in dataset]
    return pd.DataFrame({
        "trajectory": np.arange(len(dataset)),
        "T": lengths,
        "loglik": values,
        "loglik_per_step": np.asarray(values) / np.asarray(lengths),
    })


def heldout_loglik_per_step(policy: AnyPolicy, dataset: Dataset, jobs: Optional[int] = None) -> float:
    """Total log-likelihood divided by the total number of steps"""
    table = dataset_loglikelihoods(policy, dataset, jobs)
    return float(table["loglik"].sum() / table["T"].sum())


def high_level_usage(policy: HierarchicalPolicy, dataset: Dataset) -> Dict[str, Union[float, np.ndarray]]:
    """
    Mean probability the high-level policy places on each option and on h^c,
    averaged over every state at which a selection can happen (s_0..s_{T-1}).
    """
    states, _ = dataset.pairs()
    outputs = policy.high.forward_batch(states)[0]
    if policy.is_hybrid:
        probs = np.exp(log_softmax(outputs[1], axis=1))
        per_option = probs[:, 1:].mean(axis=0)
        hc_mass = float(probs[:, 0].mean())
    else:
        per_option = np.exp(log_softmax(outputs[0], axis=1)).mean(axis=0)
        hc_mass = 0.0
    return {
        "per_option": per_option,
        "option_mass": float(per_option.sum()),
        "hc_mass": hc_mass,
    }


def write_loglik_csv(table: pd.DataFrame, path: Union[str, Path]) -> None:
    table.to_csv(path, index=False, float_format="%.17g")
